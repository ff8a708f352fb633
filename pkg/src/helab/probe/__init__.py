"""Black-box measurement of client connection behavior.

A TestPlan names the property under test (connection attempt delay,
resolution delay, address selection), the client to exercise, and the sweep
grids; sweep() runs it in simnet or against the real lab servers and returns
a Verdict.
"""

from .plan import ClientSpec, DelayGrid, FineSpec, NetworkSpec, TargetKind, TestPlan, UnsupportedPlan
from .verdict import Verdict
from .runner import sweep
from .report import render_report

__all__ = [
    "ClientSpec",
    "DelayGrid",
    "FineSpec",
    "NetworkSpec",
    "TargetKind",
    "TestPlan",
    "UnsupportedPlan",
    "Verdict",
    "sweep",
    "render_report",
]
