"""Human-readable rendering of a Verdict: one feature matrix per client."""

from __future__ import annotations

from .verdict import Verdict

FULL = "●"  # filled circle: feature present / fully consistent
HALF = "◐"  # half circle: partly
EMPTY = "○"  # open circle: absent
UNKNOWN = "-"


def _mark(flag: bool | None) -> str:
    if flag is None:
        return UNKNOWN
    return FULL if flag else EMPTY


def _interval_text(interval) -> str:
    lo, hi = interval
    lo_s = "-inf" if lo is None else str(lo)
    return f"({lo_s}, {hi}]" if hi is not None else f"({lo_s}, inf)"


def _consistency_mark(consistency: dict | None) -> tuple[str, str]:
    if not consistency:
        return UNKNOWN, ""
    total = consistency.get("total_repetitions", 0)
    bad = consistency.get("inconsistent_repetitions", 0)
    if not total:
        return UNKNOWN, ""
    frac = bad / total
    mark = FULL if frac == 0 else (HALF if frac <= 0.2 else EMPTY)
    return mark, f"({bad}/{total} repetitions off-pattern)"


def render_report(verdict: Verdict) -> str:
    lines = [
        f"client           {verdict.client or '(unnamed)'}",
        f"measurement      {verdict.target_kind} [{verdict.mode}]",
        f"  prefers IPv6          {_mark(verdict.prefers_ipv6)}",
        f"  AAAA queried first    {_mark(verdict.aaaa_first)}",
    ]

    cad = _mark(verdict.cad_impl)
    if verdict.cad_estimate_ms is not None:
        cad += f"  {verdict.cad_estimate_ms:.0f} ms"
    elif verdict.cad_interval is not None:
        cad += f"  {_interval_text(verdict.cad_interval)} ms"
    lines.append(f"  conn. attempt delay   {cad}")

    rd = _mark(verdict.rd_impl)
    if verdict.rd_estimate_ms is not None:
        rd += f"  {verdict.rd_estimate_ms:.0f} ms"
    lines.append(f"  resolution delay      {rd}")

    if verdict.waits_for_a is not None:
        lines.append(f"  waits for A answer    {_mark(verdict.waits_for_a)}")
    if verdict.v6_addresses_used is not None or verdict.v4_addresses_used is not None:
        lines.append(
            f"  addresses used v6/v4  "
            f"{verdict.v6_addresses_used or 0}/{verdict.v4_addresses_used or 0}"
        )
    mark, detail = _consistency_mark(verdict.consistency)
    lines.append(f"  consistency           {mark}  {detail}".rstrip())
    if verdict.transition is not None:
        lines.append(f"  transition bracket    {_interval_text(verdict.transition)} ms")
    for note in verdict.notes:
        lines.append(f"  note: {note}")
    return "\n".join(lines) + "\n"
