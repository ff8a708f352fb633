"""Test plans: what to measure, against which client, over which grids."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, asdict

from ..he_core import HEConfig, Interleave, ProtocolPreference, Version
from ..types import Family


class UnsupportedPlan(RuntimeError):
    """The plan asks for a combination this setup cannot measure honestly."""


class TargetKind(str, enum.Enum):
    CAD = "cad"  # sweep IPv6 connect delay, find the fallback threshold
    RD = "rd"  # sweep AAAA response delay, find the resolution delay
    RD_A_DELAY = "rd_a_delay"  # sweep A response delay, detect waiting for A
    ADDRESS_SELECTION = "address_selection"  # many addresses, observe the order


@dataclass
class DelayGrid:
    start_ms: int = 0
    stop_ms: int = 2000
    step_ms: int = 100

    def __post_init__(self) -> None:
        if self.step_ms <= 0 or self.stop_ms < self.start_ms:
            raise ValueError("bad delay grid")

    def points(self) -> list[int]:
        return list(range(self.start_ms, self.stop_ms + 1, self.step_ms))


@dataclass
class FineSpec:
    window_ms: int = 100
    step_ms: int = 5

    def __post_init__(self) -> None:
        if self.step_ms <= 0 or self.window_ms < 0:
            raise ValueError("bad fine spec")


@dataclass
class ClientSpec:
    """Who gets measured.

    kind "demo" runs the in-process reference client (profile "he",
    "no-fallback", or "wait-for-a"; config overrides HEConfig fields).
    kind "command" runs an external program; the template may use {url},
    {host}, {port}, and {dns}.
    """

    kind: str = "demo"
    profile: str = "he"
    config: dict = field(default_factory=dict)
    command: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("demo", "command"):
            raise ValueError(f"unknown client kind {self.kind!r}")
        if self.kind == "demo" and self.profile not in ("he", "no-fallback", "wait-for-a"):
            raise ValueError(f"unknown demo profile {self.profile!r}")
        if self.kind == "command" and not self.command:
            raise ValueError("command client needs a command template")


@dataclass
class NetworkSpec:
    # simnet: baseline scenario the sweep mutates per point
    scenario: dict = field(default_factory=dict)
    # real mode: where the lab servers bind
    v4_addr: str = "127.0.0.1"
    v6_addr: str = "::1"
    base_zone: str = "he-test.example."
    dns_port: int = 0  # 0 means pick a free port
    http_port: int = 0
    point_timeout_ms: int = 8000


@dataclass
class TestPlan:
    __test__ = False  # despite the name, not a pytest class

    target_kind: TargetKind = TargetKind.RD
    mode: str = "simnet"
    client: ClientSpec = field(default_factory=ClientSpec)
    coarse: DelayGrid = field(default_factory=DelayGrid)
    fine: FineSpec = field(default_factory=FineSpec)
    repetitions: int = 3
    reset_hook: str | None = None
    addresses_per_family: int = 10
    network: NetworkSpec = field(default_factory=NetworkSpec)
    horizon_ms: int = 30_000

    def __post_init__(self) -> None:
        if self.mode not in ("simnet", "real"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.fine.step_ms > self.coarse.step_ms:
            raise ValueError("fine step must not exceed coarse step")
        if self.addresses_per_family < 1:
            raise ValueError("addresses_per_family must be >= 1")

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["target_kind"] = self.target_kind.value
        raw["schema"] = 1
        return raw

    @classmethod
    def from_dict(cls, raw: dict) -> "TestPlan":
        raw = dict(raw)
        raw.pop("schema", None)
        kwargs: dict = {}
        if "target_kind" in raw:
            kwargs["target_kind"] = TargetKind(raw["target_kind"])
        for key in ("mode", "repetitions", "reset_hook", "addresses_per_family", "horizon_ms"):
            if key in raw:
                kwargs[key] = raw[key]
        if "client" in raw:
            kwargs["client"] = ClientSpec(**raw["client"])
        if "coarse" in raw:
            kwargs["coarse"] = DelayGrid(**raw["coarse"])
        if "fine" in raw:
            kwargs["fine"] = FineSpec(**raw["fine"])
        if "network" in raw:
            kwargs["network"] = NetworkSpec(**raw["network"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> "TestPlan":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def he_config_from_dict(raw: dict) -> HEConfig:
    """Build an HEConfig from JSON-friendly overrides."""
    kwargs: dict = {}
    if "version" in raw:
        v = raw["version"]
        kwargs["version"] = Version(int(v)) if not isinstance(v, Version) else v
    for key in (
        "connection_attempt_delay_ms",
        "cad_min_ms",
        "cad_recommended_ms",
        "cad_max_ms",
        "resolution_delay_ms",
        "first_address_family_count",
        "result_cache_ttl_s",
    ):
        if key in raw:
            kwargs[key] = int(raw[key])
    if "interleave" in raw:
        kwargs["interleave"] = Interleave(raw["interleave"])
    if "preferred_family" in raw:
        kwargs["preferred_family"] = Family(raw["preferred_family"])
    if "protocol_preference" in raw:
        kwargs["protocol_preference"] = tuple(
            ProtocolPreference(p) for p in raw["protocol_preference"]
        )
    return HEConfig(**kwargs)
