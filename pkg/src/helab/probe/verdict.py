"""Verdicts: what a sweep concluded about a client."""

from __future__ import annotations

from dataclasses import dataclass, field

SCHEMA_VERSION = 1


@dataclass
class Verdict:
    """Measured client behavior.  None means "not measured by this plan",
    never "measured as absent"."""

    target_kind: str
    mode: str
    client: str = ""
    prefers_ipv6: bool | None = None
    aaaa_first: bool | None = None
    cad_impl: bool | None = None
    cad_estimate_ms: float | None = None
    cad_interval: tuple[int | None, int | None] | None = None
    rd_impl: bool | None = None
    rd_estimate_ms: float | None = None
    waits_for_a: bool | None = None
    v6_addresses_used: int | None = None
    v4_addresses_used: int | None = None
    address_sequence: list[str] | None = None
    transition: tuple[int | None, int | None] | None = None
    outlier_points: list[int] = field(default_factory=list)
    consistency: dict | None = None
    grid: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if self.cad_impl:
            has_est = self.cad_estimate_ms is not None
            has_int = self.cad_interval is not None
            if has_est == has_int:
                raise ValueError("cad_impl set: need exactly one of estimate or interval")

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "target_kind": self.target_kind,
            "mode": self.mode,
            "client": self.client,
            "prefers_ipv6": self.prefers_ipv6,
            "aaaa_first": self.aaaa_first,
            "cad_impl": self.cad_impl,
            "cad_estimate_ms": self.cad_estimate_ms,
            "cad_interval": list(self.cad_interval) if self.cad_interval else None,
            "rd_impl": self.rd_impl,
            "rd_estimate_ms": self.rd_estimate_ms,
            "waits_for_a": self.waits_for_a,
            "v6_addresses_used": self.v6_addresses_used,
            "v4_addresses_used": self.v4_addresses_used,
            "address_sequence": self.address_sequence,
            "transition": list(self.transition) if self.transition else None,
            "outlier_points": self.outlier_points,
            "consistency": self.consistency,
            "grid": self.grid,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Verdict":
        raw = dict(raw)
        raw.pop("schema", None)
        if raw.get("cad_interval") is not None:
            raw["cad_interval"] = tuple(raw["cad_interval"])
        if raw.get("transition") is not None:
            raw["transition"] = tuple(raw["transition"])
        return cls(**raw)
