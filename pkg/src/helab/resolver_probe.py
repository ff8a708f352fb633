"""Recursive-resolver behavior: campaign construction and trace classification.

A campaign gives every tested delay its own zone with unique name-server
names, so the resolver under test must look those names up fresh each time;
how it does so (AAAA before A, only one of them, backing off, falling back)
is visible in the authoritative query log.  classify() turns per-zone traces
of that log into a ResolverVerdict.

ipv6_share counts resolutions that tried IPv6 first, and the max-delay-used
figure counts only resolutions completed without an IPv4 retry; both are
lower-bound style metrics that stay meaningful for resolvers which always
fall back eventually.
"""

from __future__ import annotations

import argparse
import enum
import json
import pathlib
import statistics
import sys
from dataclasses import dataclass, field

from .dns_lab import ZoneSpec, fresh_nonce, synthesize_resolver_zones
from .types import Family

PARALLEL_WINDOW_MS = 10
BACKOFF_RATIO = 1.5


class AaaaQueryBehavior(str, enum.Enum):
    AAAA_BEFORE_A = "aaaa_before_a"
    AAAA_AFTER_A = "aaaa_after_a"
    AAAA_AFTER_V4_AUTH_QUERY = "aaaa_after_v4_auth_query"
    EITHER_NOT_BOTH = "either_not_both"
    NONE = "none"


@dataclass(frozen=True)
class TraceEvent:
    ts_ms: int
    family: Family
    qtype: str
    qname: str


@dataclass
class ResolverTrace:
    """All queries one resolution caused at the authoritative server."""

    zone_apex: str
    delay_ms: int
    ns_names: tuple[str, ...]
    events: list[TraceEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.zone_apex = self.zone_apex.lower().rstrip(".") + "."
        self.ns_names = tuple(n.lower().rstrip(".") + "." for n in self.ns_names)
        if any(
            self.events[i].ts_ms > self.events[i + 1].ts_ms
            for i in range(len(self.events) - 1)
        ):
            raise ValueError("trace events must be time-ordered")

    def ns_lookups(self) -> list[TraceEvent]:
        return [e for e in self.events if e.qname.lower().rstrip(".") + "." in self.ns_names]

    def auth_queries(self) -> list[TraceEvent]:
        ns = set(self.ns_names)
        return [e for e in self.events if e.qname.lower().rstrip(".") + "." not in ns]


@dataclass
class ResolverVerdict:
    aaaa_query_behavior: AaaaQueryBehavior
    ipv6_share: float
    max_ipv6_delay_used_ms: int | None
    ipv6_packets_per_resolution: int
    interleaves: bool
    cad_estimate_ms: float | None
    parallel_queries: bool
    backoff_detected: bool

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "aaaa_query_behavior": self.aaaa_query_behavior.value,
            "ipv6_share": self.ipv6_share,
            "max_ipv6_delay_used_ms": self.max_ipv6_delay_used_ms,
            "ipv6_packets_per_resolution": self.ipv6_packets_per_resolution,
            "interleaves": self.interleaves,
            "cad_estimate_ms": self.cad_estimate_ms,
            "parallel_queries": self.parallel_queries,
            "backoff_detected": self.backoff_detected,
        }


def _trace_ns_behavior(trace: ResolverTrace) -> str:
    ns_events = trace.ns_lookups()
    a_ts = next((e.ts_ms for e in ns_events if e.qtype == "A"), None)
    aaaa_ts = next((e.ts_ms for e in ns_events if e.qtype == "AAAA"), None)
    if a_ts is None and aaaa_ts is None:
        return "none"
    if aaaa_ts is None:
        return "a_only"
    if a_ts is None:
        return "aaaa_only"
    first_v4_auth = next(
        (e.ts_ms for e in trace.auth_queries() if e.family is Family.IPV4), None
    )
    if first_v4_auth is not None and aaaa_ts > first_v4_auth:
        return "after_v4_auth"
    return "before" if aaaa_ts <= a_ts else "after_a"


def _aggregate_behavior(traces: list[ResolverTrace]) -> AaaaQueryBehavior:
    kinds = [_trace_ns_behavior(t) for t in traces]
    seen = [k for k in kinds if k != "none"]
    if not seen:
        return AaaaQueryBehavior.NONE
    single = {k for k in seen if k in ("a_only", "aaaa_only")}
    if single and all(k in ("a_only", "aaaa_only") for k in seen):
        if len(single) == 2:
            return AaaaQueryBehavior.EITHER_NOT_BOTH
        # Only ever one record type: no AAAA at all means no behavior to name.
        return (
            AaaaQueryBehavior.NONE
            if single == {"a_only"}
            else AaaaQueryBehavior.AAAA_BEFORE_A
        )
    counted = [k for k in seen if k in ("before", "after_a", "after_v4_auth")]
    if not counted:
        return AaaaQueryBehavior.NONE
    top = max(set(counted), key=counted.count)
    return {
        "before": AaaaQueryBehavior.AAAA_BEFORE_A,
        "after_a": AaaaQueryBehavior.AAAA_AFTER_A,
        "after_v4_auth": AaaaQueryBehavior.AAAA_AFTER_V4_AUTH_QUERY,
    }[top]


def _max_run(families: list[Family], wanted: Family) -> int:
    best = run = 0
    for fam in families:
        run = run + 1 if fam is wanted else 0
        best = max(best, run)
    return best


def _switches(families: list[Family]) -> int:
    return sum(1 for a, b in zip(families, families[1:]) if a is not b)


def _has_backoff(times: list[int], ratio: float) -> bool:
    gaps = [b - a for a, b in zip(times, times[1:])]
    return any(g1 > 0 and g2 >= ratio * g1 for g1, g2 in zip(gaps, gaps[1:]))


def classify(
    traces: list[ResolverTrace],
    parallel_window_ms: int = PARALLEL_WINDOW_MS,
    backoff_ratio: float = BACKOFF_RATIO,
) -> ResolverVerdict:
    """Condense campaign traces into one verdict for the resolver."""
    if not traces:
        raise ValueError("no traces to classify")

    v6_first = 0
    counted_traces = 0
    pure_v6_delays: list[int] = []
    packets = 0
    interleaves = False
    gaps: list[float] = []
    parallel = False
    backoff = False

    for trace in traces:
        auth = trace.auth_queries()
        fams = [e.family for e in auth]
        if fams:
            counted_traces += 1
            if fams[0] is Family.IPV6:
                v6_first += 1
        first_v6 = next((e.ts_ms for e in auth if e.family is Family.IPV6), None)
        first_v4 = next((e.ts_ms for e in auth if e.family is Family.IPV4), None)
        if first_v6 is not None and first_v4 is None:
            pure_v6_delays.append(trace.delay_ms)
        packets = max(packets, _max_run(fams, Family.IPV6))
        if _switches(fams) >= 2:
            interleaves = True
        if first_v6 is not None and first_v4 is not None:
            if abs(first_v4 - first_v6) <= parallel_window_ms:
                parallel = True
            elif first_v4 > first_v6:
                gaps.append(float(first_v4 - first_v6))
        for fam in (Family.IPV6, Family.IPV4):
            times = [e.ts_ms for e in auth if e.family is fam]
            if _has_backoff(times, backoff_ratio):
                backoff = True

    cad = None
    if gaps and not parallel:
        cad = float(statistics.median(gaps))
    return ResolverVerdict(
        aaaa_query_behavior=_aggregate_behavior(traces),
        ipv6_share=(v6_first / counted_traces) if counted_traces else 0.0,
        max_ipv6_delay_used_ms=max(pure_v6_delays) if pure_v6_delays else None,
        ipv6_packets_per_resolution=packets,
        interleaves=interleaves,
        cad_estimate_ms=cad,
        parallel_queries=parallel,
        backoff_detected=backoff,
    )


# -- campaigns --------------------------------------------------------------------


@dataclass
class Campaign:
    base_apex: str
    zones: list[ZoneSpec]
    query_names: list[str]

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "base_apex": self.base_apex,
            "zones": [z.to_dict() for z in self.zones],
            "query_names": self.query_names,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Campaign":
        return cls(
            base_apex=raw["base_apex"],
            zones=[ZoneSpec.from_dict(z) for z in raw["zones"]],
            query_names=list(raw["query_names"]),
        )

    def write(self, out_dir: str) -> pathlib.Path:
        out = pathlib.Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "campaign.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / "zones.json", "w", encoding="utf-8") as fh:
            json.dump([z.to_dict() for z in self.zones], fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / "queries.txt", "w", encoding="utf-8") as fh:
            fh.write("".join(name + "\n" for name in self.query_names))
        return path


def build_campaign(
    delays_ms: list[int],
    base_apex: str = "rr-lab.example.",
    server_v4: tuple[str, ...] = ("127.0.0.1",),
    server_v6: tuple[str, ...] = ("::1",),
    glue: bool = True,
) -> Campaign:
    """One zone and one test query name per delay."""
    zones = synthesize_resolver_zones(
        delays_ms, base_apex=base_apex, server_v4=server_v4, server_v6=server_v6, glue=glue
    )
    names = []
    for zone in zones:
        name = f"t-{fresh_nonce(6)}.{zone.apex}"
        zone.a_records[name] = server_v4
        zone.aaaa_records[name] = server_v6
        names.append(name)
    return Campaign(base_apex=base_apex, zones=zones, query_names=names)


def load_traces(traces_dir: str, campaign: Campaign) -> list[ResolverTrace]:
    """Group query-log events (dns_lab JSONL) into one trace per zone."""
    events = []
    for path in sorted(pathlib.Path(traces_dir).glob("*.jsonl")):
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                if row.get("event") != "query":
                    continue
                events.append(row)
    traces = []
    for zone in campaign.zones:
        mine = [
            e
            for e in events
            if (e.get("qname", "").lower().rstrip(".") + ".").endswith(zone.apex)
        ]
        mine.sort(key=lambda e: e["ts_ms"])
        traces.append(
            ResolverTrace(
                zone_apex=zone.apex,
                delay_ms=zone.delay_ms,
                ns_names=zone.ns_names,
                events=[
                    TraceEvent(
                        ts_ms=int(e["ts_ms"]),
                        family=Family(e["family"]),
                        qtype=str(e["qtype"]),
                        qname=str(e["qname"]),
                    )
                    for e in mine
                ],
            )
        )
    return traces


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="resolver-probe", description="Recursive resolver behavior measurement"
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_camp = sub.add_parser("campaign", help="synthesize zones for a delay campaign")
    p_camp.add_argument("--delays", required=True, help="comma-separated delays in ms")
    p_camp.add_argument("--base-zone", default="rr-lab.example.")
    p_camp.add_argument("--server-v4", action="append", default=None)
    p_camp.add_argument("--server-v6", action="append", default=None)
    p_camp.add_argument("--no-glue", action="store_true")
    p_camp.add_argument("--out", required=True, help="output directory")

    p_cls = sub.add_parser("classify", help="classify captured traces")
    p_cls.add_argument("--traces", required=True, help="directory of query-log JSONL files")
    p_cls.add_argument("--campaign", required=True, help="campaign.json from the campaign step")
    p_cls.add_argument("--json", default=None, help="write verdict JSON here")

    args = parser.parse_args(argv)
    if args.cmd == "campaign":
        delays = [int(x) for x in args.delays.split(",") if x.strip()]
        campaign = build_campaign(
            delays,
            base_apex=args.base_zone,
            server_v4=tuple(args.server_v4 or ("127.0.0.1",)),
            server_v6=tuple(args.server_v6 or ("::1",)),
            glue=not args.no_glue,
        )
        path = campaign.write(args.out)
        print(f"campaign with {len(campaign.zones)} zones written to {path}")
        return 0

    with open(args.campaign, encoding="utf-8") as fh:
        campaign = Campaign.from_dict(json.load(fh))
    traces = load_traces(args.traces, campaign)
    verdict = classify(traces)
    payload = verdict.to_dict()
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
