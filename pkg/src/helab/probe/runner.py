"""Sweep execution: run a plan point by point and condense the evidence.

A point is one client run at one swept delay.  Evidence comes from the
timeline: client-side events in simnet, server-side events (prefixed
"server.") in real mode, where the DNS log and the accept log are ground
truth regardless of what the client is.
"""

from __future__ import annotations

import ipaddress
import shlex
import statistics
import subprocess
import time
from dataclasses import dataclass, field

from .. import realnet, simnet
from ..dns_lab import DnsLabConfig, UdpDnsServer, Wallclock, fresh_nonce
from ..labd import DelayTier, LabdService, consistency_score, infer_cad_interval
from ..he_core import HEConfig
from ..timeline import EventTimeline
from ..types import Family, RecordType
from .demo_client import run_profile
from .plan import TargetKind, TestPlan, UnsupportedPlan, he_config_from_dict
from .verdict import Verdict

ATTEMPT_KINDS = ("connect.launch", "server.accept")
SUCCESS_KINDS = ("connect.success", "server.accept")

SIM_PORT = 443
SIM_NAME_SUFFIX = "target.test."


@dataclass
class PointResult:
    delay_ms: int
    repetition: int
    timeline: EventTimeline
    nonce: str
    family: Family | None = None  # who won (or attempted first) at this point
    first_v6_attempt_ms: int | None = None
    first_v4_attempt_ms: int | None = None
    a_response_ms: int | None = None
    aaaa_query_first: bool | None = None
    error: str | None = None


def _first_ts(timeline: EventTimeline, kinds, family: Family | None = None) -> int | None:
    for ev in timeline:
        if ev.kind not in kinds:
            continue
        if family is not None and ev.data.get("family") not in (family, family.value):
            continue
        return ev.t
    return None


def analyze_point(timeline: EventTimeline, delay_ms: int, repetition: int, nonce: str) -> PointResult:
    pr = PointResult(delay_ms=delay_ms, repetition=repetition, timeline=timeline, nonce=nonce)
    pr.first_v6_attempt_ms = _first_ts(timeline, ATTEMPT_KINDS, Family.IPV6)
    pr.first_v4_attempt_ms = _first_ts(timeline, ATTEMPT_KINDS, Family.IPV4)

    # Winner: prefer the server's accept log, then the outcome, then launches.
    accept = timeline.first("server.accept")
    if accept is not None:
        pr.family = Family(accept.data["family"])
    else:
        outcome = timeline.first("outcome")
        if outcome is not None and outcome.data.get("winner_family") is not None:
            pr.family = Family(outcome.data["winner_family"])
        elif pr.first_v6_attempt_ms is not None or pr.first_v4_attempt_ms is not None:
            v6 = pr.first_v6_attempt_ms
            v4 = pr.first_v4_attempt_ms
            if v4 is None or (v6 is not None and v6 <= v4):
                pr.family = Family.IPV6
            else:
                pr.family = Family.IPV4
        if outcome is not None and outcome.data.get("error"):
            pr.error = outcome.data["error"]

    # Str-valued enums compare equal to their values, so rtype="A" matches
    # both simnet (enum) and serialized (str) event data.
    a_resp = timeline.first("server.dns.response", qtype="A") or timeline.first(
        "dns.response", rtype="A"
    )
    if a_resp is not None:
        pr.a_response_ms = a_resp.t

    queries = [
        ev
        for ev in timeline
        if ev.kind in ("dns.query", "server.dns.query")
        and ev.data.get("rtype", ev.data.get("qtype")) in ("A", "AAAA", RecordType.A, RecordType.AAAA)
    ]
    if queries:
        first_rtype = queries[0].data.get("rtype", queries[0].data.get("qtype"))
        pr.aaaa_query_first = first_rtype in ("AAAA", RecordType.AAAA)
    return pr


# -- environments ---------------------------------------------------------------


def _doc_addresses(count: int) -> tuple[list[str], list[str]]:
    v4 = [str(ipaddress.IPv4Address("192.0.2.1") + i) for i in range(count)]
    v6 = [str(ipaddress.IPv6Address("2001:db8::1") + i) for i in range(count)]
    return v4, v6


class SimEnv:
    """Builds one fresh virtual network per point."""

    def __init__(self, plan: TestPlan) -> None:
        if plan.client.kind != "demo":
            raise UnsupportedPlan("simnet can only drive the in-process demo client")
        self.plan = plan
        self.base = simnet.Scenario.from_dict(plan.network.scenario)
        self.config = he_config_from_dict(plan.client.config)

    def close(self) -> None:
        pass

    def run_point(self, delay_ms: int, repetition: int, nonce: str) -> PointResult:
        plan = self.plan
        scenario = simnet.Scenario.from_dict(self.base.to_dict())
        kind = plan.target_kind
        if kind is TargetKind.CAD:
            for addr in scenario.answers_for(RecordType.AAAA):
                scenario.connect_delays[(addr, SIM_PORT)] = delay_ms
        elif kind is TargetKind.RD:
            scenario.dns_delays[RecordType.AAAA] = delay_ms
        elif kind is TargetKind.RD_A_DELAY:
            scenario.dns_delays[RecordType.A] = delay_ms
        elif kind is TargetKind.ADDRESS_SELECTION:
            v4, v6 = _doc_addresses(plan.addresses_per_family)
            scenario.dns_answers[RecordType.A] = tuple(v4)
            scenario.dns_answers[RecordType.AAAA] = tuple(v6)
            for addr in v4 + v6:
                scenario.connect_delays[(addr, SIM_PORT)] = simnet.BLACKHOLE

        name = f"{nonce}.{SIM_NAME_SUFFIX}"
        outcome_box = {}

        def program(ports):
            outcome_box["outcome"] = run_profile(
                ports,
                name,
                SIM_PORT,
                profile=plan.client.profile,
                config=self.config,
                max_wait_ms=None,
            )

        try:
            timeline = simnet.run(scenario, program, horizon_ms=plan.horizon_ms)
        except simnet.HorizonExceeded as exc:
            timeline = exc.timeline
        return analyze_point(timeline, delay_ms, repetition, nonce)


class RealEnv:
    """Self-hosted lab: in-process DNS server and HTTP target on loopback,
    sharing one clock epoch so client and server events line up."""

    def __init__(self, plan: TestPlan) -> None:
        if plan.target_kind is TargetKind.CAD:
            raise UnsupportedPlan(
                "real-mode CAD needs handshake shaping the lab does not do; use simnet"
            )
        self.plan = plan
        net = plan.network
        self.clock = Wallclock()
        self.base_zone = net.base_zone.rstrip(".") + "."
        if plan.target_kind is TargetKind.ADDRESS_SELECTION:
            v4, v6 = _doc_addresses(plan.addresses_per_family)
            v4_answers, v6_answers = tuple(v4), tuple(v6)
        else:
            v4_answers, v6_answers = (net.v4_addr,), (net.v6_addr,)

        tier = DelayTier(
            tier_index=0,
            delay_ms=0,
            domain=f"d0-none-sweep.{self.base_zone}",
            v4_endpoint=(net.v4_addr, net.http_port),
            v6_endpoint=(net.v6_addr, net.http_port),
        )
        self.labd = LabdService([tier], clock=self.clock, run_nonce=fresh_nonce(8))
        self.labd.start()
        self.http_port = self.labd.ladder[0].v4_endpoint[1]

        self.dns = UdpDnsServer(
            DnsLabConfig(
                base_zone=self.base_zone,
                v4_addresses=v4_answers,
                v6_addresses=v6_answers,
            ),
            listen=((net.v4_addr, net.dns_port),),
            clock=self.clock,
        )
        self.dns.start()
        self.dns_addr = self.dns.addresses[0]
        self.config = he_config_from_dict(plan.client.config)

    def close(self) -> None:
        self.dns.stop()
        self.labd.stop()

    def _encoded_name(self, delay_ms: int, nonce: str) -> str:
        kind = self.plan.target_kind
        if kind is TargetKind.RD:
            token = "aaaa"
        elif kind is TargetKind.RD_A_DELAY:
            token = "a"
        else:
            token, delay_ms = "none", 0
        return f"d{delay_ms}-{token}-{nonce}.{self.base_zone}"

    def run_point(self, delay_ms: int, repetition: int, nonce: str) -> PointResult:
        plan = self.plan
        name = self._encoded_name(delay_ms, nonce)
        dns_mark = len(self.dns.query_log)
        accept_mark = len(self.labd.accept_log)
        start_ms = self.clock.now()

        client_timeline = EventTimeline()
        if plan.client.kind == "demo":
            ports = realnet.make_ports(self.dns_addr, clock=self.clock)
            run_profile(
                ports,
                name,
                self.http_port,
                profile=plan.client.profile,
                config=self.config,
                max_wait_ms=plan.network.point_timeout_ms,
            )
            ports.transport.close_all()
            client_timeline = ports.clock.timeline
        else:
            url = f"http://{name.rstrip('.')}:{self.http_port}/echo"
            cmd = plan.client.command.format(
                url=url,
                host=name.rstrip("."),
                port=self.http_port,
                dns=f"{self.dns_addr[0]}:{self.dns_addr[1]}",
            )
            try:
                subprocess.run(
                    shlex.split(cmd),
                    capture_output=True,
                    timeout=plan.network.point_timeout_ms / 1000.0,
                )
            except (subprocess.TimeoutExpired, OSError):
                pass

        # The client's connect() returns on handshake completion, a beat
        # before the server thread logs the accept; wait that beat out.
        expected_accepts = sum(1 for ev in client_timeline if ev.kind == "connect.success")
        deadline = time.monotonic() + 0.5
        while (
            len(self.labd.accept_log) - accept_mark < expected_accepts
            and time.monotonic() < deadline
        ):
            time.sleep(0.005)

        merged = EventTimeline(list(client_timeline))
        for entry in self.dns.query_log.snapshot()[dns_mark:]:
            if nonce not in str(entry.get("qname", "")):
                continue
            kind = "server.dns.query" if entry.get("event") == "query" else "server.dns.response"
            data = {k: v for k, v in entry.items() if k not in ("event", "ts_ms")}
            merged.record(entry["ts_ms"], kind, **data)
        for ev in self.labd.accept_log.snapshot()[accept_mark:]:
            if ev.ts_ms < start_ms:
                continue  # straggler from an earlier point
            merged.record(
                ev.ts_ms, "server.accept", family=ev.family, client=ev.client, port=ev.port
            )
        merged.events.sort(key=lambda e: e.t)
        return analyze_point(merged, delay_ms, repetition, nonce)


# -- the sweep itself -------------------------------------------------------------


def _majority_family(points: list[PointResult]) -> Family | None:
    fams = [p.family for p in points if p.family is not None]
    if not fams:
        return None
    v6 = sum(1 for f in fams if f is Family.IPV6)
    v4 = len(fams) - v6
    return Family.IPV6 if v6 > v4 else Family.IPV4


def _point_estimate(pr: PointResult, kind: TargetKind) -> float | None:
    """Per-point delay estimate: attempt gap (CAD) or attempt-after-A gap (RD)."""
    if kind is TargetKind.CAD:
        if pr.first_v6_attempt_ms is None or pr.first_v4_attempt_ms is None:
            return None
        return float(pr.first_v4_attempt_ms - pr.first_v6_attempt_ms)
    if kind in (TargetKind.RD, TargetKind.RD_A_DELAY):
        if pr.first_v4_attempt_ms is None or pr.a_response_ms is None:
            return None
        return float(pr.first_v4_attempt_ms - pr.a_response_ms)
    return None


def _run_grid(env, delays: list[int], plan: TestPlan, results: dict, nonces: set) -> None:
    counter = len(nonces)
    for delay in delays:
        bucket = results.setdefault(delay, [])
        have = len(bucket)
        for rep in range(have, have + max(0, plan.repetitions - have)):
            counter += 1
            nonce = f"p{counter:04d}{fresh_nonce(4)}"
            if nonce in nonces:
                raise RuntimeError("nonce collision across points")
            nonces.add(nonce)
            bucket.append(env.run_point(delay, rep, nonce))
            if plan.reset_hook:
                subprocess.run(plan.reset_hook, shell=True, capture_output=True)


def sweep(plan: TestPlan) -> Verdict:
    """Run the whole plan: coarse grid, fine grid around the transition, then
    verdict assembly."""
    env = SimEnv(plan) if plan.mode == "simnet" else RealEnv(plan)
    try:
        return _sweep_with_env(env, plan)
    finally:
        env.close()


def _sweep_with_env(env, plan: TestPlan) -> Verdict:
    kind = plan.target_kind
    client_desc = (
        f"demo:{plan.client.profile}" if plan.client.kind == "demo" else plan.client.command
    )
    verdict = Verdict(target_kind=kind.value, mode=plan.mode, client=client_desc)
    results: dict[int, list[PointResult]] = {}
    nonces: set[str] = set()

    if kind is TargetKind.ADDRESS_SELECTION:
        _run_grid(env, [0], plan, results, nonces)
        points = results[0]
        launches = [ev for ev in points[0].timeline if ev.kind == "connect.launch"]
        seq = [Family(ev.data["family"]).value for ev in launches]
        verdict.address_sequence = seq
        v6_addrs = {ev.data["address"] for ev in launches if Family(ev.data["family"]) is Family.IPV6}
        v4_addrs = {ev.data["address"] for ev in launches if Family(ev.data["family"]) is Family.IPV4}
        verdict.v6_addresses_used = len(v6_addrs)
        verdict.v4_addresses_used = len(v4_addrs)
        verdict.prefers_ipv6 = bool(seq) and seq[0] == Family.IPV6.value
        verdict.aaaa_first = points[0].aaaa_query_first
        verdict.grid = _grid_rows(results)
        return verdict

    _run_grid(env, plan.coarse.points(), plan, results, nonces)

    interval = _interval_from(results)
    if interval is not None and interval.hi_ms is not None:
        lo_edge = interval.lo_ms if interval.lo_ms is not None else 0
        fine_lo = max(plan.coarse.start_ms, min(lo_edge, interval.hi_ms - plan.fine.window_ms))
        fine_hi = min(plan.coarse.stop_ms, interval.hi_ms + plan.fine.window_ms)
        fine_points = [
            d
            for d in range(fine_lo, fine_hi + 1, plan.fine.step_ms)
            if d not in results
        ]
        _run_grid(env, fine_points, plan, results, nonces)
        interval = _interval_from(results)

    verdict.grid = _grid_rows(results)
    _assemble(verdict, results, interval, plan)
    return verdict


def _interval_from(results: dict[int, list[PointResult]]):
    pairs = []
    for delay, points in results.items():
        fam = _majority_family(points)
        if fam is not None:
            pairs.append((delay, fam))
    if len({d for d, _ in pairs}) < 2:
        return None
    return infer_cad_interval(pairs)


def _grid_rows(results: dict[int, list[PointResult]]) -> list[dict]:
    rows = []
    for delay in sorted(results):
        for pr in results[delay]:
            rows.append(
                {
                    "delay_ms": delay,
                    "repetition": pr.repetition,
                    "family": pr.family.value if pr.family else None,
                    "error": pr.error,
                }
            )
    return rows


def _assemble(verdict: Verdict, results, interval, plan: TestPlan) -> None:
    kind = plan.target_kind
    all_points = [p for pts in results.values() for p in pts]
    min_delay = min(results)
    verdict.prefers_ipv6 = _majority_family(results[min_delay]) is Family.IPV6
    aaaa_flags = [p.aaaa_query_first for p in all_points if p.aaaa_query_first is not None]
    if aaaa_flags:
        verdict.aaaa_first = all(aaaa_flags)

    saw_v4 = any(p.family is Family.IPV4 for p in all_points)
    transition_found = interval is not None and interval.hi_ms is not None and saw_v4
    if interval is not None:
        verdict.transition = (interval.lo_ms, interval.hi_ms)
        if interval.inconsistent:
            verdict.notes.append("mixed winners at one or more delays")

    estimates: list[tuple[int, float]] = []
    if transition_found:
        threshold = interval.lo_ms if interval.lo_ms is not None else -1
        for delay in sorted(results):
            if delay <= threshold:
                continue
            for p in results[delay]:
                if p.family is not Family.IPV4:
                    continue
                est = _point_estimate(p, kind)
                if est is not None:
                    estimates.append((delay, est))

    estimate = None
    if estimates:
        values = [e for _, e in estimates]
        estimate = float(statistics.median(values))
        if len(values) >= 3:
            spread = statistics.pstdev(values)
            if spread > 0:
                verdict.outlier_points = sorted(
                    {d for d, e in estimates if abs(e - estimate) > spread}
                )

    if kind is TargetKind.CAD:
        verdict.cad_impl = transition_found
        if transition_found:
            if plan.client.kind == "demo" and estimate is not None:
                verdict.cad_estimate_ms = estimate
            else:
                verdict.cad_interval = (interval.lo_ms, interval.hi_ms)
    elif kind in (TargetKind.RD, TargetKind.RD_A_DELAY):
        if not saw_v4:
            # Never fell back to IPv4 anywhere on the grid.
            verdict.cad_impl = False
            verdict.rd_impl = False
            verdict.notes.append("no IPv4 attempt at any delay")
        elif kind is TargetKind.RD:
            verdict.rd_impl = transition_found
            if transition_found and estimate is not None:
                verdict.rd_estimate_ms = estimate
        if kind is TargetKind.RD_A_DELAY:
            verdict.waits_for_a = _tracks_delay(results)

    if plan.repetitions >= 2:
        cells = []
        for delay in sorted(results):
            for p in results[delay]:
                if p.family is not None:
                    cells.append((delay, p.repetition, p.family))
        try:
            report = consistency_score(cells)
            verdict.consistency = {
                "inconsistent_repetitions": report.inconsistent_repetitions,
                "total_repetitions": report.total_repetitions,
                "per_tier": {str(d): round(v, 4) for d, v in report.per_tier_violations.items()},
            }
        except ValueError:
            pass
    verdict.validate()


def _tracks_delay(results: dict[int, list[PointResult]]) -> bool:
    """Does the first IPv6 attempt move with the A-record delay?  Slope near
    1 means the client sat waiting for the A answer."""
    xs, ys = [], []
    for delay in sorted(results):
        starts = [
            p.first_v6_attempt_ms for p in results[delay] if p.first_v6_attempt_ms is not None
        ]
        if starts:
            xs.append(float(delay))
            ys.append(float(statistics.median(starts)))
    if len(xs) < 3:
        return False
    slope, _ = statistics.linear_regression(xs, ys)
    return slope >= 0.8
