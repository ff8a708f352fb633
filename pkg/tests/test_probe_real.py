"""Real-socket probing on loopback: in-process DNS and HTTP lab servers, the
demo client driven over UDP and TCP, server logs merged into the evidence."""

import pytest

from helab import realnet
from helab.dns_lab import DnsLabConfig, UdpDnsServer
from helab.he_core import drive
from helab.probe.plan import ClientSpec, DelayGrid, FineSpec, TargetKind, TestPlan
from helab.probe.runner import RealEnv, sweep
from helab.types import Family

from conftest import requires_ipv6

pytestmark = requires_ipv6

BASE = "he-test.example."


def real_plan(profile="he", stop=200, fine_step=25, reps=1):
    return TestPlan(
        target_kind=TargetKind.RD,
        mode="real",
        client=ClientSpec(kind="demo", profile=profile),
        coarse=DelayGrid(0, stop, 100),
        fine=FineSpec(window_ms=50, step_ms=fine_step),
        repetitions=reps,
    )


class TestRealnetDrive:
    """The engine over real sockets, without the sweep machinery."""

    @pytest.fixture
    def lab(self):
        from helab.labd import LabdService, default_ladder

        dns = UdpDnsServer(DnsLabConfig(), listen=(("127.0.0.1", 0),))
        dns.start()
        labd = LabdService(default_ladder(base_port=0, delays=(0,), nonce="rd"))
        labd.start()
        yield dns, labd
        labd.stop()
        dns.stop()

    def test_immediate_answers_win_on_ipv6(self, lab):
        dns, labd = lab
        port = labd.ladder[0].v4_endpoint[1]
        ports = realnet.make_ports(dns.addresses[0])
        outcome = drive(ports, f"d0-none-r1.{BASE}", port, max_wait_ms=5000)
        ports.transport.close_all()
        assert outcome.ok
        assert outcome.winner.family is Family.IPV6
        assert outcome.winner.address == "::1"
        kinds = {e.kind for e in outcome.timeline}
        assert {"dns.query", "dns.response", "connect.launch", "connect.success"} <= kinds

    def test_delayed_aaaa_falls_back_to_ipv4(self, lab):
        dns, labd = lab
        port = labd.ladder[0].v4_endpoint[1]
        ports = realnet.make_ports(dns.addresses[0])
        outcome = drive(ports, f"d400-aaaa-r2.{BASE}", port, max_wait_ms=5000)
        ports.transport.close_all()
        assert outcome.ok
        assert outcome.winner.family is Family.IPV4
        launch = outcome.timeline.first("connect.launch")
        a_resp = outcome.timeline.first("dns.response", rtype="A")
        assert a_resp is not None
        # The v4 launch sits one resolution delay after the A answer.
        assert 30 <= launch.t - a_resp.t <= 120

    def test_unanswerable_name_reports_resolution_failure(self, lab):
        dns, labd = lab
        ports = realnet.make_ports(dns.addresses[0])
        outcome = drive(ports, "nope.unrelated.example.", 80, max_wait_ms=3000)
        ports.transport.close_all()
        assert not outcome.ok
        assert outcome.error == "resolution_failed"


class TestRealEnvPoints:
    def test_point_merges_server_evidence(self):
        env = RealEnv(real_plan())
        try:
            pr = env.run_point(100, 0, "zz01")
        finally:
            env.close()
        assert pr.family is Family.IPV4  # 100 ms AAAA hold beats the 50 ms wait
        assert pr.aaaa_query_first is True
        assert pr.a_response_ms is not None
        assert pr.first_v4_attempt_ms is not None
        assert 30 <= pr.first_v4_attempt_ms - pr.a_response_ms <= 120
        kinds = {e.kind for e in pr.timeline}
        assert "server.dns.query" in kinds
        assert "server.accept" in kinds
        # Only this point's queries are merged in.
        for ev in pr.timeline:
            if ev.kind.startswith("server.dns"):
                assert "zz01" in ev.data["qname"]

    def test_zero_delay_point_stays_on_ipv6(self):
        env = RealEnv(real_plan())
        try:
            pr = env.run_point(0, 0, "zz02")
        finally:
            env.close()
        assert pr.family is Family.IPV6
        assert pr.error is None


class TestRealSweep:
    def test_rd_sweep_brackets_the_default_delay(self):
        verdict = sweep(real_plan())
        assert verdict.rd_impl is True
        assert verdict.rd_estimate_ms is not None
        assert 30 <= verdict.rd_estimate_ms <= 70
        assert verdict.prefers_ipv6 is True
        assert verdict.aaaa_first is True
        lo, hi = verdict.transition
        assert hi is not None and hi <= 100

    def test_no_fallback_client_shows_no_thresholds(self):
        verdict = sweep(real_plan(profile="no-fallback", stop=100, fine_step=50))
        assert verdict.cad_impl is False
        assert verdict.rd_impl is False
        assert "no IPv4 attempt at any delay" in verdict.notes
        assert verdict.prefers_ipv6 is True
