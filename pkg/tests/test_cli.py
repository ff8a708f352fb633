"""Command line entry points, driven in-process."""

import json

from helab.dns_lab import DnsLabConfig, UdpDnsServer
from helab.labd import LabdService, default_ladder
from helab.probe import cli as probe_cli
from helab.resolver_probe import main as resolver_main

from conftest import requires_ipv6


def write_plan(tmp_path, **overrides):
    plan = {
        "target_kind": "rd",
        "mode": "simnet",
        "client": {"kind": "demo", "profile": "he", "config": {}},
        "coarse": {"start_ms": 0, "stop_ms": 200, "step_ms": 100},
        "fine": {"window_ms": 50, "step_ms": 5},
        "repetitions": 1,
    }
    plan.update(overrides)
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan))
    return str(path)


class TestProbeRun:
    def test_sweep_plan_prints_report_and_writes_verdict(self, tmp_path, capsys):
        out = tmp_path / "verdict.json"
        rc = probe_cli.main(
            ["run", "--plan", write_plan(tmp_path), "--out", str(out), "--json"]
        )
        assert rc == 0
        printed = capsys.readouterr().out
        assert "resolution delay" in printed
        saved = json.loads(out.read_text())
        assert saved["rd_impl"] is True
        assert saved["rd_estimate_ms"] == 50.0
        # --json appends the same payload after the report.
        tail = printed[printed.index("{"):]
        assert json.loads(tail) == saved

    def test_mode_override(self, tmp_path, capsys):
        rc = probe_cli.main(
            ["run", "--plan", write_plan(tmp_path, mode="real"), "--mode", "simnet"]
        )
        assert rc == 0
        assert "resolution delay" in capsys.readouterr().out


@requires_ipv6
class TestProbeDemoClient:
    def test_one_shot_against_lab_servers(self, tmp_path, capsys):
        dns = UdpDnsServer(DnsLabConfig(), listen=(("127.0.0.1", 0),))
        dns.start()
        labd = LabdService(default_ladder(base_port=0, delays=(0,), nonce="cli"))
        labd.start()
        try:
            port = labd.ladder[0].v4_endpoint[1]
            host, dns_port = dns.addresses[0]
            timeline = tmp_path / "timeline.jsonl"
            rc = probe_cli.main(
                [
                    "demo-client",
                    "--target", f"d0-none-cli01.he-test.example.:{port}",
                    "--dns", f"{host}:{dns_port}",
                    "--timeline", str(timeline),
                ]
            )
        finally:
            labd.stop()
            dns.stop()
        assert rc == 0
        result = json.loads(capsys.readouterr().out)
        assert result["ok"] is True
        assert result["winner_family"] == "IPv6"
        lines = timeline.read_text().splitlines()
        assert any('"connect.success"' in ln for ln in lines)


class TestResolverProbeCli:
    def test_campaign_then_classify(self, tmp_path, capsys):
        camp_dir = tmp_path / "camp"
        rc = resolver_main(
            ["campaign", "--delays", "0,100", "--out", str(camp_dir)]
        )
        assert rc == 0
        assert (camp_dir / "campaign.json").exists()
        assert (camp_dir / "zones.json").exists()
        queries = (camp_dir / "queries.txt").read_text().splitlines()
        assert len(queries) == 2
        capsys.readouterr()

        campaign = json.loads((camp_dir / "campaign.json").read_text())
        traces_dir = tmp_path / "traces"
        traces_dir.mkdir()
        rows = []
        for i, (zone, qname) in enumerate(zip(campaign["zones"], queries)):
            rows.append(
                {"event": "query", "ts_ms": 10 * i, "qname": zone["ns_names"][0],
                 "qtype": "A", "family": "IPv4", "client": "192.0.2.53"}
            )
            rows.append(
                {"event": "query", "ts_ms": 10 * i + 5, "qname": qname,
                 "qtype": "AAAA", "family": "IPv6", "client": "2001:db8::53"}
            )
        (traces_dir / "capture.jsonl").write_text(
            "".join(json.dumps(r) + "\n" for r in rows)
        )

        verdict_path = tmp_path / "verdict.json"
        rc = resolver_main(
            [
                "classify",
                "--traces", str(traces_dir),
                "--campaign", str(camp_dir / "campaign.json"),
                "--json", str(verdict_path),
            ]
        )
        assert rc == 0
        printed = json.loads(capsys.readouterr().out)
        saved = json.loads(verdict_path.read_text())
        assert printed == saved
        assert saved["schema"] == 1
        assert saved["ipv6_share"] == 1.0
