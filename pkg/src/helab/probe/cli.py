"""probe command line: run sweep plans, or run the demo client once."""

from __future__ import annotations

import argparse
import json
import sys
from urllib.parse import urlparse

from .. import realnet
from .demo_client import PROFILES, run_profile
from .plan import TestPlan, he_config_from_dict
from .report import render_report
from .runner import sweep


def _cmd_run(args: argparse.Namespace) -> int:
    plan = TestPlan.from_file(args.plan)
    if args.mode:
        plan.mode = args.mode
    verdict = sweep(plan)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(verdict.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    sys.stdout.write(render_report(verdict))
    if args.json:
        json.dump(verdict.to_dict(), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return 0


def _cmd_demo_client(args: argparse.Namespace) -> int:
    url = urlparse(args.target if "//" in args.target else f"http://{args.target}")
    host = url.hostname or ""
    port = url.port or 80
    dns_host, _, dns_port = args.dns.rpartition(":")
    config = he_config_from_dict(json.load(open(args.config)) if args.config else {})
    ports = realnet.make_ports((dns_host.strip("[]"), int(dns_port)))
    outcome = run_profile(
        ports, host, port, profile=args.profile, config=config, max_wait_ms=args.timeout_ms
    )
    ports.transport.close_all()
    if args.timeline:
        with open(args.timeline, "w", encoding="utf-8") as fh:
            fh.write(outcome.timeline.to_json_lines())
    result = {
        "ok": outcome.ok,
        "winner_family": outcome.winner.family.value if outcome.winner else None,
        "winner_address": outcome.winner.address if outcome.winner else None,
        "established_at_ms": outcome.established_at_ms,
        "error": outcome.error,
        "events": len(outcome.timeline),
    }
    json.dump(result, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0 if outcome.ok else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="probe", description="Client behavior measurement")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="execute a sweep plan")
    p_run.add_argument("--plan", required=True, help="plan JSON file")
    p_run.add_argument("--out", default=None, help="write verdict JSON here")
    p_run.add_argument("--json", action="store_true", help="also print verdict JSON")
    p_run.add_argument("--mode", choices=["simnet", "real"], default=None, help="override plan mode")
    p_run.set_defaults(fn=_cmd_run)

    p_demo = sub.add_parser("demo-client", help="run the reference client once")
    p_demo.add_argument("--target", required=True, help="URL or host:port to connect to")
    p_demo.add_argument("--dns", required=True, help="DNS server as host:port")
    p_demo.add_argument("--profile", choices=PROFILES, default="he")
    p_demo.add_argument("--config", default=None, help="HEConfig overrides, JSON file")
    p_demo.add_argument("--timeout-ms", type=int, default=8000)
    p_demo.add_argument("--timeline", default=None, help="write the event timeline JSONL here")
    p_demo.set_defaults(fn=_cmd_demo_client)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
