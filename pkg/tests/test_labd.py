"""Ladder construction, threshold inference, consistency scoring, and the
HTTP measurement service."""

import json
import random
import urllib.request

import pytest

from helab.labd import (
    DEFAULT_DELAY_LADDER_MS,
    CadIntervalResult,
    DelayTier,
    LabdService,
    SessionRecord,
    SessionStore,
    OptInRequired,
    consistency_score,
    default_ladder,
    infer_cad_interval,
)
from helab.types import Family

from conftest import requires_ipv6
from oracles import naive_consistency, naive_interval

V6 = Family.IPV6
V4 = Family.IPV4


class TestLadder:
    def test_default_shape(self):
        tiers = default_ladder()
        assert len(tiers) == len(DEFAULT_DELAY_LADDER_MS) == 18
        assert [t.delay_ms for t in tiers] == list(DEFAULT_DELAY_LADDER_MS)
        assert tiers[0].delay_ms == 0
        assert tiers[-1].delay_ms == 5000

    def test_domains_encode_their_delay(self):
        for tier in default_ladder():
            assert tier.domain.startswith(f"d{tier.delay_ms}-aaaa-")

    def test_ports_are_distinct_and_sequential(self):
        tiers = default_ladder(base_port=9000)
        assert [t.v4_endpoint[1] for t in tiers] == list(range(9000, 9018))
        for t in tiers:
            assert t.v4_endpoint[1] == t.v6_endpoint[1]

    def test_non_increasing_delays_rejected(self):
        with pytest.raises(ValueError):
            default_ladder(delays=(0, 100, 100))
        with pytest.raises(ValueError):
            default_ladder(delays=(100, 0))

    def test_tier_round_trip(self):
        tier = default_ladder()[3]
        assert DelayTier.from_dict(tier.to_dict()) == tier


class TestIntervalInference:
    def test_worked_example(self):
        obs = [(d, V6) for d in (0, 50, 100, 150, 200)] + [
            (d, V4) for d in (250, 300, 400)
        ]
        got = infer_cad_interval(obs)
        assert (got.lo_ms, got.hi_ms) == (200, 250)
        assert not got.inconsistent
        assert got.format() == "(200, 250]"

    def test_all_v6_is_unbounded_above(self):
        got = infer_cad_interval([(0, V6), (1000, V6), (5000, V6)])
        assert (got.lo_ms, got.hi_ms) == (5000, None)
        assert got.format() == "(5000, inf)"

    def test_all_v4_is_unbounded_below(self):
        got = infer_cad_interval([(0, V4), (100, V4)])
        assert (got.lo_ms, got.hi_ms) == (None, 0)
        assert got.format() == "(-inf, 0]"

    def test_majority_decides_each_delay(self):
        obs = [(100, V6), (100, V6), (100, V4), (250, V4), (250, V4), (250, V6)]
        got = infer_cad_interval(obs)
        assert (got.lo_ms, got.hi_ms) == (100, 250)
        assert got.inconsistent  # mixed cells seen at both delays

    def test_tie_counts_as_fallback(self):
        got = infer_cad_interval([(100, V6), (100, V4), (200, V4)])
        assert got.lo_ms is None
        assert got.hi_ms == 100

    def test_single_delay_rejected(self):
        with pytest.raises(ValueError):
            infer_cad_interval([(100, V6), (100, V6)])

    def test_v4_below_a_later_v6_does_not_close_the_interval(self):
        # Noise: v4 at 50 but v6 majority again at 100; hi must sit above lo.
        got = infer_cad_interval([(0, V6), (50, V4), (100, V6), (250, V4)])
        assert (got.lo_ms, got.hi_ms) == (100, 250)

    def test_matches_naive_reimplementation_on_random_grids(self):
        rng = random.Random(7)
        delays = [0, 50, 100, 150, 200, 250, 300]
        for _ in range(300):
            threshold = rng.choice(delays[1:])
            obs = []
            for d in delays:
                for _ in range(rng.randint(1, 3)):
                    fam = V6 if d < threshold else V4
                    if rng.random() < 0.1:
                        fam = V4 if fam is V6 else V6
                    obs.append((d, fam))
            got = infer_cad_interval(obs)
            lo, hi, mixed = naive_interval(
                [(d, f.value) for d, f in obs]
            )
            assert (got.lo_ms, got.hi_ms, got.inconsistent) == (lo, hi, mixed)


class TestConsistency:
    def grid(self, flipped_reps):
        # 10 repetitions over four tiers; clean pattern switches at 250.
        obs = []
        for rep in range(10):
            for delay in (0, 100, 250, 400):
                fam = V6 if delay < 250 else V4
                if rep in flipped_reps and delay == 0:
                    fam = V4  # IPv4 with IPv6 later in the same repetition
                obs.append((delay, rep, fam))
        return obs

    def test_clean_grid_scores_zero(self):
        report = consistency_score(self.grid(set()))
        assert report.inconsistent_repetitions == 0
        assert report.global_fraction == 0.0
        assert all(v == 0.0 for v in report.per_tier_violations.values())

    def test_worked_example_six_of_ten(self):
        report = consistency_score(self.grid({0, 2, 4, 6, 8, 9}))
        assert report.total_repetitions == 10
        assert report.inconsistent_repetitions == 6
        assert report.global_fraction == 0.6
        # The inversion involves the IPv4 cell at 0 and the IPv6 cell at 100;
        # the tiers past the real switch stay clean.
        assert report.per_tier_violations[0] == 0.6
        assert report.per_tier_violations[100] == 0.6
        assert report.per_tier_violations[250] == 0.0
        assert report.per_tier_violations[400] == 0.0

    def test_single_delay_repetition_rejected(self):
        with pytest.raises(ValueError):
            consistency_score([(100, 0, V6)])

    def test_matches_naive_recount_on_random_grids(self):
        rng = random.Random(11)
        for _ in range(200):
            obs = []
            reps = rng.randint(2, 6)
            delays = sorted(rng.sample([0, 50, 100, 200, 300, 500], rng.randint(2, 5)))
            for rep in range(reps):
                for d in delays:
                    obs.append((d, rep, rng.choice([V6, V4])))
            got = consistency_score(obs)
            per_tier, bad_reps, total = naive_consistency(
                [(d, r, f.value) for d, r, f in obs]
            )
            assert got.inconsistent_repetitions == bad_reps
            assert got.total_repetitions == total
            assert got.per_tier_violations == per_tier


class TestSessionStore:
    def record(self, session="s1", opt_in=True, n=3):
        return SessionRecord.from_dict(
            {
                "session_id": session,
                "opt_in": opt_in,
                "user_agent": "test",
                "platform": "test",
                "entries": [
                    {"tier_index": i, "repetition": 0, "family": "IPv6", "elapsed_ms": 12}
                    for i in range(n)
                ],
            }
        )

    def test_opt_in_is_mandatory(self, tmp_path):
        store = SessionStore(str(tmp_path / "res.jsonl"))
        with pytest.raises(OptInRequired):
            store.store(self.record(opt_in=False))

    def test_store_and_dedupe(self, tmp_path):
        store = SessionStore(str(tmp_path / "res.jsonl"))
        ack = store.store(self.record())
        assert (ack.stored, ack.duplicates) == (3, 0)
        again = store.store(self.record())
        assert (again.stored, again.duplicates) == (0, 3)

    def test_dedupe_survives_reload(self, tmp_path):
        path = str(tmp_path / "res.jsonl")
        SessionStore(path).store(self.record())
        reloaded = SessionStore(path)
        ack = reloaded.store(self.record())
        assert (ack.stored, ack.duplicates) == (0, 3)

    def test_rows_are_json_lines_with_schema(self, tmp_path):
        path = tmp_path / "res.jsonl"
        SessionStore(str(path)).store(self.record(n=2))
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == 2
        assert all(r["schema"] == 1 for r in rows)
        assert rows[0]["family"] == "IPv6"


def _get(url):
    with urllib.request.urlopen(url, timeout=5) as resp:
        return resp.status, json.loads(resp.read())


def _post(url, payload):
    req = urllib.request.Request(
        url,
        data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


@requires_ipv6
class TestService:
    @pytest.fixture
    def service(self, tmp_path):
        ladder = default_ladder(base_port=0, delays=(0, 100), nonce="t")
        svc = LabdService(
            ladder,
            store=SessionStore(str(tmp_path / "results.jsonl")),
            run_nonce="nonce123",
        )
        svc.start()
        yield svc
        svc.stop()

    def test_ladder_endpoint(self, service):
        host, port = service.ladder[0].v4_endpoint
        status, body = _get(f"http://{host}:{port}/ladder")
        assert status == 200
        assert body["run_nonce"] == "nonce123"
        assert [t["delay_ms"] for t in body["tiers"]] == [0, 100]
        # Every advertised endpoint carries a real bound port.
        assert all(t["v4_endpoint"][1] > 0 for t in body["tiers"])

    def test_echo_reports_client_and_tier(self, service):
        tier = service.ladder[1]
        host, port = tier.v4_endpoint
        status, body = _get(f"http://{host}:{port}/echo")
        assert status == 200
        assert body["client_address"] == "127.0.0.1"
        assert body["family"] == "IPv4"
        assert body["tier_index"] == 1
        assert body["delay_ms"] == 100
        assert body["run_nonce"] == "nonce123"

    def test_echo_over_ipv6(self, service):
        tier = service.ladder[0]
        port = tier.v6_endpoint[1]
        status, body = _get(f"http://[::1]:{port}/echo")
        assert status == 200
        assert body["client_address"] == "::1"
        assert body["family"] == "IPv6"

    def test_accept_log_sees_connections(self, service):
        tier = service.ladder[0]
        _get(f"http://127.0.0.1:{tier.v4_endpoint[1]}/echo")
        _get(f"http://[::1]:{tier.v6_endpoint[1]}/echo")
        events = service.accept_log.snapshot()
        fams = sorted(e.family for e in events if e.tier_index == 0)
        assert fams == ["IPv4", "IPv6"]

    def test_results_submission_flow(self, service):
        host, port = service.ladder[0].v4_endpoint
        url = f"http://{host}:{port}/results"
        payload = {
            "session_id": "abc",
            "opt_in": True,
            "entries": [
                {"tier_index": 0, "repetition": 0, "family": "IPv6"},
                {"tier_index": 1, "repetition": 0, "family": "IPv4"},
            ],
        }
        status, body = _post(url, payload)
        assert status == 200
        assert (body["stored"], body["duplicates"]) == (2, 0)
        status, body = _post(url, payload)
        assert status == 200
        assert (body["stored"], body["duplicates"]) == (0, 2)

    def test_results_without_opt_in_rejected(self, service):
        host, port = service.ladder[0].v4_endpoint
        status, body = _post(
            f"http://{host}:{port}/results",
            {"session_id": "abc", "opt_in": False, "entries": []},
        )
        assert status == 403

    def test_malformed_submission_rejected(self, service):
        host, port = service.ladder[0].v4_endpoint
        status, _ = _post(f"http://{host}:{port}/results", {"nope": 1})
        assert status == 400

    def test_unknown_path_404(self, service):
        host, port = service.ladder[0].v4_endpoint
        try:
            status, _ = _get(f"http://{host}:{port}/what")
        except urllib.error.HTTPError as err:
            status = err.code
        assert status == 404
