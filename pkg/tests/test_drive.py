"""Closed-loop runs: the connection engine against the virtual network."""

import pytest

from helab.he_core import HEConfig, ResultCache, Version, drive
from helab.simnet import (
    BLACKHOLE,
    DROP,
    FAIL,
    REFUSE,
    Scenario,
    run,
)
from helab.types import Family, RecordType

V6_ADDR = "2001:db8::1"
V4_ADDR = "192.0.2.1"


def drive_sim(scenario, config=None, cache=None, max_wait_ms=None, horizon_ms=30_000):
    box = {}

    def program(ports):
        box["outcome"] = drive(
            ports, "host.example", 443, config=config, cache=cache, max_wait_ms=max_wait_ms
        )

    timeline = run(scenario, program, horizon_ms=horizon_ms)
    return box["outcome"], timeline


def launches(timeline):
    return [(e.t, e.data["family"]) for e in timeline.filter("connect.launch")]


class TestHappyPaths:
    def test_aaaa_first_connects_immediately(self):
        outcome, tl = drive_sim(Scenario())
        assert outcome.ok
        assert outcome.winner.family is Family.IPV6
        assert outcome.established_at_ms == 0
        assert launches(tl) == [(0, Family.IPV6)]

    def test_cad_race_slow_v6_loses_to_staggered_v4(self):
        # v6 connect takes 300 ms, so the 250 ms grace period elapses and the
        # v4 attempt starts; it finishes first at 260 ms.
        scenario = Scenario(
            connect_delays={(V6_ADDR, 443): 300, (V4_ADDR, 443): 10}
        )
        outcome, tl = drive_sim(scenario)
        assert launches(tl) == [(0, Family.IPV6), (250, Family.IPV4)]
        assert outcome.winner.family is Family.IPV4
        assert outcome.established_at_ms == 260
        cancels = tl.filter("connect.cancel")
        assert len(cancels) == 1
        assert cancels[0].data["family"] == Family.IPV6
        assert cancels[0].data["stage"] == "inflight"
        assert cancels[0].t == 260

    def test_fast_v6_wins_before_grace_elapses(self):
        scenario = Scenario(connect_delays={(V6_ADDR, 443): 100})
        outcome, tl = drive_sim(scenario)
        assert outcome.winner.family is Family.IPV6
        assert outcome.established_at_ms == 100
        # The v4 attempt was still only scheduled; it never launched.
        sched = [e for e in tl.filter("connect.cancel") if e.data["stage"] == "scheduled"]
        assert len(sched) == 1
        assert sched[0].data["family"] == Family.IPV4


class TestResolutionDelay:
    def test_slow_aaaa_starts_v4_after_delay(self):
        scenario = Scenario(dns_delays={RecordType.AAAA: 400})
        outcome, tl = drive_sim(scenario)
        waits = tl.filter("rd.wait")
        assert len(waits) == 1 and waits[0].data["deadline_ms"] == 50
        expired = tl.filter("rd.expired")
        assert len(expired) == 1 and expired[0].t == 50
        assert launches(tl)[0] == (50, Family.IPV4)
        assert outcome.winner.family is Family.IPV4
        assert outcome.established_at_ms == 50
        # The late AAAA answer still lands in the timeline after the outcome.
        late = tl.filter("dns.response", rtype=RecordType.AAAA)
        assert late and late[0].t == 400

    @pytest.mark.parametrize(
        "aaaa_ms,a_ms",
        [(0, 0), (100, 0), (0, 100), (200, 100), (500, 0), (60, 10), (150, 100)],
    )
    def test_first_attempt_time_is_min_of_aaaa_and_a_plus_delay(self, aaaa_ms, a_ms):
        scenario = Scenario(
            dns_delays={RecordType.AAAA: aaaa_ms, RecordType.A: a_ms}
        )
        _, tl = drive_sim(scenario)
        first = launches(tl)[0]
        expected = min(aaaa_ms, a_ms + 50)
        assert first[0] == expected
        if aaaa_ms <= a_ms + 50:
            # Ties go to IPv6: the answer beats the timer at the same instant.
            assert first[1] == Family.IPV6
        else:
            assert first[1] == Family.IPV4

    def test_aaaa_arrival_before_expiry_cancels_the_timer(self):
        scenario = Scenario(dns_delays={RecordType.AAAA: 30})
        _, tl = drive_sim(scenario)
        assert tl.filter("rd.wait")
        assert not tl.filter("rd.expired")
        assert launches(tl)[0] == (30, Family.IPV6)

    def test_custom_resolution_delay(self):
        cfg = HEConfig(resolution_delay_ms=200)
        scenario = Scenario(dns_delays={RecordType.AAAA: 1000})
        _, tl = drive_sim(scenario, config=cfg)
        assert launches(tl)[0] == (200, Family.IPV4)


class TestFirstVersion:
    def test_a_first_waits_for_aaaa(self):
        cfg = HEConfig(version=Version.V1)
        scenario = Scenario(dns_delays={RecordType.AAAA: 400})
        outcome, tl = drive_sim(scenario, config=cfg)
        assert not tl.filter("rd.wait")
        assert launches(tl)[0] == (400, Family.IPV6)
        assert outcome.winner.family is Family.IPV6

    def test_aaaa_failure_releases_v4(self):
        cfg = HEConfig(version=Version.V1)
        scenario = Scenario(
            dns_delays={RecordType.AAAA: FAIL, RecordType.A: 20}
        )
        outcome, tl = drive_sim(scenario, config=cfg)
        assert launches(tl) == [(20, Family.IPV4)]
        assert outcome.winner.family is Family.IPV4

    def test_one_attempt_per_family(self):
        cfg = HEConfig(version=Version.V1)
        scenario = Scenario(
            dns_answers={
                RecordType.AAAA: ("2001:db8::1", "2001:db8::2"),
                RecordType.A: ("192.0.2.1", "192.0.2.2"),
            },
            connect_delays={
                ("2001:db8::1", 443): BLACKHOLE,
                ("2001:db8::2", 443): BLACKHOLE,
                ("192.0.2.1", 443): BLACKHOLE,
                ("192.0.2.2", 443): BLACKHOLE,
            },
        )
        outcome, tl = drive_sim(scenario, config=cfg, max_wait_ms=2000)
        got = launches(tl)
        assert [f for _, f in got] == [Family.IPV6, Family.IPV4]
        assert got[1][0] - got[0][0] == 250
        assert not outcome.ok

    def test_grace_band_floor(self):
        # 50 ms is below the band this version allows, so attempts stagger at
        # the 150 ms floor instead.
        cfg = HEConfig(version=Version.V1, connection_attempt_delay_ms=50)
        scenario = Scenario(
            connect_delays={(V6_ADDR, 443): BLACKHOLE, (V4_ADDR, 443): BLACKHOLE}
        )
        _, tl = drive_sim(scenario, config=cfg, max_wait_ms=2000)
        got = launches(tl)
        assert got[1][0] - got[0][0] == 150


class TestFailures:
    def test_blackhole_everything_gives_all_attempts_failed(self):
        scenario = Scenario(
            connect_delays={(V6_ADDR, 443): BLACKHOLE, (V4_ADDR, 443): BLACKHOLE}
        )
        outcome, tl = drive_sim(scenario, max_wait_ms=5000)
        assert not outcome.ok
        assert outcome.error == "all_attempts_failed"
        assert outcome.winner is None

    def test_refused_connection_fails_fast(self):
        scenario = Scenario(connect_delays={(V6_ADDR, 443): REFUSE})
        outcome, tl = drive_sim(scenario)
        fails = tl.filter("connect.failure")
        assert len(fails) == 1 and fails[0].t == 1
        assert fails[0].data["reason"] == "refused"
        # The stagger still holds: v4 launches at 250, not at the failure.
        assert launches(tl) == [(0, Family.IPV6), (250, Family.IPV4)]
        assert outcome.winner.family is Family.IPV4
        assert outcome.established_at_ms == 250

    def test_both_refused(self):
        scenario = Scenario(
            connect_delays={(V6_ADDR, 443): REFUSE, (V4_ADDR, 443): REFUSE}
        )
        outcome, tl = drive_sim(scenario)
        assert not outcome.ok
        assert outcome.error == "all_attempts_failed"
        assert len(tl.filter("connect.failure")) == 2

    def test_both_resolutions_fail(self):
        scenario = Scenario(
            dns_delays={RecordType.AAAA: FAIL, RecordType.A: FAIL}
        )
        outcome, tl = drive_sim(scenario)
        assert not outcome.ok
        assert outcome.error == "resolution_failed"
        assert not tl.filter("connect.launch")

    def test_dropped_resolution_times_out_via_give_up(self):
        scenario = Scenario(
            dns_delays={RecordType.AAAA: DROP, RecordType.A: DROP}
        )
        outcome, tl = drive_sim(scenario, max_wait_ms=3000)
        assert not outcome.ok
        assert outcome.error == "resolution_failed"
        final = tl.filter("outcome")[0]
        assert final.t == 3000

    def test_aaaa_dropped_a_answers(self):
        scenario = Scenario(dns_delays={RecordType.AAAA: DROP})
        outcome, tl = drive_sim(scenario, max_wait_ms=5000)
        assert outcome.winner.family is Family.IPV4
        assert outcome.established_at_ms == 50


class TestMergeAndInterlace:
    def test_late_a_answer_merges_into_running_plan(self):
        scenario = Scenario(
            dns_delays={RecordType.A: 300},
            connect_delays={(V6_ADDR, 443): 500},
        )
        outcome, tl = drive_sim(scenario)
        assert launches(tl) == [(0, Family.IPV6), (300, Family.IPV4)]
        assert outcome.winner.family is Family.IPV4
        assert outcome.established_at_ms == 300
        cancels = tl.filter("connect.cancel", stage="inflight")
        assert len(cancels) == 1

    def test_second_family_count_two_with_blackholes(self):
        v6s = tuple(f"2001:db8::{i:x}" for i in range(1, 11))
        v4s = tuple(f"192.0.2.{i}" for i in range(1, 11))
        delays = {(a, 443): BLACKHOLE for a in v6s + v4s}
        scenario = Scenario(
            dns_answers={RecordType.AAAA: v6s, RecordType.A: v4s},
            connect_delays=delays,
        )
        cfg = HEConfig(first_address_family_count=2)
        outcome, tl = drive_sim(scenario, config=cfg, max_wait_ms=10_000)
        got = launches(tl)
        pattern = "".join("6" if f == Family.IPV6 else "4" for _, f in got)
        assert pattern == "66" + "46" * 8 + "44"
        assert [t for t, _ in got] == [i * 250 for i in range(20)]
        assert not outcome.ok

    def test_multiple_addresses_race_in_order(self):
        v6s = ("2001:db8::1", "2001:db8::2")
        scenario = Scenario(
            dns_answers={RecordType.AAAA: v6s, RecordType.A: (V4_ADDR,)},
            connect_delays={
                ("2001:db8::1", 443): BLACKHOLE,
                ("2001:db8::2", 443): BLACKHOLE,
                (V4_ADDR, 443): 5,
            },
        )
        outcome, tl = drive_sim(scenario)
        got = launches(tl)
        # The second v6 attempt was planned for 500 ms but the v4 success at
        # 255 ms cancels it on the drawing board.
        assert got == [(0, Family.IPV6), (250, Family.IPV4)]
        assert outcome.winner.family is Family.IPV4
        assert outcome.established_at_ms == 255
        sched = tl.filter("connect.cancel", stage="scheduled")
        assert [e.data["address"] for e in sched] == ["2001:db8::2"]


class TestCache:
    def test_second_run_hits_cache_without_queries(self):
        cache = ResultCache()
        box = {}

        def program(ports):
            box["first"] = drive(ports, "host.example", 443, cache=cache)
            box["second"] = drive(ports, "host.example", 443, cache=cache)

        tl = run(Scenario(), program)
        assert box["first"].ok and box["second"].ok
        assert box["second"].winner == box["first"].winner
        assert len(tl.filter("dns.query")) == 2  # one AAAA + one A, first run only
        assert len(tl.filter("cache.hit")) == 1

    def test_cache_entry_records_expiry(self):
        cache = ResultCache()
        outcome, _ = drive_sim(Scenario(), cache=cache)
        assert outcome.cache_entry is not None
        assert outcome.cache_entry.expiry_ms == outcome.established_at_ms + 600_000

    def test_distinct_names_do_not_collide(self):
        cache = ResultCache()
        box = {}

        def program(ports):
            box["a"] = drive(ports, "one.example", 443, cache=cache)
            box["b"] = drive(ports, "two.example", 443, cache=cache)

        tl = run(Scenario(), program)
        assert not tl.filter("cache.hit")
        assert len(cache) == 2


class TestDeterminism:
    def test_identical_scenarios_produce_identical_bytes(self):
        scenario_dict = Scenario(
            dns_delays={RecordType.AAAA: 120},
            connect_delays={(V6_ADDR, 443): 40, (V4_ADDR, 443): REFUSE},
        ).to_dict()

        def once():
            _, tl = drive_sim(Scenario.from_dict(scenario_dict))
            return tl.to_json_lines()

        assert once() == once()

    def test_scenario_dict_round_trip(self):
        scenario = Scenario(
            dns_delays={RecordType.AAAA: DROP, RecordType.A: 10},
            dns_answers={RecordType.A: ("192.0.2.7",)},
            connect_delays={("192.0.2.7", 443): REFUSE},
            family_delay={Family.IPV4: 5},
            seed=3,
        )
        again = Scenario.from_dict(scenario.to_dict())
        assert again == scenario
