"""Engine tests: deferred acceptance, knapsack acceptance, shared-radio
local search, and blocking-pair verification."""

import itertools

import pytest

from relaymatch.baselines import iter_feasible
from relaymatch.errors import MatchingValidationError, TerminationCapError
from relaymatch.matching import (
    Matching,
    MatchingClass,
    achieved_rate,
    global_satisfaction,
    knapsack_select,
    match_class1,
    match_class2,
    match_class3,
    run_class1,
    run_class3,
    verify_stability,
)
from relaymatch.model import Drone, LinkModel, Role, link_rate_bps, relay_rate_bps
from relaymatch.preferences import Market, PreferenceList, build_market

from conftest import DEST_ID, make_dest, make_relay, make_source, random_market


def _stable_set(market, cls):
    """All stable matchings by exhaustive enumeration (the oracle)."""
    return [
        m for m in iter_feasible(market, cls)
        if not verify_stability(market, m, cls)
    ]


class TestClass1:
    def test_single_mutually_acceptable_pair(self, link):
        market = random_market(3, link, n_sources=1, n_relays=1)
        assert market.source_prefs[0].acceptable() == (100,)
        matching = match_class1(market)
        assert matching.assignment == {0: (100, 0)}

    def test_contested_relay_goes_to_preferred_source(self, link):
        # both sources rank the near relay first; it prefers the closer source
        s1 = make_source(1, (400.0, 1000.0, 100.0), 1e5)
        s2 = make_source(2, (0.0, 1000.0, 100.0), 1e5)
        near = make_relay(10, (2000.0, 1000.0, 100.0), radio_count=1)
        far = make_relay(11, (2400.0, 1600.0, 100.0), radio_count=1)
        market = build_market(
            sources=[s1, s2], relays=[near, far], destinations=[make_dest()],
            dest_map={1: DEST_ID, 2: DEST_ID}, link=link, resource_unit_bps=2e4,
        )
        assert market.source_prefs[1].acceptable()[0] == 10
        assert market.source_prefs[2].acceptable()[0] == 10
        assert [c for c, _ in market.relay_prefs[10].ranked] == [1, 2]
        matching = match_class1(market)
        assert matching.assignment[1] == (10, 0)
        assert matching.assignment[2] == (11, 0)
        # oracle: this is the unique source-optimal stable matching
        stable = _stable_set(market, MatchingClass.FIXED_QUOTA)
        assert any(m.assignment == matching.assignment for m in stable)
        for m in stable:
            for s in (1, 2):
                prefs = market.source_prefs[s].acceptable()
                ours = prefs.index(matching.assignment[s][0])
                theirs = (
                    prefs.index(m.assignment[s][0])
                    if m.assignment[s] is not None else len(prefs)
                )
                assert ours <= theirs

    def test_empty_source_set(self, link):
        market = build_market(
            sources=[], relays=[make_relay(10, (1.0, 1.0, 1.0))],
            destinations=[make_dest()], dest_map={}, link=link,
        )
        matching = match_class1(market)
        assert matching.assignment == {}
        assert global_satisfaction(market, matching) == 1.0

    def test_stable_on_random_markets(self, link):
        for seed in range(50):
            market = random_market(seed, link)
            assert verify_stability(market, match_class1(market), MatchingClass.FIXED_QUOTA) == []

    def test_monotone_score_transform_invariance(self, link):
        market = random_market(8, link)
        base = match_class1(market)

        def transform(x):
            return 3.0 * x + 7.0  # positive monotone

        warped = Market(
            sources=market.sources,
            relays=market.relays,
            destinations=market.destinations,
            dest_map=dict(market.dest_map),
            link=market.link,
            quotas=dict(market.quotas),
            resource_unit_bps=market.resource_unit_bps,
            source_prefs={
                s: PreferenceList(
                    owner=p.owner,
                    ranked=tuple((c, transform(v)) for c, v in p.ranked),
                    cutoff=transform(p.cutoff),
                )
                for s, p in market.source_prefs.items()
            },
            relay_prefs={
                r: PreferenceList(
                    owner=p.owner,
                    ranked=tuple((c, transform(v)) for c, v in p.ranked),
                    cutoff=p.cutoff,  # relay cutoff 0 must stay below all scores
                    demand_units=p.demand_units,
                )
                for r, p in market.relay_prefs.items()
            },
        )
        assert match_class1(warped).assignment == base.assignment

    def test_id_relabeling_leaves_satisfaction_unchanged(self, link):
        market = random_market(4, link, n_sources=5, n_relays=3)
        matching = match_class1(market)
        shift = 1000
        relabeled = build_market(
            sources=[
                Drone(id=s.id + shift, role=s.role, position=s.position,
                      tx_power_w=s.tx_power_w, demand_bps=s.demand_bps)
                for s in market.sources
            ],
            relays=[
                Drone(id=r.id + shift, role=r.role, position=r.position,
                      tx_power_w=r.tx_power_w, radio_count=r.radio_count,
                      resource_capacity=r.resource_capacity)
                for r in market.relays
            ],
            destinations=[
                Drone(id=d.id + shift, role=d.role, position=d.position,
                      tx_power_w=d.tx_power_w)
                for d in market.destinations
            ],
            dest_map={s + shift: d + shift for s, d in market.dest_map.items()},
            link=link,
            quotas={r + shift: q for r, q in market.quotas.items()},
            resource_unit_bps=market.resource_unit_bps,
        )
        shifted = match_class1(relabeled)
        assert shifted.assignment == {
            s + shift: ((a[0] + shift, a[1]) if a is not None else None)
            for s, a in matching.assignment.items()
        }
        assert global_satisfaction(relabeled, shifted) == pytest.approx(
            global_satisfaction(market, matching), abs=1e-12
        )


class TestKnapsackSelect:
    def test_complementarity_beats_rank(self):
        # top-efficiency-rank item A is dropped for the {B, C} bundle
        items = [(1, 7, 0.6), (2, 6, 1.0), (3, 4, 1.0)]
        assert knapsack_select(items, 10) == (2, 3)

    def test_matches_exhaustive_subsets(self):
        items = [(1, 3, 2.5), (2, 5, 4.0), (3, 2, 1.9), (4, 4, 3.1), (5, 1, 0.7)]
        for cap in range(0, 16):
            best_val, best_ids = -1.0, None
            for k in range(len(items) + 1):
                for combo in itertools.combinations(items, k):
                    w = sum(i[1] for i in combo)
                    if w > cap:
                        continue
                    v = sum(i[2] for i in combo)
                    ids = tuple(sorted(i[0] for i in combo))
                    if v > best_val + 1e-9 or (abs(v - best_val) <= 1e-9 and ids < best_ids):
                        best_val, best_ids = v, ids
            assert knapsack_select(items, cap) == best_ids

    def test_loose_capacity_takes_everything(self):
        items = [(1, 2, 1.0), (2, 3, 0.5)]
        assert knapsack_select(items, 100) == (1, 2)

    def test_zero_capacity_takes_nothing(self):
        assert knapsack_select([(1, 1, 9.9)], 0) == ()

    def test_value_tie_breaks_lexicographically(self):
        items = [(4, 2, 1.0), (1, 2, 1.0)]
        assert knapsack_select(items, 2) == (1,)


class TestClass2:
    def test_capacity_never_violated(self, link):
        for seed in range(30):
            market = random_market(seed, link, capacity=6.0)
            matching = match_class2(market)
            for r in market.relays:
                used = sum(market.units_of(s) for s in matching.occupants(r.id))
                assert used <= int(r.resource_capacity)

    def test_zero_capacity_accepts_nobody(self, link):
        market = random_market(5, link, capacity=0.0)
        matching = match_class2(market)
        assert matching.matched_count() == 0

    def test_loose_capacity_matches_everyone_acceptable(self, link):
        market = random_market(5, link, capacity=1e6)
        matching = match_class2(market)
        for s in market.sources:
            if market.source_prefs[s.id].acceptable():
                assert matching.assignment[s.id] is not None

    def test_stable_under_knapsack_blocking(self, link):
        for seed in range(20):
            market = random_market(seed, link, capacity=6.0)
            matching = match_class2(market)
            assert verify_stability(market, matching, MatchingClass.PARTIAL) == []


class TestClass3:
    def test_two_sources_share_one_radio(self):
        # demand sits between the direct rate and the two-way-shared relay
        # rate, so splitting the single radio fully satisfies both sources
        harsh = LinkModel(
            carrier_freq_hz=2.4e9, bandwidth_hz=1e6, noise_power_w=1e-10,
            path_loss_exponent=2.7, half_duplex_factor=0.5,
        )
        s1 = make_source(1, (0.0, 900.0, 100.0), 40.0)
        s2 = make_source(2, (0.0, 1100.0, 100.0), 40.0)
        relay = make_relay(10, (2000.0, 1000.0, 100.0), radio_count=1)
        market = build_market(
            sources=[s1, s2], relays=[relay], destinations=[make_dest()],
            dest_map={1: DEST_ID, 2: DEST_ID}, link=harsh, resource_unit_bps=2e4,
        )
        assert market.direct_rate(1) < 40.0 < market.end_to_end_rate(1, 10, sharers=2)
        matching = match_class3(market)
        assert matching.assignment[1] == (10, 0)
        assert matching.assignment[2] == (10, 0)
        for s in (1, 2):
            assert achieved_rate(market, matching, s) == pytest.approx(
                market.end_to_end_rate(s, 10, sharers=2), rel=1e-12
            )

    def test_steps_nondecreasing_and_final_at_least_initial(self, link):
        for seed in range(10):
            market = random_market(seed, link)
            result = run_class3(market)
            assert result.converged
            assert result.final_satisfaction >= result.initial_satisfaction - 1e-12
            for a, b in zip(result.step_satisfactions, result.step_satisfactions[1:]):
                assert b >= a - 1e-12

    def test_no_improving_step_remains(self, link):
        for seed in range(10):
            market = random_market(seed, link)
            matching = match_class3(market)
            assert verify_stability(market, matching, MatchingClass.SHARED) == []

    def test_sweep_cap_raises_with_best_so_far(self, link):
        market = random_market(0, link, n_sources=8, n_relays=3)
        with pytest.raises(TerminationCapError) as exc_info:
            run_class3(market, max_sweeps=1)
        best = exc_info.value.best
        assert best is not None and best.shared


class TestVerifyStability:
    def test_worst_assignment_has_blocking_pairs(self, link):
        # aligned preferences: everyone ranks relay 10 above relay 11
        s1 = make_source(1, (400.0, 1000.0, 100.0), 1e5)
        s2 = make_source(2, (0.0, 1000.0, 100.0), 1e5)
        near = make_relay(10, (2000.0, 1000.0, 100.0), radio_count=1)
        far = make_relay(11, (2400.0, 1600.0, 100.0), radio_count=1)
        market = build_market(
            sources=[s1, s2], relays=[near, far], destinations=[make_dest()],
            dest_map={1: DEST_ID, 2: DEST_ID}, link=link, resource_unit_bps=2e4,
        )
        worst = Matching({1: (11, 0), 2: (10, 0)})
        blocking = verify_stability(market, worst, MatchingClass.FIXED_QUOTA)
        assert ("pair", 1, 10) in blocking

    def test_empty_matching_reports_mutual_pair(self, link):
        market = random_market(3, link, n_sources=1, n_relays=1)
        empty = Matching({0: None})
        blocking = verify_stability(market, empty, MatchingClass.FIXED_QUOTA)
        assert ("pair", 0, 100) in blocking

    def test_inconsistent_matching_rejected(self, link):
        market = random_market(3, link, n_sources=2, n_relays=1)
        bogus = Matching({0: (999, 0), 1: None})
        with pytest.raises(MatchingValidationError):
            verify_stability(market, bogus, MatchingClass.FIXED_QUOTA)

    def test_quota_overflow_rejected(self, link):
        market = random_market(3, link, n_sources=3, n_relays=1, radio_count=1)
        overfull = Matching({0: (100, 0), 1: (100, 1), 2: None})
        with pytest.raises(MatchingValidationError):
            verify_stability(market, overfull, MatchingClass.FIXED_QUOTA)
