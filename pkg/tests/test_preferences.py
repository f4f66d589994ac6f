"""Preference-list construction: ranking, cutoffs, ties, and determinism."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relaymatch.errors import ConfigurationError
from relaymatch.model import Drone, LinkModel, Role, link_rate_bps, relay_rate_bps
from relaymatch.preferences import (
    PreferenceList,
    build_market,
    build_relay_prefs,
    build_source_prefs,
    rank_candidates,
    resource_units,
)

from conftest import make_dest, make_relay, make_source, random_market


class TestRankCandidates:
    def test_sorted_by_score_descending(self):
        ranked = rank_candidates([(1, 0.5), (2, 1.0), (3, 0.8)])
        assert [c for c, _ in ranked] == [2, 3, 1]

    def test_exact_tie_breaks_to_lower_id(self):
        ranked = rank_candidates([(7, 1.0), (3, 1.0), (5, 2.0)])
        assert [c for c, _ in ranked] == [5, 3, 7]

    def test_near_tie_within_tolerance_breaks_to_lower_id(self):
        ranked = rank_candidates([(9, 1.0), (2, 1.0 + 1e-12)])
        assert [c for c, _ in ranked] == [2, 9]

    @given(
        raw=st.lists(
            st.tuples(st.integers(0, 50), st.integers(1, 1000)),
            min_size=1,
            max_size=10,
            unique_by=(lambda cs: cs[0], lambda cs: cs[1]),
        ),
        scale=st.floats(min_value=1e-2, max_value=1e3),
    )
    @settings(max_examples=100, deadline=None)
    def test_positive_scaling_preserves_order(self, raw, scale):
        # integer scores, so no pair ever lands inside the tie tolerance
        scores = [(c, float(v)) for c, v in raw]
        base = rank_candidates(scores)
        scaled = rank_candidates([(c, s * scale) for c, s in scores])
        assert [c for c, _ in base] == [c for c, _ in scaled]


class TestResourceUnits:
    def test_ceiling_division(self):
        assert resource_units(2.5e4, 2e4) == 2
        assert resource_units(4e4, 2e4) == 2
        assert resource_units(4.0001e4, 2e4) == 3

    def test_minimum_one_unit(self):
        assert resource_units(1.0, 2e4) == 1

    def test_bad_unit(self):
        with pytest.raises(ConfigurationError):
            resource_units(1e5, 0.0)


class TestSourcePrefs:
    def test_ranking_follows_relay_rate(self, link):
        src = make_source(1, (0.0, 0.0, 100.0), 1e5)
        near = make_relay(10, (1800.0, 1000.0, 100.0))
        far = make_relay(11, (2900.0, 1900.0, 100.0))
        dest = make_dest()
        prefs = build_source_prefs(src, [near, far], dest, link)
        rates = {
            r.id: relay_rate_bps(src, r, dest, link) for r in (near, far)
        }
        expected = sorted(rates, key=lambda r: -rates[r])
        assert [c for c, _ in prefs.ranked] == expected
        assert prefs.cutoff == link_rate_bps(src, dest, link)

    def test_relays_worse_than_direct_are_unacceptable(self, link):
        # destination next door: no two-hop detour can beat the direct link
        src = make_source(1, (0.0, 0.0, 100.0), 1e5)
        dest = make_dest(position=(10.0, 0.0, 100.0))
        relays = [make_relay(10, (2000.0, 0.0, 100.0)), make_relay(11, (2500.0, 500.0, 100.0))]
        prefs = build_source_prefs(src, relays, dest, link)
        assert prefs.acceptable() == ()

    def test_mirrored_relays_tie_to_lower_id(self, link):
        src = make_source(1, (0.0, 0.0, 100.0), 1e5)
        dest = make_dest(position=(4000.0, 0.0, 100.0))
        up = make_relay(12, (2000.0, 700.0, 100.0))
        down = make_relay(11, (2000.0, -700.0, 100.0))
        prefs = build_source_prefs(src, [up, down], dest, link)
        assert [c for c, _ in prefs.ranked] == [11, 12]

    def test_missing_destination_rejected(self, link):
        src = make_source(1, (0.0, 0.0, 100.0), 1e5)
        with pytest.raises(ConfigurationError):
            build_source_prefs(src, [make_relay(10, (1.0, 1.0, 1.0))], None, link)


class TestRelayPrefs:
    def test_equal_demands_rank_by_rate(self, link):
        relay = make_relay(10, (2000.0, 1000.0, 100.0))
        dest = make_dest()
        close = make_source(1, (400.0, 900.0, 100.0), 5e4)
        distant = make_source(2, (0.0, 0.0, 100.0), 5e4)
        prefs = build_relay_prefs(relay, [close, distant], {1: dest, 2: dest}, link, 2e4)
        assert [c for c, _ in prefs.ranked] == [1, 2]

    def test_efficiency_prefers_light_demand(self, link):
        # same position, so identical rates; 8-unit demand halves efficiency
        # four times over versus 2 units
        relay = make_relay(10, (2000.0, 1000.0, 100.0))
        dest = make_dest()
        heavy = make_source(1, (100.0, 100.0, 100.0), 1.6e5)  # 8 units of 2e4
        light = make_source(2, (100.0, 100.0, 100.0), 4.0e4)  # 2 units
        prefs = build_relay_prefs(relay, [heavy, light], {1: dest, 2: dest}, link, 2e4)
        assert [c for c, _ in prefs.ranked] == [2, 1]
        assert prefs.demand_units == {1: 8, 2: 2}
        assert prefs.score_of(2) == pytest.approx(4.0 * prefs.score_of(1), rel=1e-9)

    def test_singleton_applicant(self, link):
        relay = make_relay(10, (2000.0, 1000.0, 100.0))
        dest = make_dest()
        only = make_source(1, (0.0, 0.0, 100.0), 5e4)
        prefs = build_relay_prefs(relay, [only], {1: dest}, link, 2e4)
        assert len(prefs.ranked) == 1 and prefs.ranked[0][0] == 1


class TestPreferenceList:
    def test_rejects_self_ranking(self):
        with pytest.raises(ValueError):
            PreferenceList(owner=1, ranked=((1, 2.0),), cutoff=0.0)

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            PreferenceList(owner=1, ranked=((2, 2.0), (2, 1.0)), cutoff=0.0)

    def test_acceptable_uses_strict_cutoff(self):
        prefs = PreferenceList(owner=1, ranked=((2, 2.0), (3, 1.0)), cutoff=1.0)
        assert prefs.acceptable() == (2,)


class TestDeterminism:
    def test_identical_builds_identical_lists(self, link):
        a = random_market(17, link)
        b = random_market(17, link)
        assert repr(a.source_prefs) == repr(b.source_prefs)
        assert repr(a.relay_prefs) == repr(b.relay_prefs)

    def test_build_market_round_robin_destinations(self, link):
        sources = [make_source(i, (float(i), 0.0, 100.0), 1e5) for i in range(4)]
        relays = [make_relay(10, (2000.0, 0.0, 100.0))]
        dests = [make_dest(position=(4000.0, 0.0, 100.0), i=20),
                 make_dest(position=(4000.0, 500.0, 100.0), i=21)]
        market = build_market(sources=sources, relays=relays, destinations=dests,
                              dest_map=None, link=link)
        assert market.dest_map == {0: 20, 1: 21, 2: 20, 3: 21}
