"""Time-evolving scenarios: churn, warm re-matching, and trajectory-aware
relay choice with store-and-forward ferrying."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigurationError, RelayMatchError
from .matching import (
    Matching,
    MatchingClass,
    _SharedState,
    _canonical_matching,
    _fill_unmatched,
    run_class1,
    run_class2,
    run_class3,
)
from .model import Drone, LinkModel, Role, Vec3, link_rate_bps, relay_rate_bps
from .preferences import (
    Market,
    PreferenceList,
    build_market,
    rank_candidates,
    resource_units,
)


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear path: strictly increasing (time_s, position) waypoints.

    Queries interpolate linearly and extrapolate by holding the endpoint
    positions constant.
    """

    waypoints: tuple[tuple[float, Vec3], ...]

    def __post_init__(self):
        if not self.waypoints:
            raise ConfigurationError("trajectory needs at least one waypoint")
        times = [t for t, _ in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("waypoint times must be strictly increasing")

    @classmethod
    def static(cls, position: Vec3) -> "Trajectory":
        return cls(((0.0, tuple(position)),))

    def is_static(self) -> bool:
        return len(self.waypoints) == 1

    def position_at(self, t: float) -> Vec3:
        pts = self.waypoints
        if t <= pts[0][0]:
            return pts[0][1]
        if t >= pts[-1][0]:
            return pts[-1][1]
        for (t0, p0), (t1, p1) in zip(pts, pts[1:]):
            if t0 <= t <= t1:
                w = (t - t0) / (t1 - t0)
                return tuple(a + w * (b - a) for a, b in zip(p0, p1))
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class PerturbationEvent:
    """Source churn applied at a given harness iteration."""

    at_iteration: int
    departures: tuple[int, ...] = ()
    arrivals: tuple[Drone, ...] = ()


@dataclass
class DynamicState:
    """Live market + matching between perturbations, with a preference cache."""

    market: Market
    matching: Matching | None
    matching_class: MatchingClass
    cache: dict[int, PreferenceList] = field(default_factory=dict)
    iteration: int = 0
    freed_slots: tuple[int, ...] = ()  # relay ids that lost an occupant last event


def apply_perturbation(state: DynamicState, event: PerturbationEvent) -> DynamicState:
    """Remove departing sources, insert arrivals with fresh preferences, and
    prune the cache. The matching keeps every untouched assignment."""
    if event.at_iteration != state.iteration:
        raise ConfigurationError(
            f"event scheduled for iteration {event.at_iteration}, state is at {state.iteration}"
        )
    market = state.market
    live_ids = {s.id for s in market.sources}
    for dep in event.departures:
        if dep not in live_ids:
            raise RelayMatchError(f"departure of unknown source {dep}")
    all_ids = {d.id for d in market.sources + market.relays + market.destinations}
    for d in event.arrivals:
        if d.id in all_ids:
            raise RelayMatchError(f"arriving drone id {d.id} already exists")
        if d.role is not Role.SOURCE:
            raise RelayMatchError(f"arriving drone {d.id} must be a source")
    departed = set(event.departures)
    survivors = [s for s in market.sources if s.id not in departed]
    new_sources = survivors + list(event.arrivals)
    dest_map = {s: d for s, d in market.dest_map.items() if s not in departed}
    dests = sorted(market.destinations, key=lambda d: d.id)
    for i, d in enumerate(sorted(event.arrivals, key=lambda d: d.id)):
        dest_map[d.id] = dests[i % len(dests)].id
    cache = {
        s.id: state.cache.get(s.id) or market.source_prefs[s.id] for s in survivors
    }
    new_market = build_market(
        sources=new_sources,
        relays=market.relays,
        destinations=market.destinations,
        dest_map=dest_map,
        link=market.link,
        quotas=market.quotas,
        resource_unit_bps=market.resource_unit_bps,
        cached_source_prefs=cache,
    )
    new_cache = dict(new_market.source_prefs)
    matching = None
    freed: list[int] = []
    if state.matching is not None:
        # arrivals stay absent from the kept assignment so a warm re-match
        # can tell them apart from survivors that were simply unmatched
        kept = {
            s: a for s, a in state.matching.assignment.items() if s not in departed
        }
        matching = Matching(dict(sorted(kept.items())), shared=state.matching.shared)
        for dep in sorted(departed):
            a = state.matching.assignment.get(dep)
            if a is not None:
                freed.append(a[0])
    return DynamicState(
        market=new_market,
        matching=matching,
        matching_class=state.matching_class,
        cache=new_cache,
        iteration=state.iteration,
        freed_slots=tuple(freed),
    )


def _incremental_class1(
    market: Market,
    matching: Matching,
    freed_slots: tuple[int, ...],
    on_round=None,
) -> int:
    """Warm Class 1 re-matching from the surviving assignment.

    Two phases restore the source-optimal stable matching without a cold
    restart. First, freed capacity is refilled by vacancy chains over the
    survivors: each open slot is offered down the relay's list to the best
    source that strictly prefers it, and the mover's old slot recurses.
    Survivors only improve here, so a slot refused once stays refusable and
    one pass over the vacancy queue suffices. Second, arrivals propose from
    the top of their lists in ordinary deferred-acceptance rounds; survivors
    bumped by an arrival resume just below their current hold (more
    competition can only push them down). Sources absent from the kept
    assignment are the arrivals. Returns the number of candidate
    considerations plus proposals (the search-effort measure).
    """
    survivors = set(matching.assignment)
    relay_order = {
        r.id: [c for c, _ in market.relay_prefs[r.id].ranked] for r in market.relays
    }
    relay_rank = {
        r: {c: i for i, c in enumerate(order)} for r, order in relay_order.items()
    }
    acceptable = {s.id: market.source_prefs[s.id].acceptable() for s in market.sources}
    pos = {s: {r: i for i, r in enumerate(lst)} for s, lst in acceptable.items()}
    quotas = market.quotas
    holds: dict[int, list[int]] = {r.id: [] for r in market.relays}
    match: dict[int, int] = {}
    for s, cur in matching.assignment.items():
        if cur is not None:
            holds[cur[0]].append(s)
            match[s] = cur[0]
    effort = 0

    # slots that were already open before the event were refused by every
    # survivor then, and survivors only improve below, so only the slots
    # freed by departures need offering out
    open_slots = deque(sorted(freed_slots))
    while open_slots:
        r = open_slots.popleft()
        taker = None
        for c in relay_order[r]:
            if c not in survivors:
                continue
            effort += 1
            if r not in pos[c]:
                continue
            cur = match.get(c)
            if cur is None or pos[c][r] < pos[c][cur]:
                taker = c
                break
        if taker is None:
            continue
        old = match.get(taker)
        if old is not None:
            holds[old].remove(taker)
            open_slots.append(old)
        holds[r].append(taker)
        match[taker] = r

    next_idx = {}
    for s in acceptable:
        if s in match:
            next_idx[s] = pos[s][match[s]] + 1
        elif s in survivors:
            next_idx[s] = len(acceptable[s])  # unmatched in a stable matching stays so
        else:
            next_idx[s] = 0
    free = sorted(s for s in acceptable if s not in match and next_idx[s] < len(acceptable[s]))
    while free:
        applications: dict[int, list[int]] = {}
        for p in free:
            r = acceptable[p][next_idx[p]]
            next_idx[p] += 1
            effort += 1
            applications.setdefault(r, []).append(p)
        for r in sorted(applications):
            rank = relay_rank[r]
            pool = holds[r] + [p for p in applications[r] if p in rank]
            pool.sort(key=lambda p: rank[p])
            kept, bumped = pool[: quotas[r]], pool[quotas[r] :]
            holds[r] = kept
            for p in kept:
                match[p] = r
            for p in bumped:
                if match.get(p) == r:
                    del match[p]
        free = sorted(
            s for s in acceptable
            if s not in match and next_idx[s] < len(acceptable[s])
        )
        if on_round is not None:
            on_round(_fill_unmatched(market, _canonical_matching(dict(match))))

    matching.assignment = _fill_unmatched(market, _canonical_matching(dict(match))).assignment
    return effort


def rematch_incremental(
    state: DynamicState, on_round=None
) -> tuple[Matching, int]:
    """Re-stabilize after a perturbation, reusing the surviving assignment.

    Returns the new matching and the number of search iterations used
    (candidate evaluations / proposals), the quantity to compare against a
    cold run.
    """
    market = state.market
    cls = state.matching_class
    if state.matching is None:
        return _cold_run(market, cls, on_round)
    if cls is MatchingClass.SHARED:
        warm = Matching(
            {
                s.id: state.matching.assignment.get(s.id)
                for s in market.sources
            },
            shared=True,
        )
        # place arrivals greedily before the local search resumes
        seed_state = _SharedState(market, warm.assignment)
        evals = 0
        for s in sorted(seed_state.assign):
            if seed_state.assign[s] is not None:
                continue
            best_key, best_rate = None, 0.0
            for key in seed_state.options[s]:
                evals += 1
                rate = seed_state.base[s][key] / (len(seed_state.occ[key]) + 1)
                if rate > best_rate:
                    best_key, best_rate = key, rate
            if best_key is not None:
                seed_state.apply_move(s, best_key)
        result = run_class3(market, initial=seed_state.matching(), on_sweep=on_round)
        return result.matching, evals + result.evaluations
    if cls is MatchingClass.FIXED_QUOTA:
        # arrivals are the market sources absent from the kept assignment
        matching = Matching(dict(state.matching.assignment), shared=False)
        effort = _incremental_class1(market, matching, state.freed_slots, on_round)
        return matching, effort
    # Class 2: keep holds, let newcomers propose; relays re-run their knapsack
    matching, stats = run_class2(market, on_round=on_round)
    return matching, stats.proposals


def _cold_run(market: Market, cls: MatchingClass, on_round=None) -> tuple[Matching, int]:
    if cls is MatchingClass.FIXED_QUOTA:
        matching, stats = run_class1(market, on_round=on_round)
        return matching, stats.proposals
    if cls is MatchingClass.PARTIAL:
        matching, stats = run_class2(market, on_round=on_round)
        return matching, stats.proposals
    result = run_class3(market, on_sweep=on_round)
    return result.matching, result.evaluations


# ---------------------------------------------------------------------------
# Trajectory-aware matching (static links vs. ferrying)
# ---------------------------------------------------------------------------


MODE_STATIC = "static"
MODE_FERRY = "ferry"


@dataclass
class DynamicMatchResult:
    matching: Matching
    modes: dict[int, str]


def _sample_times(horizon_s: float, step_s: float) -> list[float]:
    n = int(math.floor(horizon_s / step_s + 1e-9))
    return [k * step_s for k in range(n + 1)]


def _pair_static(traj_a: Trajectory, traj_b: Trajectory) -> bool:
    return traj_a.is_static() and traj_b.is_static()


def _at(drone: Drone, traj: Trajectory, t: float) -> Drone:
    pos = traj.position_at(t)
    if pos == drone.position:
        return drone
    return Drone(
        id=drone.id,
        role=drone.role,
        position=tuple(pos),
        tx_power_w=drone.tx_power_w,
        radio_count=drone.radio_count,
        resource_capacity=drone.resource_capacity,
        demand_bps=drone.demand_bps,
        priority=drone.priority,
    )


def dynamic_match(
    market: Market,
    trajectories: dict[int, Trajectory],
    horizon_s: float = 30.0,
    step_s: float = 1.0,
) -> DynamicMatchResult:
    """Score relays by time-averaged rate and by ferry throughput, then match.

    A relay's ferry value is the data it can store while closest to the
    source and deliver while closest to the destination, converted to an
    average rate over the horizon. Sources rank relays by the better of the
    two scores; deferred acceptance makes the assignment; each matched pair
    is labeled static or ferry. With single-waypoint trajectories everything
    reduces exactly to the plain Class 1 match.
    """
    if horizon_s <= 0 or step_s <= 0:
        raise ConfigurationError("horizon_s and step_s must be > 0")
    for d in market.sources + market.relays + market.destinations:
        if d.id not in trajectories:
            raise ConfigurationError(f"drone {d.id} has no trajectory")
    times = _sample_times(horizon_s, step_s)
    link = market.link

    def avg_link_rate(a: Drone, b: Drone) -> float:
        ta, tb = trajectories[a.id], trajectories[b.id]
        if _pair_static(ta, tb):
            return link_rate_bps(_at(a, ta, 0.0), _at(b, tb, 0.0), link)
        return sum(link_rate_bps(_at(a, ta, t), _at(b, tb, t), link) for t in times) / len(times)

    def avg_relay_rate(s: Drone, r: Drone, d: Drone) -> float:
        ts, tr, td = trajectories[s.id], trajectories[r.id], trajectories[d.id]
        if ts.is_static() and tr.is_static() and td.is_static():
            return relay_rate_bps(_at(s, ts, 0.0), _at(r, tr, 0.0), _at(d, td, 0.0), link)
        return sum(
            relay_rate_bps(_at(s, ts, t), _at(r, tr, t), _at(d, td, t), link)
            for t in times
        ) / len(times)

    def ferry_rate(s: Drone, r: Drone, d: Drone) -> float:
        ts, tr, td = trajectories[s.id], trajectories[r.id], trajectories[d.id]
        d_src = [math.dist(tr.position_at(t), ts.position_at(t)) for t in times]
        d_dst = [math.dist(tr.position_at(t), td.position_at(t)) for t in times]
        t_near_src = d_src.index(min(d_src))
        t_near_dst = d_dst.index(min(d_dst))
        if t_near_src >= t_near_dst:
            return 0.0  # does not pass source-then-destination
        collect = sum(
            link_rate_bps(_at(s, ts, times[i]), _at(r, tr, times[i]), link) * step_s
            for i in range(t_near_src + 1)
        )
        deliver = sum(
            link_rate_bps(_at(r, tr, times[i]), _at(d, td, times[i]), link) * step_s
            for i in range(t_near_dst, len(times))
        )
        return min(collect, deliver) / horizon_s

    source_prefs: dict[int, PreferenceList] = {}
    relay_scores: dict[int, list[tuple[int, float]]] = {r.id: [] for r in market.relays}
    relay_units: dict[int, dict[int, int]] = {r.id: {} for r in market.relays}
    mode_for: dict[tuple[int, int], str] = {}
    for s in market.sources:
        dest = market.destination_of(s.id)
        direct = avg_link_rate(s, dest)
        scored = []
        for r in market.relays:
            static_score = avg_relay_rate(s, r, dest)
            f_score = ferry_rate(s, r, dest)
            score = max(static_score, f_score)
            mode_for[(s.id, r.id)] = MODE_FERRY if f_score > static_score else MODE_STATIC
            scored.append((r.id, score))
            u = resource_units(s.demand_bps, market.resource_unit_bps)
            relay_units[r.id][s.id] = u
            relay_scores[r.id].append((s.id, score / u))
        source_prefs[s.id] = PreferenceList(
            owner=s.id, ranked=rank_candidates(scored), cutoff=direct
        )
    relay_prefs = {
        r.id: PreferenceList(
            owner=r.id,
            ranked=rank_candidates(relay_scores[r.id]),
            cutoff=0.0,
            demand_units=relay_units[r.id],
        )
        for r in market.relays
    }
    derived = Market(
        sources=market.sources,
        relays=market.relays,
        destinations=market.destinations,
        dest_map=dict(market.dest_map),
        link=market.link,
        quotas=dict(market.quotas),
        resource_unit_bps=market.resource_unit_bps,
        source_prefs=source_prefs,
        relay_prefs=relay_prefs,
    )
    matching, _ = run_class1(derived)
    modes = {
        s: mode_for[(s, a[0])]
        for s, a in matching.assignment.items()
        if a is not None
    }
    return DynamicMatchResult(matching=matching, modes=modes)
