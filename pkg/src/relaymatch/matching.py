"""The three matching engines and stability verification.

Class 1 (fixed quotas): source-proposing deferred acceptance.
Class 2 (resource complementarity): proposal rounds where each relay keeps the
subset of applicants maximizing total efficiency under its residual capacity
(exact knapsack).
Class 3 (shared radios): greedy initialization followed by local search over
single moves and pairwise swaps under the global-satisfaction criterion.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import (
    DegenerateGeometryError,
    MatchingValidationError,
    TerminationCapError,
)
from .model import satisfaction
from .preferences import SCORE_TOL, Market

# Threshold a local-search step must beat to count as an improvement.
IMPROVE_TOL = 1e-9

DEFAULT_CLASS3_SWEEP_CAP = 1000


class MatchingClass(enum.IntEnum):
    FIXED_QUOTA = 1
    PARTIAL = 2
    SHARED = 3


Assignment = dict[int, "tuple[int, int] | None"]


@dataclass
class Matching:
    """Source id -> (relay id, radio index), or None when unmatched.

    ``shared`` marks Class 3 outputs, where a source's achieved rate divides
    by its radio's occupant count.
    """

    assignment: Assignment
    shared: bool = False

    def matched_count(self) -> int:
        return sum(1 for a in self.assignment.values() if a is not None)

    def occupants(self, relay_id: int) -> list[int]:
        return sorted(s for s, a in self.assignment.items() if a is not None and a[0] == relay_id)

    def radio_occupants(self, relay_id: int, radio: int) -> list[int]:
        return sorted(
            s for s, a in self.assignment.items() if a == (relay_id, radio)
        )

    def radio_loads(self) -> dict[tuple[int, int], int]:
        loads: dict[tuple[int, int], int] = {}
        for a in self.assignment.values():
            if a is not None:
                loads[a] = loads.get(a, 0) + 1
        return loads

    def copy(self) -> "Matching":
        return Matching(dict(self.assignment), self.shared)


def achieved_rate(market: Market, matching: Matching, source_id: int) -> float:
    """Rate the source actually gets: relayed if matched, direct otherwise."""
    a = matching.assignment.get(source_id)
    if a is None:
        if source_id not in market.dest_map:
            return 0.0
        try:
            return market.direct_rate(source_id)
        except DegenerateGeometryError:
            return 0.0
    relay_id, radio = a
    sharers = len(matching.radio_occupants(relay_id, radio)) if matching.shared else 1
    return market.end_to_end_rate(source_id, relay_id, sharers=sharers)


def global_satisfaction(market: Market, matching: Matching) -> float:
    """Mean capped rate ratio over all sources (1.0 for an empty market)."""
    if not market.sources:
        return 1.0
    total = 0.0
    for s in market.sources:
        total += satisfaction(achieved_rate(market, matching, s.id), s.demand_bps)
    return total / len(market.sources)


# ---------------------------------------------------------------------------
# Deferred acceptance core (shared by Class 1 and the multilevel cascade)
# ---------------------------------------------------------------------------


@dataclass
class DAResult:
    match: dict[int, int]          # proposer -> acceptor
    holds: dict[int, list[int]]    # acceptor -> held proposers
    proposals: int
    rounds: int


def deferred_acceptance(
    proposer_lists: dict[int, tuple[int, ...]],
    acceptor_rank: dict[int, dict[int, int]],
    quotas: dict[int, int],
    on_round=None,
) -> DAResult:
    """Round-based proposer-optimal deferred acceptance with quotas.

    ``proposer_lists`` hold acceptable acceptors, best first; proposers absent
    from an acceptor's rank map are unacceptable to it. The outcome is order
    independent, so processing whole rounds keeps the classic result while
    giving the harness natural iteration boundaries.
    """
    next_idx = {p: 0 for p in proposer_lists}
    holds: dict[int, list[int]] = {a: [] for a in acceptor_rank}
    match: dict[int, int] = {}
    free = sorted(p for p, lst in proposer_lists.items() if lst)
    proposals = 0
    rounds = 0
    while free:
        rounds += 1
        applications: dict[int, list[int]] = {}
        still_free: list[int] = []
        for p in free:
            lst = proposer_lists[p]
            if next_idx[p] >= len(lst):
                continue  # exhausted: stays unmatched
            a = lst[next_idx[p]]
            next_idx[p] += 1
            proposals += 1
            applications.setdefault(a, []).append(p)
        for a in sorted(applications):
            rank = acceptor_rank[a]
            pool = holds[a] + [p for p in applications[a] if p in rank]
            rejected_now = [p for p in applications[a] if p not in rank]
            pool.sort(key=lambda p: rank[p])
            kept, bumped = pool[: quotas[a]], pool[quotas[a] :]
            holds[a] = kept
            for p in kept:
                match[p] = a
            for p in bumped + rejected_now:
                if match.get(p) == a:
                    del match[p]
                still_free.append(p)
        # proposers rejected this round go again next round
        still_free.extend(
            p for p in free if p not in match and next_idx[p] < len(proposer_lists[p])
            and p not in still_free
        )
        free = sorted(set(p for p in still_free if next_idx[p] < len(proposer_lists[p])))
        if on_round is not None:
            on_round(dict(match))
    return DAResult(match=match, holds=holds, proposals=proposals, rounds=rounds)


def _canonical_matching(pairs: dict[int, int], shared: bool = False) -> Matching:
    """Assign radio indices deterministically: occupants by ascending id."""
    per_relay: dict[int, list[int]] = {}
    for s, r in pairs.items():
        per_relay.setdefault(r, []).append(s)
    assignment: Assignment = {}
    for r, occupants in per_relay.items():
        for k, s in enumerate(sorted(occupants)):
            assignment[s] = (r, k)
    return Matching(assignment, shared=shared)


@dataclass
class Class1Stats:
    proposals: int
    rounds: int


def run_class1(market: Market, on_round=None) -> tuple[Matching, Class1Stats]:
    proposer_lists = {s.id: market.source_prefs[s.id].acceptable() for s in market.sources}
    acceptor_rank = {
        r.id: {c: i for i, (c, _) in enumerate(market.relay_prefs[r.id].ranked)}
        for r in market.relays
    }

    def wrap(pairs):
        if on_round is not None:
            on_round(_fill_unmatched(market, _canonical_matching(pairs)))

    res = deferred_acceptance(
        proposer_lists, acceptor_rank, market.quotas, on_round=wrap if on_round else None
    )
    matching = _fill_unmatched(market, _canonical_matching(res.match))
    return matching, Class1Stats(proposals=res.proposals, rounds=res.rounds)


def _fill_unmatched(market: Market, matching: Matching) -> Matching:
    for s in market.sources:
        matching.assignment.setdefault(s.id, None)
    matching.assignment = dict(sorted(matching.assignment.items()))
    return matching


def match_class1(market: Market) -> Matching:
    """Source-proposing deferred acceptance with fixed quotas (Class 1)."""
    matching, _ = run_class1(market)
    return matching


# ---------------------------------------------------------------------------
# Class 2: partial substitutability (per-relay exact knapsack)
# ---------------------------------------------------------------------------


def knapsack_select(
    items: list[tuple[int, int, float]], capacity: int
) -> tuple[int, ...]:
    """Exact 0/1 knapsack over (id, weight, value) items.

    Returns the chosen ids (ascending); value ties within SCORE_TOL break
    toward the lexicographically smaller id tuple.
    """
    if capacity < 0:
        capacity = 0
    dp: dict[int, tuple[float, tuple[int, ...]]] = {0: (0.0, ())}
    for sid, w, v in sorted(items):
        if w > capacity:
            continue
        additions: dict[int, tuple[float, tuple[int, ...]]] = {}
        for wt, (val, ids) in dp.items():
            w2 = wt + w
            if w2 > capacity:
                continue
            cand = (val + v, ids + (sid,))
            cur = additions.get(w2) or dp.get(w2)
            if cur is None or cand[0] > cur[0] + SCORE_TOL or (
                abs(cand[0] - cur[0]) <= SCORE_TOL and cand[1] < cur[1]
            ):
                additions[w2] = cand
        dp.update(additions)
    best_val, best_ids = 0.0, ()
    for val, ids in dp.values():
        if val > best_val + SCORE_TOL or (abs(val - best_val) <= SCORE_TOL and ids < best_ids):
            best_val, best_ids = val, ids
    return best_ids


@dataclass
class Class2Stats:
    proposals: int
    rounds: int


def run_class2(market: Market, on_round=None) -> tuple[Matching, Class2Stats]:
    acceptable = {s.id: market.source_prefs[s.id].acceptable() for s in market.sources}
    score = {
        r.id: dict(market.relay_prefs[r.id].ranked) for r in market.relays
    }
    units = {s.id: market.units_of(s.id) for s in market.sources}
    capacity = {r.id: int(r.resource_capacity) for r in market.relays}
    proposed: set[tuple[int, int]] = set()
    held_by: dict[int, int] = {}  # source -> relay currently holding it
    holds: dict[int, list[int]] = {r.id: [] for r in market.relays}
    proposals = 0
    rounds = 0
    while True:
        applications: dict[int, list[int]] = {}
        progressed = False
        for s in market.sources:
            if s.id in held_by:
                continue
            for r in acceptable[s.id]:
                if (s.id, r) not in proposed:
                    proposed.add((s.id, r))
                    applications.setdefault(r, []).append(s.id)
                    proposals += 1
                    progressed = True
                    break
        if not progressed:
            break
        rounds += 1
        for r in sorted(applications):
            pool = sorted(set(holds[r]) | set(applications[r]))
            items = [(s, units[s], score[r][s]) for s in pool]
            chosen = knapsack_select(items, capacity[r])
            for s in holds[r]:
                if s not in chosen:
                    del held_by[s]
            holds[r] = sorted(chosen)
            for s in chosen:
                held_by[s] = r
        if on_round is not None:
            on_round(_fill_unmatched(market, _canonical_matching(dict(held_by))))
    matching = _fill_unmatched(market, _canonical_matching(dict(held_by)))
    return matching, Class2Stats(proposals=proposals, rounds=rounds)


def match_class2(market: Market) -> Matching:
    """Partial-substitutability matching: relays accept by efficiency under
    residual resource capacity (Class 2)."""
    matching, _ = run_class2(market)
    return matching


# ---------------------------------------------------------------------------
# Class 3: no substitutability (shared radios, global-criterion local search)
# ---------------------------------------------------------------------------


class _SharedState:
    """Incremental bookkeeping for the Class 3 search.

    Per-source satisfaction divides the sharers=1 rate by the radio's
    occupant count, so single moves and swaps re-evaluate only the affected
    radios.
    """

    def __init__(self, market: Market, assignment: Assignment | None = None):
        self.market = market
        self.n = len(market.sources)
        self.demand = {s.id: s.demand_bps for s in market.sources}
        self.options: dict[int, list[tuple[int, int]]] = {}
        self.base: dict[int, dict[tuple[int, int], float]] = {}
        radios = market.radios()
        for s in market.sources:
            ok = set(market.source_prefs[s.id].acceptable())
            opts = [key for key in radios if key[0] in ok]
            self.options[s.id] = opts
            rates = {}
            for key in opts:
                rates[key] = market.end_to_end_rate(s.id, key[0], sharers=1)
            self.base[s.id] = rates
        self.direct_sat = {}
        for s in market.sources:
            try:
                self.direct_sat[s.id] = satisfaction(market.direct_rate(s.id), s.demand_bps)
            except DegenerateGeometryError:
                self.direct_sat[s.id] = 0.0
        self.assign: dict[int, tuple[int, int] | None] = {s.id: None for s in market.sources}
        self.occ: dict[tuple[int, int], list[int]] = {key: [] for key in radios}
        if assignment:
            for s, a in assignment.items():
                if a is not None:
                    self.assign[s] = a
                    self.occ[a].append(s)
            for key in self.occ:
                self.occ[key].sort()

    def _sat(self, s: int, radio: tuple[int, int] | None, occupancy: int) -> float:
        if radio is None:
            return self.direct_sat[s]
        return min(1.0, self.base[s][radio] / occupancy / self.demand[s])

    def source_sat(self, s: int) -> float:
        a = self.assign[s]
        return self._sat(s, a, len(self.occ[a]) if a is not None else 0)

    def total(self) -> float:
        return sum(self.source_sat(s) for s in self.assign)

    def move_delta(self, s: int, target: tuple[int, int] | None) -> float:
        """Change in summed satisfaction if s moves to ``target``."""
        a = self.assign[s]
        delta = 0.0
        if a is not None:
            n_a = len(self.occ[a])
            delta -= self._sat(s, a, n_a)
            for o in self.occ[a]:
                if o != s:
                    delta += self._sat(o, a, n_a - 1) - self._sat(o, a, n_a)
        else:
            delta -= self.direct_sat[s]
        if target is not None:
            n_b = len(self.occ[target])
            delta += self._sat(s, target, n_b + 1)
            for o in self.occ[target]:
                delta += self._sat(o, target, n_b + 1) - self._sat(o, target, n_b)
        else:
            delta += self.direct_sat[s]
        return delta

    def apply_move(self, s: int, target: tuple[int, int] | None) -> None:
        a = self.assign[s]
        if a is not None:
            self.occ[a].remove(s)
        if target is not None:
            self.occ[target].append(s)
            self.occ[target].sort()
        self.assign[s] = target

    def swap_delta(self, s1: int, s2: int) -> float:
        a, b = self.assign[s1], self.assign[s2]
        n_a, n_b = len(self.occ[a]), len(self.occ[b])
        return (
            self._sat(s1, b, n_b) - self._sat(s1, a, n_a)
            + self._sat(s2, a, n_a) - self._sat(s2, b, n_b)
        )

    def apply_swap(self, s1: int, s2: int) -> None:
        a, b = self.assign[s1], self.assign[s2]
        self.occ[a].remove(s1)
        self.occ[b].remove(s2)
        self.occ[a].append(s2)
        self.occ[b].append(s1)
        self.occ[a].sort()
        self.occ[b].sort()
        self.assign[s1], self.assign[s2] = b, a

    def matching(self) -> Matching:
        return Matching(dict(sorted(self.assign.items())), shared=True)


@dataclass
class Class3Result:
    matching: Matching
    evaluations: int
    sweeps: int
    converged: bool
    initial_satisfaction: float
    final_satisfaction: float
    step_satisfactions: list[float] = field(default_factory=list)


def _greedy_init(state: _SharedState) -> int:
    """Each source joins the radio maximizing its shared rate given current
    occupancy; returns the number of options evaluated."""
    evals = 0
    for s in sorted(state.assign):
        best_key = None
        best_rate = 0.0
        for key in state.options[s]:
            evals += 1
            rate = state.base[s][key] / (len(state.occ[key]) + 1)
            if rate > best_rate + IMPROVE_TOL or (
                best_key is None and rate > 0.0
            ):
                best_key, best_rate = key, rate
        if best_key is not None:
            state.apply_move(s, best_key)
    return evals


def run_class3(
    market: Market,
    initial: Matching | None = None,
    max_sweeps: int | None = None,
    on_sweep=None,
) -> Class3Result:
    """Greedy initialization (unless warm-started) plus local search.

    Raises TerminationCapError if the search does not converge within
    ``max_sweeps`` full scan passes; the exception carries the best matching
    found.
    """
    cap = max_sweeps if max_sweeps is not None else DEFAULT_CLASS3_SWEEP_CAP
    state = _SharedState(market, initial.assignment if initial is not None else None)
    evals = 0
    if initial is None:
        evals += _greedy_init(state)
    n = state.n if state.n else 1
    init_sat = state.total() / n
    steps: list[float] = []
    sweeps = 0
    converged = False
    sources = sorted(state.assign)
    while sweeps < cap:
        sweeps += 1
        improved = False
        for s in sources:
            for target in state.options[s] + [None]:
                if target == state.assign[s]:
                    continue
                evals += 1
                if state.move_delta(s, target) > IMPROVE_TOL:
                    state.apply_move(s, target)
                    steps.append(state.total() / n)
                    improved = True
        for i, s1 in enumerate(sources):
            if state.assign[s1] is None:
                continue
            for s2 in sources[i + 1 :]:
                if state.assign[s2] is None or state.assign[s2] == state.assign[s1]:
                    continue
                if state.assign[s2][0] not in {k[0] for k in state.options[s1]}:
                    continue
                if state.assign[s1][0] not in {k[0] for k in state.options[s2]}:
                    continue
                evals += 1
                if state.swap_delta(s1, s2) > IMPROVE_TOL:
                    state.apply_swap(s1, s2)
                    steps.append(state.total() / n)
                    improved = True
        if on_sweep is not None:
            on_sweep(state.matching())
        if not improved:
            converged = True
            break
    result = Class3Result(
        matching=state.matching(),
        evaluations=evals,
        sweeps=sweeps,
        converged=converged,
        initial_satisfaction=init_sat,
        final_satisfaction=state.total() / n,
        step_satisfactions=steps,
    )
    if not converged:
        raise TerminationCapError(
            f"class 3 search did not converge within {cap} sweeps", best=result.matching
        )
    return result


def match_class3(market: Market, max_sweeps: int | None = None) -> Matching:
    """Shared-radio matching under the global-satisfaction criterion (Class 3)."""
    return run_class3(market, max_sweeps=max_sweeps).matching


# ---------------------------------------------------------------------------
# Stability verification
# ---------------------------------------------------------------------------


def validate_matching(market: Market, matching: Matching, cls: MatchingClass) -> None:
    """Raise MatchingValidationError if the matching breaks class invariants."""
    errors = []
    relay_ids = {r.id for r in market.relays}
    source_ids = {s.id for s in market.sources}
    for s, a in matching.assignment.items():
        if s not in source_ids:
            errors.append(f"assignment references unknown source {s}")
            continue
        if a is None:
            continue
        r, radio = a
        if r not in relay_ids:
            errors.append(f"source {s} assigned to unknown relay {r}")
            continue
        if radio < 0:
            errors.append(f"source {s} has negative radio index")
        if r not in market.source_prefs[s].acceptable():
            errors.append(f"source {s} assigned to unacceptable relay {r}")
        if cls is MatchingClass.SHARED and radio >= market.drone(r).radio_count:
            errors.append(f"source {s} assigned to nonexistent radio {radio} of relay {r}")
    for r in market.relays:
        occupants = matching.occupants(r.id)
        if cls is MatchingClass.FIXED_QUOTA:
            if len(occupants) > market.quotas[r.id]:
                errors.append(f"relay {r.id} exceeds quota {market.quotas[r.id]}")
            loads = matching.radio_loads()
            for key, n in loads.items():
                if key[0] == r.id and n > 1:
                    errors.append(f"relay {r.id} radio {key[1]} serves {n} sources")
        elif cls is MatchingClass.PARTIAL:
            used = sum(market.units_of(s) for s in occupants)
            if used > int(r.resource_capacity):
                errors.append(
                    f"relay {r.id} resource overdraft: {used} > {int(r.resource_capacity)}"
                )
    if errors:
        raise MatchingValidationError("; ".join(errors))


def _pref_position(market: Market, source_id: int, relay_id: int | None) -> float:
    """Rank of a relay in a source's acceptable list; unmatched ranks last."""
    acceptable = market.source_prefs[source_id].acceptable()
    if relay_id is None:
        return float(len(acceptable))
    try:
        return float(acceptable.index(relay_id))
    except ValueError:
        return float(len(acceptable))


def verify_stability(
    market: Market, matching: Matching, cls: MatchingClass
) -> list[tuple]:
    """Return blocking certificates; an empty list means stable.

    Class 1/2 certificates are ("pair", source, relay); Class 3 certificates
    are ("move", source, radio-or-None) and ("swap", s1, s2).
    """
    validate_matching(market, matching, cls)
    if cls is MatchingClass.SHARED:
        return _improving_steps(market, matching)
    blocking: list[tuple] = []
    relay_rank = {
        r.id: {c: i for i, (c, _) in enumerate(market.relay_prefs[r.id].ranked)}
        for r in market.relays
    }
    for s in market.sources:
        cur = matching.assignment.get(s.id)
        cur_relay = cur[0] if cur is not None else None
        cur_pos = _pref_position(market, s.id, cur_relay)
        for pos, r in enumerate(market.source_prefs[s.id].acceptable()):
            if pos >= cur_pos:
                break
            rank = relay_rank[r]
            if s.id not in rank:
                continue
            occupants = matching.occupants(r)
            if cls is MatchingClass.FIXED_QUOTA:
                if len(occupants) < market.quotas[r]:
                    blocking.append(("pair", s.id, r))
                elif occupants and max(rank.get(o, float("inf")) for o in occupants) > rank[s.id]:
                    blocking.append(("pair", s.id, r))
            else:  # PARTIAL: feasible given what r would optimally drop
                score = dict(market.relay_prefs[r].ranked)
                pool = sorted(set(occupants) | {s.id})
                items = [(x, market.units_of(x), score[x]) for x in pool]
                chosen = knapsack_select(items, int(market.drone(r).resource_capacity))
                cur_value = sum(score[o] for o in occupants)
                new_value = sum(score[x] for x in chosen)
                if s.id in chosen and new_value > cur_value + SCORE_TOL:
                    blocking.append(("pair", s.id, r))
    return blocking


def _improving_steps(market: Market, matching: Matching) -> list[tuple]:
    state = _SharedState(market, matching.assignment)
    certificates: list[tuple] = []
    sources = sorted(state.assign)
    for s in sources:
        for target in state.options[s] + [None]:
            if target == state.assign[s]:
                continue
            if state.move_delta(s, target) > IMPROVE_TOL:
                certificates.append(("move", s, target))
    for i, s1 in enumerate(sources):
        if state.assign[s1] is None:
            continue
        for s2 in sources[i + 1 :]:
            if state.assign[s2] is None or state.assign[s2] == state.assign[s1]:
                continue
            if state.assign[s2][0] not in {k[0] for k in state.options[s1]}:
                continue
            if state.assign[s1][0] not in {k[0] for k in state.options[s2]}:
                continue
            if state.swap_delta(s1, s2) > IMPROVE_TOL:
                certificates.append(("swap", s1, s2))
    return certificates
