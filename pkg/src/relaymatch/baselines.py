"""Ground-truth and comparison algorithms: exhaustive optimum, best-response
dynamics, and seeded random assignment."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InstanceTooLargeError
from .matching import Matching, MatchingClass, _canonical_matching, _fill_unmatched, global_satisfaction
from .model import satisfaction
from .preferences import Market

DEFAULT_ENUM_CAP = 10_000_000

_ENUM_CHUNK = 200_000


@dataclass
class OracleResult:
    matching: Matching
    optimum: float
    enumerated: int


def mutually_acceptable(market: Market, source_id: int) -> tuple[int, ...]:
    """Relays acceptable to the source whose lists also rank the source."""
    out = []
    for r in market.source_prefs[source_id].acceptable():
        ranked = dict(market.relay_prefs[r].ranked)
        if source_id in ranked and ranked[source_id] > market.relay_prefs[r].cutoff:
            out.append(r)
    return tuple(out)


def _search_space(market: Market, cls: MatchingClass) -> int:
    total = 1
    for s in market.sources:
        if cls is MatchingClass.SHARED:
            ok = set(market.source_prefs[s.id].acceptable())
            n_opts = 1 + sum(1 for key in market.radios() if key[0] in ok)
        else:
            n_opts = 1 + len(mutually_acceptable(market, s.id))
        total *= n_opts
    return total


def iter_feasible(market: Market, cls: MatchingClass):
    """Yield every feasible Matching for Class 1/2 markets (canonical radios)."""
    if cls is MatchingClass.SHARED:
        raise ValueError("use brute_force_optimum for shared (Class 3) markets")
    sources = [s.id for s in market.sources]
    options = {s: (None,) + mutually_acceptable(market, s) for s in sources}
    quotas = market.quotas
    units = {s: market.units_of(s) for s in sources}
    capacity = {r.id: int(r.resource_capacity) for r in market.relays}

    def feasible(choice: tuple) -> bool:
        load: dict[int, int] = {}
        for s, r in zip(sources, choice):
            if r is None:
                continue
            load[r] = load.get(r, 0) + (units[s] if cls is MatchingClass.PARTIAL else 1)
        if cls is MatchingClass.FIXED_QUOTA:
            return all(n <= quotas[r] for r, n in load.items())
        return all(n <= capacity[r] for r, n in load.items())

    for choice in itertools.product(*(options[s] for s in sources)):
        if not feasible(choice):
            continue
        pairs = {s: r for s, r in zip(sources, choice) if r is not None}
        matching = _fill_unmatched(market, _canonical_matching(pairs))
        yield matching


def _encoding(matching: Matching, sources: list[int]) -> tuple:
    return tuple(matching.assignment.get(s) or (-1, -1) for s in sources)


def brute_force_optimum(
    market: Market, cls: MatchingClass, cap: int = DEFAULT_ENUM_CAP
) -> OracleResult:
    """Enumerate every feasible assignment and return the satisfaction
    maximizer (ties: lexicographically smallest encoding). Refuses with
    InstanceTooLargeError when the search space exceeds ``cap``."""
    space = _search_space(market, cls)
    if space > cap:
        raise InstanceTooLargeError(
            f"search space {space} exceeds enumeration cap {cap}"
        )
    if not market.sources:
        return OracleResult(Matching({}, shared=cls is MatchingClass.SHARED),
                            global_satisfaction(market, Matching({})), 1)
    if cls is MatchingClass.SHARED:
        return _brute_force_shared(market)
    sources = [s.id for s in market.sources]
    best = None
    best_sat = -1.0
    best_enc = None
    count = 0
    for matching in iter_feasible(market, cls):
        count += 1
        sat = global_satisfaction(market, matching)
        enc = _encoding(matching, sources)
        if sat > best_sat or (sat == best_sat and enc < best_enc):
            best, best_sat, best_enc = matching, sat, enc
    return OracleResult(matching=best, optimum=best_sat, enumerated=count)


def _brute_force_shared(market: Market) -> OracleResult:
    """Vectorized exhaustive evaluation of shared-radio assignments."""
    sources = [s.id for s in market.sources]
    radios = market.radios()
    radio_index = {key: j for j, key in enumerate(radios)}
    options: list[list[int]] = []  # per source: -1 (unmatched) then radio indices
    for s in sources:
        ok = set(market.source_prefs[s].acceptable())
        opts = [-1] + [radio_index[key] for key in radios if key[0] in ok]
        options.append(opts)
    radices = [len(o) for o in options]
    total = math.prod(radices)
    n_s, n_r = len(sources), len(radios)
    base = np.zeros((n_s, n_r))
    direct = np.zeros(n_s)
    demand = np.array([market.drone(s).demand_bps for s in sources])
    for i, s in enumerate(sources):
        try:
            direct[i] = market.direct_rate(s)
        except DegenerateGeometryError:
            direct[i] = 0.0
        for key, j in radio_index.items():
            if key[0] in set(market.source_prefs[s].acceptable()):
                base[i, j] = market.end_to_end_rate(s, key[0], sharers=1)
    opt_arrays = [np.array(o, dtype=np.int32) for o in options]
    weights = np.ones(n_s, dtype=np.int64)
    for i in range(n_s - 2, -1, -1):
        weights[i] = weights[i + 1] * radices[i + 1]
    best_sat = -1.0
    best_idx = -1
    for lo in range(0, total, _ENUM_CHUNK):
        hi = min(lo + _ENUM_CHUNK, total)
        idx = np.arange(lo, hi, dtype=np.int64)
        assign = np.empty((hi - lo, n_s), dtype=np.int32)
        for i in range(n_s):
            assign[:, i] = opt_arrays[i][(idx // weights[i]) % radices[i]]
        occ = np.zeros((hi - lo, n_r), dtype=np.int32)
        for j in range(n_r):
            occ[:, j] = (assign == j).sum(axis=1)
        achieved = np.empty((hi - lo, n_s))
        for i in range(n_s):
            col = assign[:, i]
            matched = col >= 0
            achieved[:, i] = direct[i]
            sharers = occ[np.arange(hi - lo), np.clip(col, 0, None)]
            with np.errstate(divide="ignore", invalid="ignore"):
                rates = base[i, np.clip(col, 0, None)] / np.maximum(sharers, 1)
            achieved[matched, i] = rates[matched]
        sat = np.minimum(1.0, achieved / demand[None, :]).mean(axis=1)
        j = int(np.argmax(sat))
        if sat[j] > best_sat:  # strict: first (lex-smallest) encoding wins ties
            best_sat = float(sat[j])
            best_idx = lo + j
    assignment = {}
    rem = best_idx
    for i, s in enumerate(sources):
        opt = options[i][(rem // int(weights[i])) % radices[i]]
        assignment[s] = radios[opt] if opt >= 0 else None
    matching = Matching(dict(sorted(assignment.items())), shared=True)
    return OracleResult(matching=matching, optimum=best_sat, enumerated=total)


def best_response(
    market: Market, cls: MatchingClass, max_iters: int = 100
) -> tuple[Matching, bool]:
    """Round-robin selfish dynamics: each source takes its individually best
    available option with the rest of the matching fixed."""
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    shared = cls is MatchingClass.SHARED
    matching = Matching({s.id: None for s in market.sources}, shared=shared)
    sources = sorted(matching.assignment)
    units = {s: market.units_of(s) for s in sources}
    converged = False
    for _ in range(max_iters):
        moved = False
        for s in sources:
            cur = matching.assignment[s]
            demand = market.drone(s).demand_bps
            best_opt, best_sat = cur, _own_satisfaction(market, matching, s, cur)
            for opt in _available_options(market, matching, s, cls, units):
                if opt == cur:
                    continue
                val = _own_satisfaction(market, matching, s, opt)
                if val > best_sat + 1e-9:
                    best_opt, best_sat = opt, val
            if best_opt != cur:
                matching.assignment[s] = best_opt
                moved = True
        if not moved:
            converged = True
            break
    if not shared:
        matching = _fill_unmatched(
            market,
            _canonical_matching(
                {s: a[0] for s, a in matching.assignment.items() if a is not None}
            ),
        )
    return matching, converged


def _available_options(market, matching, s, cls, units):
    opts: list[tuple[int, int] | None] = [None]
    if cls is MatchingClass.SHARED:
        ok = set(market.source_prefs[s].acceptable())
        opts.extend(key for key in market.radios() if key[0] in ok)
        return opts
    for r in mutually_acceptable(market, s):
        occupants = [o for o in matching.occupants(r) if o != s]
        if cls is MatchingClass.FIXED_QUOTA:
            if len(occupants) < market.quotas[r]:
                opts.append((r, len(occupants)))
        else:
            used = sum(units[o] for o in occupants)
            if used + units[s] <= int(market.drone(r).resource_capacity):
                opts.append((r, len(occupants)))
    return opts


def _own_satisfaction(market, matching, s, opt) -> float:
    demand = market.drone(s).demand_bps
    if opt is None:
        try:
            return satisfaction(market.direct_rate(s), demand)
        except DegenerateGeometryError:
            return 0.0
    relay_id, radio = opt
    if matching.shared:
        others = [o for o in matching.radio_occupants(relay_id, radio) if o != s]
        sharers = len(others) + 1
    else:
        sharers = 1
    return satisfaction(market.end_to_end_rate(s, relay_id, sharers=sharers), demand)


def random_assignment(market: Market, cls: MatchingClass, seed: int) -> Matching:
    """Seeded random feasible assignment.

    Shared markets are sampled uniformly (every assignment is feasible).
    Quota/capacity classes use rejection sampling from the uniform product
    distribution, falling back to sequential feasible sampling if no draw
    lands inside the feasible set.
    """
    rng = np.random.default_rng(seed)
    sources = [s.id for s in market.sources]
    if not sources:
        return Matching({}, shared=cls is MatchingClass.SHARED)
    if cls is MatchingClass.SHARED:
        radios = market.radios()
        assignment = {}
        for s in sources:
            ok = set(market.source_prefs[s].acceptable())
            opts = [None] + [key for key in radios if key[0] in ok]
            assignment[s] = opts[int(rng.integers(len(opts)))]
        return Matching(dict(sorted(assignment.items())), shared=True)
    options = {s: (None,) + mutually_acceptable(market, s) for s in sources}
    units = {s: market.units_of(s) for s in sources}
    quotas = market.quotas
    capacity = {r.id: int(r.resource_capacity) for r in market.relays}

    def feasible(choice: dict[int, int | None]) -> bool:
        load: dict[int, int] = {}
        for s, r in choice.items():
            if r is None:
                continue
            load[r] = load.get(r, 0) + (units[s] if cls is MatchingClass.PARTIAL else 1)
        if cls is MatchingClass.FIXED_QUOTA:
            return all(n <= quotas[r] for r, n in load.items())
        return all(n <= capacity[r] for r, n in load.items())

    for _ in range(10_000):
        choice = {s: options[s][int(rng.integers(len(options[s])))] for s in sources}
        if feasible(choice):
            pairs = {s: r for s, r in choice.items() if r is not None}
            return _fill_unmatched(market, _canonical_matching(pairs))
    # dense market: place sources one by one among still-feasible options
    choice = {}
    for s in rng.permutation(sources):
        s = int(s)
        feas = [r for r in options[s] if feasible({**choice, s: r})]
        choice[s] = feas[int(rng.integers(len(feas)))]
    pairs = {s: r for s, r in choice.items() if r is not None}
    return _fill_unmatched(market, _canonical_matching(pairs))
