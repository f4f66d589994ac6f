"""Multi-hop route formation as a cascade of per-level matching markets.

A forward sweep runs deferred acceptance between each pair of adjacent
levels, scoring candidates by bottleneck-so-far rate times an optional
one-step lookahead (the candidate's best achievable next-level rate).
Chains stranded mid-way feed back by marking the failed hop unacceptable,
and the sweep repeats; completed routes are frozen and never displaced.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .errors import ConfigurationError
from .matching import deferred_acceptance
from .model import Drone, LinkModel, link_rate_bps
from .preferences import rank_candidates


@dataclass(frozen=True)
class LevelGraph:
    """Ordered levels of drone ids with candidate edges between adjacent levels."""

    levels: tuple[tuple[int, ...], ...]
    edges: dict[int, tuple[int, ...]]

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ConfigurationError("a level graph needs at least 2 levels")
        seen: set[int] = set()
        for lvl in self.levels:
            for node in lvl:
                if node in seen:
                    raise ConfigurationError(f"node {node} appears in two levels")
                seen.add(node)
        level_of = {n: i for i, lvl in enumerate(self.levels) for n in lvl}
        for node, nxt in self.edges.items():
            for other in nxt:
                if level_of.get(other) != level_of[node] + 1:
                    raise ConfigurationError(
                        f"edge {node}->{other} does not connect adjacent levels"
                    )

    def level_of(self, node: int) -> int:
        for i, lvl in enumerate(self.levels):
            if node in lvl:
                return i
        raise KeyError(node)


@dataclass(frozen=True)
class Route:
    """A completed multi-hop path with its end-to-end rate."""

    source: int
    relays: tuple[int, ...]
    destination: int
    rate_bps: float

    def nodes(self) -> tuple[int, ...]:
        return (self.source,) + self.relays + (self.destination,)


@dataclass
class MultilevelResult:
    routes: tuple[Route, ...]
    converged: bool
    sweeps: int


class _Chain:
    __slots__ = ("source", "path", "bottleneck")

    def __init__(self, source: int):
        self.source = source
        self.path: list[int] = [source]
        self.bottleneck = float("inf")


def multilevel_match(
    graph: LevelGraph,
    drones: Mapping[int, Drone],
    link: LinkModel,
    quotas: Mapping[int, int],
    max_sweeps: int | None = None,
    lookahead: bool = True,
) -> MultilevelResult:
    """Form routes level by level; see module docstring for the protocol.

    ``quotas`` bounds how many chains a node can carry (destinations default
    to the number of sources when absent). Returns the stable route set; a
    False ``converged`` flag is the non-convergence notice when sweeps run
    out before the route set stabilizes.
    """
    n_levels = len(graph.levels)
    cap = max_sweeps if max_sweeps is not None else n_levels * 4
    if cap < 1:
        raise ConfigurationError("max_sweeps must be >= 1")
    sources = sorted(graph.levels[0])
    default_quota = len(sources)

    def quota_of(node: int) -> int:
        return quotas.get(node, default_quota)

    def hop_rate(a: int, b: int) -> float:
        return link_rate_bps(drones[a], drones[b], link)

    best_next: dict[int, float] = {}
    for lvl in graph.levels[:-1]:
        for node in lvl:
            nxt = graph.edges.get(node, ())
            best_next[node] = max((hop_rate(node, z) for z in nxt), default=0.0)

    reserved: dict[int, int] = {}
    bans: dict[int, set[int]] = {s: set() for s in sources}
    routes: dict[int, Route] = {}
    converged = False
    sweeps = 0
    prev_ban_count = 0
    while sweeps < cap:
        sweeps += 1
        pending = [s for s in sources if s not in routes]
        if not pending:
            converged = True
            break
        chains = {s: _Chain(s) for s in pending}
        alive = dict(chains)
        used_this_sweep: dict[int, int] = {}
        for k in range(n_levels - 1):
            if not alive:
                break
            heads = {s: c for s, c in alive.items() if len(c.path) == k + 1}
            if not heads:
                break
            proposer_lists: dict[int, tuple[int, ...]] = {}
            scores: dict[int, dict[int, float]] = {}
            bnecks: dict[tuple[int, int], float] = {}
            acceptors: set[int] = set()
            for s, c in sorted(heads.items()):
                head = c.path[-1]
                scored = []
                for y in graph.edges.get(head, ()):
                    if y in bans[s]:
                        continue
                    b2 = min(c.bottleneck, hop_rate(head, y))
                    factor = best_next[y] if (lookahead and k + 1 < n_levels - 1) else 1.0
                    score = b2 * factor
                    if score <= 0.0:
                        continue
                    scored.append((y, score))
                    bnecks[(s, y)] = b2
                    acceptors.add(y)
                ranked = rank_candidates(scored)
                proposer_lists[s] = tuple(y for y, _ in ranked)
                scores[s] = dict(ranked)
            acceptor_rank = {}
            avail_quota = {}
            for y in sorted(acceptors):
                ranked = rank_candidates(
                    [(s, bnecks[(s, y)]) for s in heads if (s, y) in bnecks]
                )
                acceptor_rank[y] = {s: i for i, (s, _) in enumerate(ranked)}
                avail_quota[y] = max(
                    0, quota_of(y) - reserved.get(y, 0) - used_this_sweep.get(y, 0)
                )
            res = deferred_acceptance(
                proposer_lists,
                {y: r for y, r in acceptor_rank.items()},
                {y: q for y, q in avail_quota.items() if q >= 0},
            )
            for s, c in sorted(heads.items()):
                y = res.match.get(s)
                if y is None:
                    # stranded: ban the hop that led here so the next sweep
                    # routes around it (no upstream hop exists at level 0)
                    if k > 0:
                        bans[s].add(c.path[-1])
                    del alive[s]
                else:
                    c.path.append(y)
                    c.bottleneck = min(c.bottleneck, hop_rate(c.path[-2], y))
                    used_this_sweep[y] = used_this_sweep.get(y, 0) + 1
        new_routes = 0
        for s, c in sorted(alive.items()):
            if len(c.path) == n_levels:
                rate = link.half_duplex_factor * c.bottleneck
                routes[s] = Route(
                    source=s,
                    relays=tuple(c.path[1:-1]),
                    destination=c.path[-1],
                    rate_bps=rate,
                )
                for node in c.path[1:]:
                    reserved[node] = reserved.get(node, 0) + 1
                new_routes += 1
        ban_count = sum(len(b) for b in bans.values())
        if new_routes == 0 and ban_count == prev_ban_count:
            # nothing changed: the remaining sources cannot progress
            converged = True
            break
        prev_ban_count = ban_count
    ordered = tuple(routes[s] for s in sorted(routes))
    return MultilevelResult(routes=ordered, converged=converged, sweeps=sweeps)
