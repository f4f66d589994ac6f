"""Preference-list construction and the Market container.

Source drones rank relays by end-to-end rate; relay drones rank applicants by
rate per resource unit. All rankings are strict: score ties (within
SCORE_TOL) break toward the lower drone id, so two builds from identical
inputs are identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .model import Drone, LinkModel, Role, link_rate_bps, relay_rate_bps

# Absolute tolerance below which two preference scores count as tied.
SCORE_TOL = 1e-9


@dataclass(frozen=True)
class PreferenceList:
    """One player's strict ranking over the opposing set.

    ``ranked`` is ordered best-first; candidates scoring <= ``cutoff`` are
    unacceptable. ``demand_units`` annotates relay-side lists with each
    applicant's quantized resource demand.
    """

    owner: int
    ranked: tuple[tuple[int, float], ...]
    cutoff: float
    demand_units: dict[int, int] | None = None

    def __post_init__(self):
        seen = set()
        for cand, _ in self.ranked:
            if cand == self.owner:
                raise ValueError(f"player {self.owner} ranks itself")
            if cand in seen:
                raise ValueError(f"player {self.owner} ranks {cand} twice")
            seen.add(cand)

    def acceptable(self) -> tuple[int, ...]:
        """Candidate ids strictly above the cutoff, best first."""
        return tuple(c for c, s in self.ranked if s > self.cutoff)

    def score_of(self, candidate: int) -> float:
        for c, s in self.ranked:
            if c == candidate:
                return s
        raise KeyError(candidate)


def rank_candidates(scored: list[tuple[int, float]]) -> tuple[tuple[int, float], ...]:
    """Sort candidates by score descending; near-ties (SCORE_TOL) by lower id."""
    ordered = sorted(scored, key=lambda cs: (-cs[1], cs[0]))
    # Re-sort each run of tied scores by id so tolerance ties are deterministic.
    out: list[tuple[int, float]] = []
    i = 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and abs(ordered[j + 1][1] - ordered[i][1]) <= SCORE_TOL:
            j += 1
        out.extend(sorted(ordered[i : j + 1], key=lambda cs: cs[0]))
        i = j + 1
    return tuple(out)


def resource_units(demand_bps: float, unit_bps: float) -> int:
    """Quantize a demanded rate to integer resource units (ceiling)."""
    if unit_bps <= 0:
        raise ConfigurationError(f"resource unit must be > 0, got {unit_bps}")
    return max(1, math.ceil(demand_bps / unit_bps))


def build_source_prefs(
    source: Drone,
    relays: list[Drone],
    destination: Drone | None,
    link: LinkModel,
) -> PreferenceList:
    """Rank relays by two-hop rate; relays no better than the direct link fall
    below the cutoff."""
    if destination is None:
        raise ConfigurationError(f"source {source.id} has no destination")
    if not relays:
        raise ConfigurationError(f"source {source.id}: relay set is empty")
    direct = link_rate_bps(source, destination, link)
    scored = [
        (r.id, relay_rate_bps(source, r, destination, link, sharers=1)) for r in relays
    ]
    return PreferenceList(owner=source.id, ranked=rank_candidates(scored), cutoff=direct)


def build_relay_prefs(
    relay: Drone,
    applicants: list[Drone],
    destination_of: dict[int, Drone],
    link: LinkModel,
    resource_unit_bps: float,
    priority_weight: float = 0.0,
) -> PreferenceList:
    """Rank applicants by transmission efficiency: achievable rate through this
    relay per resource unit consumed.

    ``priority_weight`` optionally folds task urgency into the score
    (score * priority**weight); disabled by default.
    """
    units: dict[int, int] = {}
    scored: list[tuple[int, float]] = []
    for s in applicants:
        rate = relay_rate_bps(s, relay, destination_of[s.id], link, sharers=1)
        u = resource_units(s.demand_bps, resource_unit_bps)
        units[s.id] = u
        score = rate / u
        if priority_weight:
            score *= float(s.priority) ** priority_weight
        scored.append((s.id, score))
    return PreferenceList(
        owner=relay.id, ranked=rank_candidates(scored), cutoff=0.0, demand_units=units
    )


@dataclass
class Market:
    """One matching instance: players, quotas, and both sides' preferences."""

    sources: list[Drone]
    relays: list[Drone]
    destinations: list[Drone]
    dest_map: dict[int, int]
    link: LinkModel
    quotas: dict[int, int]
    resource_unit_bps: float
    source_prefs: dict[int, PreferenceList]
    relay_prefs: dict[int, PreferenceList]
    _drones: dict[int, Drone] = field(init=False, repr=False)
    _rate_cache: dict[tuple[int, int], float] = field(init=False, repr=False)

    def __post_init__(self):
        self._drones = {}
        for d in self.sources + self.relays + self.destinations:
            if d.id in self._drones:
                raise ValueError(f"duplicate drone id {d.id}")
            self._drones[d.id] = d
        for rid, q in self.quotas.items():
            if q < 1:
                raise ValueError(f"quota for relay {rid} must be >= 1, got {q}")
        self._rate_cache = {}

    def drone(self, drone_id: int) -> Drone:
        return self._drones[drone_id]

    def destination_of(self, source_id: int) -> Drone:
        return self._drones[self.dest_map[source_id]]

    def direct_rate(self, source_id: int) -> float:
        key = (source_id, source_id)
        if key not in self._rate_cache:
            self._rate_cache[key] = link_rate_bps(
                self._drones[source_id], self.destination_of(source_id), self.link
            )
        return self._rate_cache[key]

    def end_to_end_rate(self, source_id: int, relay_id: int, sharers: int = 1) -> float:
        """Two-hop rate source->relay->destination; exact 1/sharers scaling."""
        key = (source_id, relay_id)
        if key not in self._rate_cache:
            self._rate_cache[key] = relay_rate_bps(
                self._drones[source_id],
                self._drones[relay_id],
                self.destination_of(source_id),
                self.link,
                sharers=1,
            )
        return self._rate_cache[key] / sharers

    def units_of(self, source_id: int) -> int:
        return resource_units(self._drones[source_id].demand_bps, self.resource_unit_bps)

    def radios(self) -> list[tuple[int, int]]:
        """All (relay id, radio index) pairs, deterministic order."""
        out = []
        for r in sorted(self.relays, key=lambda d: d.id):
            out.extend((r.id, k) for k in range(r.radio_count))
        return out


def build_market(
    sources: list[Drone],
    relays: list[Drone],
    destinations: list[Drone],
    dest_map: dict[int, int] | None,
    link: LinkModel,
    quotas: dict[int, int] | None = None,
    resource_unit_bps: float = 1e5,
    priority_weight: float = 0.0,
    cached_source_prefs: dict[int, PreferenceList] | None = None,
) -> Market:
    """Assemble a Market, building both sides' preference lists.

    ``cached_source_prefs`` lets dynamic re-matching reuse lists of surviving
    sources; relay lists are always rebuilt because the applicant set changes.
    """
    for d in sources:
        if d.role is not Role.SOURCE:
            raise ValueError(f"drone {d.id} is not a source")
    for d in relays:
        if d.role is not Role.RELAY:
            raise ValueError(f"drone {d.id} is not a relay")
    if not destinations:
        raise ConfigurationError("at least one destination is required")
    if dest_map is None:
        dests = sorted(destinations, key=lambda d: d.id)
        dest_map = {
            s.id: dests[i % len(dests)].id
            for i, s in enumerate(sorted(sources, key=lambda d: d.id))
        }
    dest_lookup = {s.id: next(d for d in destinations if d.id == dest_map[s.id]) for s in sources}
    if quotas is None:
        quotas = {r.id: r.radio_count for r in relays}

    source_prefs: dict[int, PreferenceList] = {}
    for s in sorted(sources, key=lambda d: d.id):
        if cached_source_prefs is not None and s.id in cached_source_prefs:
            source_prefs[s.id] = cached_source_prefs[s.id]
        else:
            source_prefs[s.id] = build_source_prefs(s, relays, dest_lookup[s.id], link)
    relay_prefs = {
        r.id: build_relay_prefs(
            r,
            sorted(sources, key=lambda d: d.id),
            dest_lookup,
            link,
            resource_unit_bps,
            priority_weight,
        )
        for r in sorted(relays, key=lambda d: d.id)
    }
    return Market(
        sources=sorted(sources, key=lambda d: d.id),
        relays=sorted(relays, key=lambda d: d.id),
        destinations=sorted(destinations, key=lambda d: d.id),
        dest_map=dict(dest_map),
        link=link,
        quotas=dict(quotas),
        resource_unit_bps=resource_unit_bps,
        source_prefs=source_prefs,
        relay_prefs=relay_prefs,
    )
