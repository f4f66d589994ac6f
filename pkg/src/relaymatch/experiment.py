"""Experiment orchestration: per-iteration metrics, perturbation handling,
and the Class 2 vs Class 1 sweep."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

from .baselines import OracleResult, brute_force_optimum
from .dynamics import (
    DynamicState,
    PerturbationEvent,
    apply_perturbation,
    rematch_incremental,
)
from .errors import ScenarioValidationError
from .matching import (
    Matching,
    MatchingClass,
    global_satisfaction,
    match_class1,
    match_class2,
    verify_stability,
)
from .preferences import Market
from .scenario import (
    STREAM_ARRIVALS,
    STREAM_DEPARTURES,
    Scenario,
    generate_source,
    make_rng,
    realize_market,
)

METRICS_COLUMNS = (
    "iteration",
    "global_satisfaction",
    "matched_count",
    "blocking_or_improving_count",
    "event",
)
METRICS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MetricsRecord:
    iteration: int
    global_satisfaction: float
    matched_count: int
    blocking_or_improving_count: int
    event: str = ""

    def __post_init__(self):
        if not (0.0 <= self.global_satisfaction <= 1.0 + 1e-12):
            raise ValueError(f"satisfaction out of bounds: {self.global_satisfaction}")

    def row(self) -> tuple:
        return (
            self.iteration,
            self.global_satisfaction,
            self.matched_count,
            self.blocking_or_improving_count,
            self.event,
        )


@dataclass
class RunResult:
    scenario: Scenario
    market: Market
    records: list[MetricsRecord]
    final_matching: Matching
    oracle: OracleResult | None
    incremental_iterations: list[int] = field(default_factory=list)

    def summary(self) -> dict:
        final = self.records[-1] if self.records else None
        out = {
            "schema_version": METRICS_SCHEMA_VERSION,
            "scenario": self.scenario.name,
            "seed": self.scenario.seed,
            "matching_class": int(self.scenario.matching_class),
            "iterations": len(self.records),
            "final_satisfaction": final.global_satisfaction if final else None,
            "final_matched_count": final.matched_count if final else None,
            "final_blocking_or_improving_count": (
                final.blocking_or_improving_count if final else None
            ),
            "incremental_iterations": list(self.incremental_iterations),
            "assignment": {
                str(s): (list(a) if a is not None else None)
                for s, a in sorted(self.final_matching.assignment.items())
            },
        }
        if self.oracle is not None:
            out["oracle_optimum"] = self.oracle.optimum
            out["oracle_enumerated"] = self.oracle.enumerated
            out["oracle_gap"] = self.oracle.optimum - (
                final.global_satisfaction if final else 0.0
            )
        return out


def _realize_event(
    scenario: Scenario, spec: dict, market: Market, arrivals_rng, departures_rng
) -> PerturbationEvent:
    departures = tuple(int(x) for x in spec.get("departures", ()))
    if "depart_count" in spec:
        live = sorted(s.id for s in market.sources)
        n = min(int(spec["depart_count"]), len(live))
        picked = departures_rng.choice(len(live), size=n, replace=False)
        departures = departures + tuple(live[i] for i in sorted(picked))
    arrivals = []
    existing = {d.id for d in market.sources + market.relays + market.destinations}
    next_id = max(existing, default=0) + 1
    for _ in range(int(spec.get("arrive_count", 0))):
        arrivals.append(generate_source(scenario, next_id, arrivals_rng))
        next_id += 1
    return PerturbationEvent(
        at_iteration=int(spec["at_iteration"]),
        departures=departures,
        arrivals=tuple(arrivals),
    )


def _event_tag(event: PerturbationEvent) -> str:
    parts = []
    if event.departures:
        parts.append(f"departure:{len(event.departures)}")
    if event.arrivals:
        parts.append(f"arrival:{len(event.arrivals)}")
    return ";".join(parts)


def run_experiment(scenario: Scenario) -> RunResult:
    """Run the configured engine, recording one MetricsRecord per iteration
    and applying scheduled perturbations via incremental re-matching."""
    market = realize_market(scenario)
    cls = scenario.matching_class
    arrivals_rng = make_rng(scenario.seed, STREAM_ARRIVALS)
    departures_rng = make_rng(scenario.seed, STREAM_DEPARTURES)

    records: list[MetricsRecord] = []
    state = DynamicState(market=market, matching=None, matching_class=cls)

    def emit(matching: Matching, event: str = "") -> None:
        records.append(
            MetricsRecord(
                iteration=len(records),
                global_satisfaction=global_satisfaction(state.market, matching),
                matched_count=matching.matched_count(),
                blocking_or_improving_count=len(
                    verify_stability(state.market, matching, cls)
                ),
                event=event,
            )
        )

    matching, _ = rematch_incremental(state, on_round=emit)
    state.matching = matching
    if not records:
        emit(matching)

    incremental_iters: list[int] = []
    for spec in scenario.perturbations:
        at = int(spec["at_iteration"])
        while len(records) < at:
            emit(state.matching)
        event = _realize_event(scenario, spec, state.market, arrivals_rng, departures_rng)
        state.iteration = event.at_iteration
        state = apply_perturbation(state, event)
        tag = _event_tag(event)
        emit(state.matching, event=tag)
        new_matching, iters = rematch_incremental(state, on_round=emit)
        state.matching = new_matching
        incremental_iters.append(iters)

    while len(records) < scenario.iterations:
        emit(state.matching)

    oracle = None
    if scenario.oracle:
        oracle = brute_force_optimum(state.market, cls)

    return RunResult(
        scenario=scenario,
        market=state.market,
        records=records,
        final_matching=state.matching,
        oracle=oracle,
        incremental_iterations=incremental_iters,
    )


@dataclass(frozen=True)
class SweepRow:
    size: int
    engine: str
    mean_satisfaction: float
    std_satisfaction: float
    replications: int


def sweep(
    template: Scenario, sizes: list[int], replications: int
) -> list[SweepRow]:
    """Class 2 vs Class 1 (fixed quota) on identical markets per (size, seed)."""
    if not sizes:
        raise ScenarioValidationError(["sweep sizes must be nonempty"])
    rows: list[SweepRow] = []
    for size in sizes:
        sats: dict[str, list[float]] = {"class2": [], "class1": []}
        for rep in range(replications):
            child = make_rng(template.seed, 10_000 + size * 1_000 + rep)
            rep_seed = int(child.integers(0, 2**63))
            gen = dict(template.generate or {})
            gen["sources"] = size
            scn = Scenario(
                name=f"{template.name}-n{size}-r{rep}",
                seed=rep_seed,
                area_m=template.area_m,
                link=template.link,
                matching_class=template.matching_class,
                generate=gen,
                explicit_drones=template.explicit_drones,
                quotas_cfg=template.quotas_cfg,
                resource_unit_bps=template.resource_unit_bps,
                dest_map=template.dest_map,
                perturbations=(),
                iterations=template.iterations,
                horizon_s=template.horizon_s,
                step_s=template.step_s,
                oracle=False,
                max_search_iterations=template.max_search_iterations,
            )
            market = realize_market(scn)
            sats["class2"].append(global_satisfaction(market, match_class2(market)))
            sats["class1"].append(global_satisfaction(market, match_class1(market)))
        for engine in ("class1", "class2"):
            vals = sats[engine]
            rows.append(
                SweepRow(
                    size=size,
                    engine=engine,
                    mean_satisfaction=statistics.fmean(vals),
                    std_satisfaction=statistics.pstdev(vals) if len(vals) > 1 else 0.0,
                    replications=replications,
                )
            )
    rows.sort(key=lambda r: (r.size, r.engine))
    return rows
