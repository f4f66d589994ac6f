"""Scenario files: strict-schema YAML loading, validation, and realization
into a concrete Market plus perturbation schedule.

All randomness flows from the scenario seed through named SeedSequence
streams (see STREAM_*), so a run is fully determined by (file, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .errors import ScenarioParseError, ScenarioValidationError
from .matching import MatchingClass
from .model import Drone, LinkModel, Role
from .preferences import Market, build_market

# SeedSequence spawn keys, one stream per randomness consumer.
STREAM_GENERATE = 0
STREAM_ARRIVALS = 1
STREAM_DEPARTURES = 2

_TOP_KEYS = {
    "name", "seed", "area_m", "link", "matching_class", "generate", "drones",
    "quotas", "resource_unit_bps", "dest_map", "perturbations", "iterations",
    "horizon_s", "step_s", "oracle", "max_search_iterations",
}
_LINK_KEYS = {
    "carrier_freq_hz", "bandwidth_hz", "noise_power_w",
    "path_loss_exponent", "half_duplex_factor",
}
_GENERATE_KEYS = {
    "sources", "relays", "destinations", "radio_count", "source_tx_power_w",
    "relay_tx_power_w", "dest_tx_power_w", "demand_bps",
    "resource_capacity_units", "min_altitude_m",
}
_DRONE_KEYS = {
    "id", "role", "position_m", "tx_power_w", "radio_count",
    "resource_capacity_units", "demand_bps", "priority",
}
_EVENT_KEYS = {"at_iteration", "departures", "depart_count", "arrivals", "arrive_count"}


@dataclass(frozen=True)
class Scenario:
    """A validated experiment description."""

    name: str
    seed: int
    area_m: tuple[float, float, float]
    link: LinkModel
    matching_class: MatchingClass
    generate: dict | None
    explicit_drones: tuple[Drone, ...]
    quotas_cfg: dict
    resource_unit_bps: float
    dest_map: dict[int, int] | None
    perturbations: tuple[dict, ...]
    iterations: int
    horizon_s: float
    step_s: float
    oracle: bool
    max_search_iterations: int

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def with_class(self, cls: MatchingClass) -> "Scenario":
        return replace(self, matching_class=cls)


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """Named child stream of the scenario seed (portable PCG64)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _unknown_keys(d: dict, allowed: set, where: str, violations: list[str]) -> None:
    for k in d:
        if k not in allowed:
            violations.append(f"{where}: unknown key '{k}'")


def _parse_drone(spec: dict, where: str, violations: list[str]) -> Drone | None:
    _unknown_keys(spec, _DRONE_KEYS, where, violations)
    try:
        role = Role(spec["role"])
        pos = spec["position_m"]
        if len(pos) != 3:
            raise ValueError("position_m must have 3 components")
        return Drone(
            id=int(spec["id"]),
            role=role,
            position=tuple(float(c) for c in pos),
            tx_power_w=float(spec.get("tx_power_w", 1.0)),
            radio_count=int(spec.get("radio_count", 1)),
            resource_capacity=float(spec.get("resource_capacity_units", 0.0)),
            demand_bps=float(spec.get("demand_bps", 0.0)),
            priority=int(spec.get("priority", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        violations.append(f"{where}: {exc}")
        return None


def scenario_from_dict(raw: dict) -> Scenario:
    """Validate a parsed scenario document; raises with every violation listed."""
    violations: list[str] = []
    if not isinstance(raw, dict):
        raise ScenarioValidationError(["scenario document must be a mapping"])
    _unknown_keys(raw, _TOP_KEYS, "scenario", violations)

    name = raw.get("name")
    if not isinstance(name, str) or not name:
        violations.append("'name' is required and must be a non-empty string")
        name = "?"
    seed = raw.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or not (0 <= seed < 2**64):
        violations.append("'seed' is required and must be an unsigned 64-bit integer")
        seed = 0

    area = raw.get("area_m")
    if not (isinstance(area, (list, tuple)) and len(area) == 3):
        violations.append("'area_m' must be a 3-vector of extents in meters")
        area = (1.0, 1.0, 1.0)
    else:
        area = tuple(float(c) for c in area)
        if any(c <= 0 for c in area):
            violations.append("'area_m' extents must be > 0")

    link = None
    link_raw = raw.get("link")
    if not isinstance(link_raw, dict):
        violations.append("'link' section is required")
    else:
        _unknown_keys(link_raw, _LINK_KEYS, "link", violations)
        try:
            link = LinkModel(
                carrier_freq_hz=float(link_raw["carrier_freq_hz"]),
                bandwidth_hz=float(link_raw["bandwidth_hz"]),
                noise_power_w=float(link_raw["noise_power_w"]),
                path_loss_exponent=float(link_raw.get("path_loss_exponent", 2.0)),
                half_duplex_factor=float(link_raw.get("half_duplex_factor", 0.5)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            violations.append(f"link: {exc}")
    if link is None:
        link = LinkModel(1e9, 1e6, 1e-12)

    cls_raw = raw.get("matching_class")
    if cls_raw not in (1, 2, 3):
        violations.append("'matching_class' must be 1, 2 or 3")
        cls_raw = 1
    cls = MatchingClass(cls_raw)

    generate = raw.get("generate")
    if generate is not None:
        if not isinstance(generate, dict):
            violations.append("'generate' must be a mapping")
            generate = None
        else:
            _unknown_keys(generate, _GENERATE_KEYS, "generate", violations)
            for key in ("sources", "relays"):
                if not isinstance(generate.get(key), int) or generate.get(key, 0) < 0:
                    violations.append(f"generate.{key} must be a nonnegative integer")

    explicit: list[Drone] = []
    for i, spec in enumerate(raw.get("drones") or []):
        d = _parse_drone(spec, f"drones[{i}]", violations)
        if d is not None:
            explicit.append(d)
    seen_ids: set[int] = set()
    for d in explicit:
        if d.id in seen_ids:
            violations.append(f"duplicate drone id {d.id}")
        seen_ids.add(d.id)

    quotas_cfg = raw.get("quotas") or {}
    if not isinstance(quotas_cfg, dict):
        violations.append("'quotas' must be a mapping")
        quotas_cfg = {}
    for k, v in quotas_cfg.items():
        if not isinstance(v, int) or v < 1:
            violations.append(f"quotas[{k}] must be an integer >= 1, got {v!r}")

    try:
        # YAML 1.1 reads exponents without a sign ("2.0e4") as strings
        resource_unit = float(raw.get("resource_unit_bps", 1e5))
        if resource_unit <= 0:
            raise ValueError
    except (TypeError, ValueError):
        violations.append("'resource_unit_bps' must be > 0")
        resource_unit = 1e5

    dest_map = raw.get("dest_map")
    if dest_map is not None:
        if not isinstance(dest_map, dict):
            violations.append("'dest_map' must map source ids to destination ids")
            dest_map = None
        else:
            dest_map = {int(k): int(v) for k, v in dest_map.items()}

    events = []
    for i, ev in enumerate(raw.get("perturbations") or []):
        where = f"perturbations[{i}]"
        if not isinstance(ev, dict):
            violations.append(f"{where}: must be a mapping")
            continue
        _unknown_keys(ev, _EVENT_KEYS, where, violations)
        if not isinstance(ev.get("at_iteration"), int) or ev["at_iteration"] < 0:
            violations.append(f"{where}: 'at_iteration' must be a nonnegative integer")
            continue
        events.append(dict(ev))
    events.sort(key=lambda e: e["at_iteration"])

    iterations = raw.get("iterations", 45)
    if not isinstance(iterations, int) or iterations < 1:
        violations.append("'iterations' must be a positive integer")
        iterations = 45
    try:
        horizon = float(raw.get("horizon_s", 30.0))
        step = float(raw.get("step_s", 1.0))
        if horizon <= 0 or step <= 0:
            raise ValueError
    except (TypeError, ValueError):
        violations.append("'horizon_s' and 'step_s' must be > 0")
        horizon, step = 30.0, 1.0
    oracle = raw.get("oracle", False)
    if not isinstance(oracle, bool):
        violations.append("'oracle' must be a boolean")
        oracle = False
    max_iters = raw.get("max_search_iterations", 1000)
    if not isinstance(max_iters, int) or max_iters < 1:
        violations.append("'max_search_iterations' must be a positive integer")
        max_iters = 1000

    if generate is None and not explicit:
        violations.append("scenario defines no drones (need 'generate' and/or 'drones')")

    if violations:
        raise ScenarioValidationError(violations)
    return Scenario(
        name=name,
        seed=seed,
        area_m=area,
        link=link,
        matching_class=cls,
        generate=dict(generate) if generate else None,
        explicit_drones=tuple(explicit),
        quotas_cfg=dict(quotas_cfg),
        resource_unit_bps=float(resource_unit),
        dest_map=dest_map,
        perturbations=tuple(events),
        iterations=iterations,
        horizon_s=horizon,
        step_s=step,
        oracle=oracle,
        max_search_iterations=max_iters,
    )


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc
    return scenario_from_dict(raw)


def _uniform_position(rng: np.random.Generator, area: tuple[float, float, float]) -> tuple:
    return tuple(float(rng.uniform(0.0, extent)) for extent in area)


def _draw_demand(rng: np.random.Generator, spec) -> float:
    if isinstance(spec, (list, tuple)):
        lo, hi = float(spec[0]), float(spec[1])
        return float(rng.uniform(lo, hi))
    return float(spec)


def generate_source(
    scenario: Scenario, drone_id: int, rng: np.random.Generator
) -> Drone:
    gen = scenario.generate or {}
    return Drone(
        id=drone_id,
        role=Role.SOURCE,
        position=_uniform_position(rng, scenario.area_m),
        tx_power_w=float(gen.get("source_tx_power_w", 1.0)),
        demand_bps=_draw_demand(rng, gen.get("demand_bps", 1e6)),
    )


def realize_market(scenario: Scenario) -> Market:
    """Build the initial Market: explicit drones plus seeded generation."""
    rng = make_rng(scenario.seed, STREAM_GENERATE)
    drones = list(scenario.explicit_drones)
    next_id = max((d.id for d in drones), default=0) + 1
    gen = scenario.generate or {}
    for _ in range(gen.get("sources", 0)):
        drones.append(generate_source(scenario, next_id, rng))
        next_id += 1
    for _ in range(gen.get("relays", 0)):
        drones.append(
            Drone(
                id=next_id,
                role=Role.RELAY,
                position=_uniform_position(rng, scenario.area_m),
                tx_power_w=float(gen.get("relay_tx_power_w", 1.0)),
                radio_count=int(gen.get("radio_count", 1)),
                resource_capacity=float(gen.get("resource_capacity_units", 0.0)),
            )
        )
        next_id += 1
    for _ in range(gen.get("destinations", 1) if gen else 0):
        drones.append(
            Drone(
                id=next_id,
                role=Role.DESTINATION,
                position=_uniform_position(rng, scenario.area_m),
                tx_power_w=float(gen.get("dest_tx_power_w", 1.0)),
            )
        )
        next_id += 1
    sources = [d for d in drones if d.role is Role.SOURCE]
    relays = [d for d in drones if d.role is Role.RELAY]
    destinations = [d for d in drones if d.role is Role.DESTINATION]
    quotas = None
    if scenario.quotas_cfg:
        default = scenario.quotas_cfg.get("default")
        quotas = {}
        for r in relays:
            q = scenario.quotas_cfg.get(r.id, default)
            quotas[r.id] = int(q) if q is not None else r.radio_count
    return build_market(
        sources=sources,
        relays=relays,
        destinations=destinations,
        dest_map=scenario.dest_map,
        link=scenario.link,
        quotas=quotas,
        resource_unit_bps=scenario.resource_unit_bps,
    )
