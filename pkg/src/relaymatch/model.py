"""Physical layer: drones, link budget, achievable rates, satisfaction metric.

All functions here are pure and deterministic; rates are in bits/s, distances
in meters, powers in watts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import DegenerateGeometryError, InvalidDemandError

# Free-space reference constant: 20*log10(4*pi/c) with c in m/s.
_FSPL_CONST_DB = 147.55

Vec3 = tuple[float, float, float]


class Role(enum.Enum):
    SOURCE = "source"
    RELAY = "relay"
    DESTINATION = "destination"


@dataclass(frozen=True)
class Drone:
    """A network node. Source drones carry a demand, relays carry radios."""

    id: int
    role: Role
    position: Vec3
    tx_power_w: float = 1.0
    radio_count: int = 1
    resource_capacity: float = 0.0  # abstract resource units (Class II relays)
    demand_bps: float = 0.0
    priority: int = 1

    def __post_init__(self):
        if len(self.position) != 3 or not all(math.isfinite(c) for c in self.position):
            raise ValueError(f"drone {self.id}: position must be a finite 3-vector")
        if self.position[2] < 0:
            raise ValueError(f"drone {self.id}: altitude must be >= 0")
        if self.tx_power_w <= 0:
            raise ValueError(f"drone {self.id}: tx_power_w must be > 0")
        if self.role is Role.RELAY and self.radio_count < 1:
            raise ValueError(f"drone {self.id}: relays need radio_count >= 1")
        if self.role is Role.SOURCE and self.demand_bps <= 0:
            raise InvalidDemandError(f"drone {self.id}: sources need demand_bps > 0")
        if self.resource_capacity < 0:
            raise ValueError(f"drone {self.id}: resource_capacity must be >= 0")
        if self.priority < 1:
            raise ValueError(f"drone {self.id}: priority must be a positive integer")


@dataclass(frozen=True)
class LinkModel:
    """Channel constants shared by every link in a scenario."""

    carrier_freq_hz: float
    bandwidth_hz: float
    noise_power_w: float
    path_loss_exponent: float = 2.0
    half_duplex_factor: float = 0.5

    def __post_init__(self):
        for name in ("carrier_freq_hz", "bandwidth_hz", "noise_power_w", "path_loss_exponent"):
            if getattr(self, name) <= 0:
                raise ValueError(f"LinkModel.{name} must be > 0")
        if not (0.0 < self.half_duplex_factor <= 1.0):
            raise ValueError("LinkModel.half_duplex_factor must be in (0, 1]")


def path_loss_db(distance_m: float, link: LinkModel) -> float:
    """Log-distance path loss in dB (free-space form at exponent 2)."""
    if distance_m <= 0:
        raise DegenerateGeometryError(f"distance must be > 0, got {distance_m}")
    return (
        10.0 * link.path_loss_exponent * math.log10(distance_m)
        + 20.0 * math.log10(link.carrier_freq_hz)
        - _FSPL_CONST_DB
    )


def link_rate_bps(tx: Drone, rx: Drone, link: LinkModel) -> float:
    """Shannon rate of the direct tx->rx link: B * log2(1 + SNR)."""
    distance = math.dist(tx.position, rx.position)
    if distance == 0.0:
        raise DegenerateGeometryError(f"drones {tx.id} and {rx.id} are coincident")
    pl_db = path_loss_db(distance, link)
    snr = tx.tx_power_w * 10.0 ** (-pl_db / 10.0) / link.noise_power_w
    return link.bandwidth_hz * math.log2(1.0 + snr)


def relay_rate_bps(
    src: Drone, relay: Drone, dst: Drone, link: LinkModel, sharers: int = 1
) -> float:
    """Two-hop rate through ``relay`` when ``sharers`` sources split its time equally."""
    if sharers < 1:
        raise ValueError(f"sharers must be >= 1, got {sharers}")
    bottleneck = min(link_rate_bps(src, relay, link), link_rate_bps(relay, dst, link))
    return link.half_duplex_factor * bottleneck / sharers


def satisfaction(achieved_bps: float, demanded_bps: float) -> float:
    """Capped rate ratio min(1, achieved/demanded)."""
    if demanded_bps <= 0:
        raise InvalidDemandError(f"demanded rate must be > 0, got {demanded_bps}")
    if achieved_bps < 0:
        raise ValueError(f"achieved rate must be >= 0, got {achieved_bps}")
    return min(1.0, achieved_bps / demanded_bps)
