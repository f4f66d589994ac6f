"""Shared builders for matching-market tests.

The default regime puts sources, relays, and the destination in three bands
along the x axis at low SNR, so relaying genuinely beats the direct link for
most pairs and preference lists are non-trivial.
"""

import numpy as np
import pytest

from relaymatch.model import Drone, LinkModel, Role
from relaymatch.preferences import build_market

DEST_ID = 900


@pytest.fixture
def link():
    return LinkModel(
        carrier_freq_hz=2.4e9,
        bandwidth_hz=1e6,
        noise_power_w=1e-10,
        path_loss_exponent=2.0,
        half_duplex_factor=0.5,
    )


def make_source(i, position, demand_bps, tx_power_w=0.1):
    return Drone(
        id=i, role=Role.SOURCE, position=position,
        tx_power_w=tx_power_w, demand_bps=demand_bps,
    )


def make_relay(i, position, radio_count=2, capacity=8.0, tx_power_w=0.1):
    return Drone(
        id=i, role=Role.RELAY, position=position, tx_power_w=tx_power_w,
        radio_count=radio_count, resource_capacity=capacity,
    )


def make_dest(position=(4000.0, 1000.0, 100.0), i=DEST_ID):
    return Drone(id=i, role=Role.DESTINATION, position=position, tx_power_w=0.1)


def random_market(
    seed,
    link,
    n_sources=None,
    n_relays=None,
    radio_count=2,
    quotas=None,
    capacity=8.0,
    demand_range=(3e4, 2e5),
):
    """Seeded random market in the relay-favoring band geometry."""
    rng = np.random.default_rng(seed)
    if n_sources is None:
        n_sources = int(rng.integers(3, 21))
    if n_relays is None:
        n_relays = int(rng.integers(2, 7))
    sources = [
        make_source(
            i,
            (float(rng.uniform(0, 500)), float(rng.uniform(0, 2000)), float(rng.uniform(50, 150))),
            float(rng.uniform(*demand_range)),
        )
        for i in range(n_sources)
    ]
    relays = [
        make_relay(
            100 + i,
            (float(rng.uniform(1500, 3000)), float(rng.uniform(0, 2000)), float(rng.uniform(50, 150))),
            radio_count=radio_count,
            capacity=capacity,
        )
        for i in range(n_relays)
    ]
    dest = make_dest()
    return build_market(
        sources=sources,
        relays=relays,
        destinations=[dest],
        dest_map={s.id: DEST_ID for s in sources},
        link=link,
        quotas=quotas,
        resource_unit_bps=2e4,
    )
