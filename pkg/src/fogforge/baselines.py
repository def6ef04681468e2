"""Non-learned control strategies: random, all-in-cloud, and two greedies.

Each strategy maps an application plus a device pool to a total placement.
The greedy pair picks one device for every service by lexicographic
minimization, differing only in which objective leads: GreedyEdge ranks
devices by (latency, cost), GreedyCost by (cost, latency). Ties fall back to
the lowest device id, so both strategies are fully deterministic.
"""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from .model import Application, ConfigurationError, Device, Placement


class StrategyKind(enum.Enum):
    RANDOM_DEVICES = "random-devices"
    ALL_IN_CLOUD = "all-in-cloud"
    GREEDY_EDGE = "greedy-edge"
    GREEDY_COST = "greedy-cost"

    @classmethod
    def parse(cls, name: str) -> "StrategyKind":
        for kind in cls:
            if kind.value == name:
                return kind
        valid = ", ".join(k.value for k in cls)
        raise ConfigurationError(f"unknown strategy {name!r}; expected one of: {valid}")


def greedy_edge_device(devices: Sequence[Device]) -> Device:
    """Device minimizing (latency, cost, id)."""
    if not devices:
        raise ConfigurationError("device set is empty")
    return min(devices, key=lambda d: (d.latency, d.cost, d.id))


def greedy_cost_device(devices: Sequence[Device]) -> Device:
    """Device minimizing (cost, latency, id)."""
    if not devices:
        raise ConfigurationError("device set is empty")
    return min(devices, key=lambda d: (d.cost, d.latency, d.id))


def cloud_device(devices: Sequence[Device]) -> Device:
    clouds = [d for d in devices if d.is_cloud]
    if len(clouds) != 1:
        raise ConfigurationError(f"expected exactly one cloud device, found {len(clouds)}")
    return clouds[0]


def run_baseline(
    kind: StrategyKind,
    app: Application,
    devices: Sequence[Device],
    seed: int | None = None,
) -> Placement:
    """Total placement of ``app`` onto ``devices`` per the chosen strategy.

    ``seed`` only matters for RANDOM_DEVICES, which draws one uniformly random
    device per service; the other strategies ignore it.
    """
    if kind is StrategyKind.ALL_IN_CLOUD:
        return Placement.uniform(app, cloud_device(devices).id)
    if kind is StrategyKind.GREEDY_EDGE:
        return Placement.uniform(app, greedy_edge_device(devices).id)
    if kind is StrategyKind.GREEDY_COST:
        return Placement.uniform(app, greedy_cost_device(devices).id)
    if kind is StrategyKind.RANDOM_DEVICES:
        rng = np.random.default_rng(seed)
        ids = np.array(sorted(d.id for d in devices), dtype=np.int64)
        picks = rng.integers(0, len(ids), size=app.service_count)
        return Placement.from_vector(app, ids[picks])
    raise ConfigurationError(f"unknown strategy kind {kind!r}")
