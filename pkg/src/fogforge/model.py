"""Domain model: devices, applications, placements, and the two objectives.

Applications follow the job-shop layout: an n x n grid of services where each
row is an ordered chain, plus optional extra dependency edges forming a DAG.
Response time is the sum of execution times, the access latency of every
row-head service, and the latency of the target device for every dependency
edge whose endpoints sit on different devices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np


class InvalidPlacementError(ValueError):
    """Placement is not total or references an unknown device."""


class ConfigurationError(ValueError):
    """Bad configuration value (weights, normalization bounds, ...)."""


class InstanceTooLargeError(ValueError):
    """Exhaustive enumeration would exceed the configured cap."""


Service = tuple[int, int]
Edge = tuple[Service, Service]


@dataclass(frozen=True)
class Device:
    id: int
    speed: float
    latency: float
    cost: float
    is_cloud: bool = False

    def __post_init__(self) -> None:
        if self.speed <= 0:
            raise ConfigurationError(f"device {self.id}: speed must be > 0")
        if self.latency < 0 or self.cost < 0:
            raise ConfigurationError(f"device {self.id}: latency/cost must be >= 0")


@dataclass(frozen=True)
class Application:
    """Service grid (rows x cols, square by default) with a dependency DAG.

    ``ops[i][j]`` is the operation count of service (i, j). ``edges`` always
    contains the row chains (i, j) -> (i, j+1); extra edges may link any
    earlier service to a later one as long as the graph stays acyclic.
    """

    rows: int
    ops: tuple[tuple[float, ...], ...]
    edges: tuple[Edge, ...]
    cols: int | None = None

    def __post_init__(self) -> None:
        if self.cols is None:
            object.__setattr__(self, "cols", self.rows)
        n, m = self.rows, self.cols
        if n < 1 or m < 1:
            raise ConfigurationError("grid must have at least one row and column")
        if len(self.ops) != n or any(len(row) != m for row in self.ops):
            raise ConfigurationError(f"ops grid must be {n}x{m}")
        valid = set(self.services())
        for src, dst in self.edges:
            if src not in valid or dst not in valid:
                raise ConfigurationError(f"edge {src}->{dst} references unknown service")
            if src == dst:
                raise ConfigurationError(f"self edge on {src}")
        for i in range(n):
            for j in range(m - 1):
                if ((i, j), (i, j + 1)) not in self.edges:
                    raise ConfigurationError(f"missing row-chain edge ({i},{j})->({i},{j + 1})")
        if not self._is_acyclic():
            raise ConfigurationError("dependency graph has a cycle")

    def services(self) -> Iterator[Service]:
        for i in range(self.rows):
            for j in range(self.cols):
                yield (i, j)

    @property
    def service_count(self) -> int:
        return self.rows * self.cols

    def service_index(self, service: Service) -> int:
        return service[0] * self.cols + service[1]

    def predecessors(self, service: Service) -> list[Service]:
        return [src for src, dst in self.edges if dst == service]

    def _is_acyclic(self) -> bool:
        indeg = {s: 0 for s in self.services()}
        for _, dst in self.edges:
            indeg[dst] += 1
        ready = [s for s, d in indeg.items() if d == 0]
        seen = 0
        while ready:
            node = ready.pop()
            seen += 1
            for src, dst in self.edges:
                if src == node:
                    indeg[dst] -= 1
                    if indeg[dst] == 0:
                        ready.append(dst)
        return seen == len(indeg)

    @staticmethod
    def chain_edges(rows: int, cols: int | None = None) -> tuple[Edge, ...]:
        cols = rows if cols is None else cols
        return tuple(((i, j), (i, j + 1)) for i in range(rows) for j in range(cols - 1))


@dataclass(frozen=True)
class Placement:
    """Total assignment of services to device ids."""

    assignment: dict[Service, int]

    def device_of(self, service: Service) -> int:
        return self.assignment[service]

    @classmethod
    def uniform(cls, app: Application, device_id: int) -> "Placement":
        return cls({s: device_id for s in app.services()})

    @classmethod
    def from_vector(cls, app: Application, vector: Sequence[int]) -> "Placement":
        services = list(app.services())
        if len(vector) != len(services):
            raise InvalidPlacementError(
                f"vector length {len(vector)} != service count {len(services)}"
            )
        return cls({s: int(d) for s, d in zip(services, vector)})

    def to_vector(self, app: Application) -> np.ndarray:
        try:
            return np.array([self.assignment[s] for s in app.services()], dtype=np.int64)
        except KeyError as missing:
            raise InvalidPlacementError(f"placement missing service {missing}") from None


class ObjectivePoint(NamedTuple):
    time: float
    cost: float


class WeightVector(NamedTuple):
    w_time: float
    w_cost: float

    def check(self) -> "WeightVector":
        if not (0.0 <= self.w_time <= 1.0 and 0.0 <= self.w_cost <= 1.0):
            raise ConfigurationError(f"weights must lie in [0, 1]: {self}")
        if abs(self.w_time + self.w_cost - 1.0) > 1e-9:
            raise ConfigurationError(f"weights must sum to 1: {self}")
        return self


@dataclass(frozen=True)
class NormBounds:
    """Range-normalization bounds for the two objectives (upper bounds)."""

    max_time: float
    max_cost: float


def _device_map(devices: Sequence[Device]) -> dict[int, Device]:
    return {d.id: d for d in devices}


def _resolve(app: Application, placement: Placement, by_id: dict[int, Device]) -> dict[Service, Device]:
    resolved = {}
    for s in app.services():
        dev_id = placement.assignment.get(s)
        if dev_id is None:
            raise InvalidPlacementError(f"placement missing service {s}")
        dev = by_id.get(dev_id)
        if dev is None:
            raise InvalidPlacementError(f"unknown device id {dev_id} for service {s}")
        resolved[s] = dev
    return resolved

def response_time(app: Application, placement: Placement, devices: Sequence[Device]) -> float:
    """Application response time under a placement.

    Sums (a) per-service execution time ops/speed, (b) the access latency of
    the device hosting each row-head service, and (c) for every dependency
    edge crossing devices, the latency of the target service's device.
    """
    hosted = _resolve(app, placement, _device_map(devices))
    total = 0.0
    for i in range(app.rows):
        for j in range(app.cols):
            total += app.ops[i][j] / hosted[(i, j)].speed
    for i in range(app.rows):
        total += hosted[(i, 0)].latency
    for src, dst in app.edges:
        if hosted[src].id != hosted[dst].id:
            total += hosted[dst].latency
    return total


def latency_contribution_matrix(
    app: Application, placement: Placement, devices: Sequence[Device]
) -> np.ndarray:
    """Per-service matrix of dependency-edge latency charges.

    Entry (i, j) sums the target-device latency over every cross-device edge
    pointing into service (i, j). Row-head access latencies are not included.
    """
    hosted = _resolve(app, placement, _device_map(devices))
    matrix = np.zeros((app.rows, app.cols))
    for src, dst in app.edges:
        if hosted[src].id != hosted[dst].id:
            matrix[dst] += hosted[dst].latency
    return matrix


def placement_cost(app: Application, placement: Placement, devices: Sequence[Device]) -> float:
    """Sum of the hosting device's cost over all services."""
    hosted = _resolve(app, placement, _device_map(devices))
    return float(sum(dev.cost for dev in hosted.values()))


def evaluate(app: Application, placement: Placement, devices: Sequence[Device]) -> ObjectivePoint:
    return ObjectivePoint(
        response_time(app, placement, devices), placement_cost(app, placement, devices)
    )


def weighted_objective(point: ObjectivePoint, weights: WeightVector, norms: NormBounds) -> float:
    """Scalarized objective w_time * time/max_time + w_cost * cost/max_cost; lower is better."""
    weights.check()
    if norms.max_time <= 0 or norms.max_cost <= 0:
        raise ConfigurationError(f"normalization bounds must be positive: {norms}")
    return weights.w_time * (point.time / norms.max_time) + weights.w_cost * (
        point.cost / norms.max_cost
    )


def analytic_bounds(app: Application, devices: Sequence[Device]) -> NormBounds:
    """Deterministic upper bounds on both objectives for an (app, devices) pair.

    max_time assumes the slowest device everywhere plus the worst latency for
    every row head and every edge; max_cost assumes the priciest device.
    """
    if not devices:
        raise ConfigurationError("device set is empty")
    min_speed = min(d.speed for d in devices)
    max_lat = max(d.latency for d in devices)
    max_cost = max(d.cost for d in devices)
    total_ops = sum(sum(row) for row in app.ops)
    max_time = total_ops / min_speed + (app.rows + len(app.edges)) * max_lat
    return NormBounds(max_time=max_time, max_cost=app.service_count * max_cost)


def dominates(p: ObjectivePoint, q: ObjectivePoint) -> bool:
    """True if p is at least as good in both objectives and better in one."""
    return p.time <= q.time and p.cost <= q.cost and (p.time < q.time or p.cost < q.cost)


def pareto_front(points: Sequence[ObjectivePoint]) -> list[ObjectivePoint]:
    """Non-dominated subset, deduplicated, sorted by (time, cost) ascending."""
    unique = sorted(set(ObjectivePoint(float(p[0]), float(p[1])) for p in points))
    front: list[ObjectivePoint] = []
    best_cost = np.inf
    for p in unique:
        if p.cost < best_cost:
            front.append(p)
            best_cost = p.cost
    return front


def hypervolume_2d(points: Sequence[ObjectivePoint], ref: ObjectivePoint) -> float:
    """Area dominated by the front of `points` relative to reference point `ref`."""
    front = [p for p in pareto_front(points) if p.time < ref.time and p.cost < ref.cost]
    hv = 0.0
    prev_cost = ref.cost
    for p in front:
        hv += (ref.time - p.time) * (prev_cost - p.cost)
        prev_cost = p.cost
    return hv


def batch_objectives(
    app: Application, devices: Sequence[Device], assignments: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (time, cost) for a matrix of assignment vectors.

    ``assignments`` has shape (N, service_count) and holds device ids in
    row-major service order. Independent of :func:`response_time`'s walk; the
    two are cross-checked in tests.
    """
    assignments = np.asarray(assignments, dtype=np.int64)
    if assignments.ndim != 2 or assignments.shape[1] != app.service_count:
        raise InvalidPlacementError(
            f"assignment matrix must be (N, {app.service_count}), got {assignments.shape}"
        )
    max_id = max((d.id for d in devices), default=-1)
    lat = np.full(max_id + 1, np.nan)
    speed = np.full(max_id + 1, np.nan)
    cost = np.full(max_id + 1, np.nan)
    for d in devices:
        lat[d.id], speed[d.id], cost[d.id] = d.latency, d.speed, d.cost
    if assignments.size:
        if assignments.min() < 0 or assignments.max() > max_id or np.isnan(
            speed[assignments]
        ).any():
            raise InvalidPlacementError("assignment matrix references unknown device ids")

    ops_flat = np.array([app.ops[i][j] for i in range(app.rows) for j in range(app.cols)])
    times = (ops_flat / speed[assignments]).sum(axis=1)
    heads = np.arange(app.rows) * app.cols
    times = times + lat[assignments[:, heads]].sum(axis=1)
    if app.edges:
        src = np.array([app.service_index(e[0]) for e in app.edges])
        dst = np.array([app.service_index(e[1]) for e in app.edges])
        cross = assignments[:, src] != assignments[:, dst]
        times = times + (lat[assignments[:, dst]] * cross).sum(axis=1)
    costs = cost[assignments].sum(axis=1)
    return times, costs


@dataclass
class WeightedOptimum:
    weights: WeightVector
    placement: Placement
    point: ObjectivePoint
    objective: float


@dataclass
class OracleResult:
    front: list[ObjectivePoint]
    front_placements: list[Placement]
    weighted: list[WeightedOptimum] = field(default_factory=list)
    enumerated: int = 0


def brute_force_oracle(
    app: Application,
    devices: Sequence[Device],
    weights: Sequence[WeightVector] = (),
    norms: NormBounds | None = None,
    cap: int = 10_000_000,
    chunk: int = 65_536,
) -> OracleResult:
    """Exact Pareto front (and optional weighted argmins) by full enumeration.

    Every total placement is generated in lexicographic order over device
    positions and evaluated in vectorized chunks.
    """
    n_svc = app.service_count
    n_dev = len(devices)
    if n_dev == 0:
        raise ConfigurationError("device set is empty")
    total = n_dev**n_svc
    if total > cap:
        raise InstanceTooLargeError(
            f"{n_dev}^{n_svc} = {total} placements exceeds enumeration cap {cap}"
        )
    if weights and norms is None:
        norms = analytic_bounds(app, devices)
    for w in weights:
        w.check()

    ids = np.array([d.id for d in devices], dtype=np.int64)
    powers = n_dev ** np.arange(n_svc - 1, -1, -1, dtype=np.int64) if n_svc else np.array([], dtype=np.int64)

    # point -> first assignment vector reaching it; pruned to the running front
    front_reps: dict[ObjectivePoint, np.ndarray] = {}
    best: list[tuple[float, np.ndarray, ObjectivePoint] | None] = [None] * len(weights)

    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % n_dev if n_svc else np.zeros((len(idx), 0), dtype=np.int64)
        assign = ids[digits]
        times, costs = batch_objectives(app, devices, assign)

        chunk_points = [ObjectivePoint(float(t), float(c)) for t, c in zip(times, costs)]
        for local in pareto_front(chunk_points):
            if local not in front_reps:
                first = chunk_points.index(local)
                front_reps[local] = assign[first].copy()
        kept = pareto_front(list(front_reps))
        front_reps = {p: front_reps[p] for p in kept}

        for wi, w in enumerate(weights):
            objs = w.w_time * (times / norms.max_time) + w.w_cost * (costs / norms.max_cost)
            am = int(np.argmin(objs))
            if best[wi] is None or objs[am] < best[wi][0]:
                best[wi] = (
                    float(objs[am]),
                    assign[am].copy(),
                    ObjectivePoint(float(times[am]), float(costs[am])),
                )

    front = pareto_front(list(front_reps))
    result = OracleResult(
        front=front,
        front_placements=[Placement.from_vector(app, front_reps[p]) for p in front],
        enumerated=total,
    )
    for w, entry in zip(weights, best):
        assert entry is not None
        obj, vec, point = entry
        result.weighted.append(
            WeightedOptimum(w, Placement.from_vector(app, vec), point, obj)
        )
    return result
