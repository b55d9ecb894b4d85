"""Profile data model and the analytic cost functions.

Every planner and the simulator go through :func:`t_comp`, :func:`t_comm` and
:func:`t_period` (or tables built with the exact same floating-point folds), so
periods computed along different code paths compare equal bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

LayerRange = tuple[int, int]


class PipeplanError(Exception):
    """Base class for all errors raised by this package."""


class InvalidRangeError(PipeplanError, ValueError):
    pass


class InvalidPoolError(PipeplanError, ValueError):
    pass


class InvalidProfileError(PipeplanError, ValueError):
    pass


class InfeasiblePlanError(PipeplanError):
    """A concrete plan violates coverage, device-reuse or memory invariants."""

    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        summary = "; ".join(str(v) for v in self.violations)
        super().__init__(f"infeasible plan: {summary}")


@dataclass(frozen=True)
class LayerSpec:
    index: int
    base_time_per_sample: float
    fixed_overhead: float
    output_bytes_per_sample: int
    memory_bytes: int

    def __post_init__(self):
        if self.base_time_per_sample < 0 or self.fixed_overhead < 0:
            raise InvalidProfileError(f"layer {self.index}: negative compute time")
        if self.output_bytes_per_sample < 0:
            raise InvalidProfileError(f"layer {self.index}: negative output bytes")
        if self.memory_bytes <= 0:
            raise InvalidProfileError(f"layer {self.index}: memory_bytes must be > 0")

    def work(self, microbatch_size: int) -> float:
        """Reference-speed seconds to run one microbatch through this layer."""
        return self.fixed_overhead + self.base_time_per_sample * microbatch_size


@dataclass(frozen=True)
class ModelProfile:
    layers: tuple[LayerSpec, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise InvalidProfileError("model must have at least one layer")
        for expected, layer in enumerate(self.layers, start=1):
            if layer.index != expected:
                raise InvalidProfileError(
                    f"layer indices must be 1..L without gaps; found {layer.index} at position {expected}"
                )

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def layer(self, index: int) -> LayerSpec:
        return self.layers[index - 1]

    def memory(self, rng: LayerRange) -> int:
        first, last = rng
        return sum(layer.memory_bytes for layer in self.layers[first - 1:last])

    @classmethod
    def uniform(
        cls,
        num_layers: int,
        base_time_per_sample: float,
        output_bytes_per_sample: int,
        memory_bytes: int,
        fixed_overhead: float = 0.0,
        name: str = "",
    ) -> "ModelProfile":
        layers = [
            LayerSpec(i, base_time_per_sample, fixed_overhead, output_bytes_per_sample, memory_bytes)
            for i in range(1, num_layers + 1)
        ]
        return cls(tuple(layers), name)


@dataclass(frozen=True)
class Device:
    id: str
    category: str
    speed: float
    memory_bytes: int

    def __post_init__(self):
        if not self.speed > 0:
            raise InvalidPoolError(f"device {self.id}: speed must be > 0")
        if self.memory_bytes <= 0:
            raise InvalidPoolError(f"device {self.id}: memory_bytes must be > 0")


def _freeze_matrix(matrix) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(x) for x in row) for row in matrix)


@dataclass(frozen=True)
class DevicePool:
    """Devices plus pairwise link bandwidth (bits/s) and one-way latency (s).

    Matrix rows and columns follow the order of ``devices``. Diagonal entries
    are never read.
    """

    devices: tuple[Device, ...]
    bandwidth_bps: tuple[tuple[float, ...], ...]
    latency_s: Optional[tuple[tuple[float, ...], ...]] = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        devices = tuple(self.devices)
        n = len(devices)
        object.__setattr__(self, "devices", devices)
        object.__setattr__(self, "bandwidth_bps", _freeze_matrix(self.bandwidth_bps))
        latency = self.latency_s if self.latency_s is not None else [[0.0] * n for _ in range(n)]
        object.__setattr__(self, "latency_s", _freeze_matrix(latency))

        if n == 0:
            raise InvalidPoolError("pool must contain at least one device")
        index = {}
        for pos, dev in enumerate(devices):
            if dev.id in index:
                raise InvalidPoolError(f"duplicate device id {dev.id!r}")
            index[dev.id] = pos
        object.__setattr__(self, "_index", index)

        for name, mat in (("bandwidth_bps", self.bandwidth_bps), ("latency_s", self.latency_s)):
            if len(mat) != n or any(len(row) != n for row in mat):
                raise InvalidPoolError(f"{name} must be {n}x{n}")
        for u in range(n):
            for v in range(n):
                if u == v:
                    continue
                if not self.bandwidth_bps[u][v] > 0:
                    raise InvalidPoolError(
                        f"bandwidth {devices[u].id}->{devices[v].id} must be > 0"
                    )
                if self.latency_s[u][v] < 0:
                    raise InvalidPoolError(
                        f"latency {devices[u].id}->{devices[v].id} must be >= 0"
                    )
        self._check_categories()

    def _check_categories(self):
        groups: dict[str, list[int]] = {}
        for pos, dev in enumerate(self.devices):
            groups.setdefault(dev.category, []).append(pos)
        n = len(self.devices)
        for cat, members in groups.items():
            a = members[0]
            for b in members[1:]:
                da, db = self.devices[a], self.devices[b]
                if da.speed != db.speed or da.memory_bytes != db.memory_bytes:
                    raise InvalidPoolError(
                        f"category {cat!r}: devices {da.id} and {db.id} differ in speed or memory"
                    )
                for mat in (self.bandwidth_bps, self.latency_s):
                    if mat[a][b] != mat[b][a]:
                        raise InvalidPoolError(
                            f"category {cat!r}: asymmetric link between {da.id} and {db.id}"
                        )
                    for w in range(n):
                        if w in (a, b):
                            continue
                        if mat[a][w] != mat[b][w] or mat[w][a] != mat[w][b]:
                            raise InvalidPoolError(
                                f"category {cat!r}: devices {da.id} and {db.id} have different links"
                            )

    @property
    def size(self) -> int:
        return len(self.devices)

    def index(self, device_id: str) -> int:
        try:
            return self._index[device_id]
        except KeyError:
            raise InvalidPoolError(f"unknown device {device_id!r}") from None

    def device(self, device_id: str) -> Device:
        return self.devices[self.index(device_id)]

    def categories(self) -> dict[str, list[Device]]:
        """Category label -> member devices, both in pool order."""
        groups: dict[str, list[Device]] = {}
        for dev in self.devices:
            groups.setdefault(dev.category, []).append(dev)
        return groups

    @classmethod
    def uniform_links(
        cls, devices: Sequence[Device], bandwidth_bps: float, latency_s: float = 0.0
    ) -> "DevicePool":
        n = len(devices)
        bw = [[bandwidth_bps] * n for _ in range(n)]
        lat = [[latency_s] * n for _ in range(n)]
        return cls(tuple(devices), bw, lat)


@dataclass(frozen=True)
class Stage:
    device_id: str
    first_layer: int
    last_layer: int

    @property
    def layers(self) -> LayerRange:
        return (self.first_layer, self.last_layer)

    @property
    def num_layers(self) -> int:
        return self.last_layer - self.first_layer + 1


@dataclass(frozen=True)
class Plan:
    stages: tuple[Stage, ...]
    microbatch_size: int
    predicted_period_s: float

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if self.microbatch_size < 1:
            raise ValueError("microbatch_size must be >= 1")

    @property
    def predicted_throughput(self) -> float:
        return self.microbatch_size / self.predicted_period_s

    @property
    def device_ids(self) -> list[str]:
        return [s.device_id for s in self.stages]


@dataclass(frozen=True)
class Violation:
    kind: str  # coverage | contiguity | range | device-reuse | unknown-device | memory
    stage_index: Optional[int]
    detail: str

    def __str__(self):
        where = f" (stage {self.stage_index})" if self.stage_index is not None else ""
        return f"{self.kind}{where}: {self.detail}"


def _check_range(model: ModelProfile, rng: LayerRange):
    first, last = rng
    if not (1 <= first <= last <= model.num_layers):
        raise InvalidRangeError(f"layer range {first}..{last} outside 1..{model.num_layers}")


def t_comp(model: ModelProfile, layers: LayerRange, device: Device, microbatch_size: int) -> float:
    """Seconds for ``device`` to run one microbatch through the inclusive layer range."""
    _check_range(model, layers)
    if microbatch_size < 1:
        raise ValueError("microbatch_size must be >= 1")
    first, last = layers
    total = 0.0
    for layer in model.layers[first - 1:last]:
        total += layer.work(microbatch_size)
    return total / device.speed


def t_comm(pool: DevicePool, u: str, v: Optional[str], nbytes: int) -> float:
    """Transfer time from ``u`` to ``v``; zero when ``v`` is None (last stage)."""
    iu = pool.index(u)
    if v is None:
        return 0.0
    iv = pool.index(v)
    bw = pool.bandwidth_bps[iu][iv]
    if not bw > 0:
        raise InvalidPoolError(f"bandwidth {u}->{v} must be > 0")
    return (nbytes * 8) / bw + pool.latency_s[iu][iv]


def boundary_bytes(model: ModelProfile, last_layer: int, microbatch_size: int) -> int:
    return model.layer(last_layer).output_bytes_per_sample * microbatch_size


def t_period(
    model: ModelProfile,
    pool: DevicePool,
    layers: LayerRange,
    u: str,
    v: Optional[str],
    microbatch_size: int,
) -> float:
    """Per-microbatch cost of a stage with compute and outgoing transfer overlapped."""
    comp = t_comp(model, layers, pool.device(u), microbatch_size)
    comm = t_comm(pool, u, v, boundary_bytes(model, layers[1], microbatch_size))
    return max(comp, comm)


def stage_periods(model: ModelProfile, pool: DevicePool, plan: Plan) -> list[float]:
    stages = plan.stages
    out = []
    for k, stage in enumerate(stages):
        nxt = stages[k + 1].device_id if k + 1 < len(stages) else None
        out.append(t_period(model, pool, stage.layers, stage.device_id, nxt, plan.microbatch_size))
    return out


def plan_period(model: ModelProfile, pool: DevicePool, plan: Plan, *, check_memory: bool = True) -> float:
    """Bottleneck period of ``plan``: the slowest stage's period.

    Raises InfeasiblePlanError when the plan violates an invariant. With
    ``check_memory=False`` memory violations are tolerated (used to score
    baselines that do not respect memory).
    """
    violations = validate_plan(model, pool, plan)
    if not check_memory:
        violations = [v for v in violations if v.kind != "memory"]
    if violations:
        raise InfeasiblePlanError(violations)
    return max(stage_periods(model, pool, plan))


def validate_plan(model: ModelProfile, pool: DevicePool, plan: Plan) -> list[Violation]:
    """Every violated plan invariant; an empty list means the plan is valid."""
    out: list[Violation] = []
    L = model.num_layers
    if not plan.stages:
        return [Violation("coverage", None, f"plan has no stages; layers 1..{L} uncovered")]

    seen: dict[str, int] = {}
    expected = 1
    for k, stage in enumerate(plan.stages):
        if stage.first_layer > stage.last_layer:
            out.append(Violation("range", k, f"first_layer {stage.first_layer} > last_layer {stage.last_layer}"))
        if stage.first_layer < 1 or stage.last_layer > L:
            out.append(Violation("range", k, f"layers {stage.first_layer}..{stage.last_layer} outside 1..{L}"))
        if stage.first_layer > expected:
            gap = (expected, stage.first_layer - 1)
            gap_txt = str(gap[0]) if gap[0] == gap[1] else f"{gap[0]}..{gap[1]}"
            out.append(Violation("coverage", k, f"layers {gap_txt} not covered (gap {gap_txt})"))
        elif stage.first_layer < expected:
            out.append(Violation("contiguity", k, f"stage starts at {stage.first_layer}, overlapping layers before {expected}"))
        expected = max(expected, stage.last_layer + 1)

        if stage.device_id in seen:
            out.append(Violation("device-reuse", k, f"device {stage.device_id!r} already used by stage {seen[stage.device_id]}"))
        else:
            seen[stage.device_id] = k

        try:
            dev = pool.device(stage.device_id)
        except InvalidPoolError:
            out.append(Violation("unknown-device", k, f"device {stage.device_id!r} not in pool"))
            continue
        lo, hi = max(stage.first_layer, 1), min(stage.last_layer, L)
        if lo <= hi:
            need = model.memory((lo, hi))
            if need > dev.memory_bytes:
                out.append(Violation("memory", k, f"needs {need} bytes, device {dev.id!r} has {dev.memory_bytes}"))
    if expected <= L:
        gap_txt = str(expected) if expected == L else f"{expected}..{L}"
        out.append(Violation("coverage", None, f"layers {gap_txt} not covered (gap {gap_txt})"))
    return out
