"""Deterministic discrete-event simulation of a pipeline plan.

Each stage owns a compute resource and, unless it is the last stage, an
outgoing link. Both serve microbatches one at a time in FIFO order and run
concurrently, so a stage may compute microbatch m+1 while sending m. All
microbatches are available to the first stage at t=0.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Optional, Sequence

from .core import (
    DevicePool,
    InfeasiblePlanError,
    ModelProfile,
    Plan,
    boundary_bytes,
    plan_period,
    t_comm,
    t_comp,
    validate_plan,
)
from .instances import with_uniform_bandwidth

COMPUTE_START = "compute-start"
COMPUTE_END = "compute-end"
SEND_START = "send-start"
SEND_END = "send-end"

# ordering of completions sharing a timestamp; starts are dispatched afterwards
_END_PRIORITY = {SEND_END: 0, COMPUTE_END: 1}


@dataclass(frozen=True)
class SimConfig:
    microbatch_count: int
    microbatch_size: int
    warmup_exclusion: Optional[int] = None  # None -> number of stages

    def __post_init__(self):
        if self.microbatch_count < 1:
            raise ValueError("microbatch_count must be >= 1")
        if self.microbatch_size < 1:
            raise ValueError("microbatch_size must be >= 1")
        if self.warmup_exclusion is not None and not 0 <= self.warmup_exclusion < self.microbatch_count:
            raise ValueError("warmup_exclusion must be in [0, microbatch_count)")


@dataclass(frozen=True)
class SimEvent:
    kind: str
    stage_index: int
    microbatch_index: int
    timestamp_s: float


@dataclass
class SimReport:
    events: list[SimEvent]
    completions_s: list[float]
    makespan_s: float
    steady_period_s: float
    throughput_samples_per_s: float
    stage_busy_fraction: list[float]
    warmup_exclusion: int
    microbatch_size: int

    def to_json(self, include_events: bool = True) -> dict:
        out = {
            "makespan_s": self.makespan_s,
            "steady_period_s": self.steady_period_s,
            "throughput_samples_per_s": self.throughput_samples_per_s,
            "stage_busy_fraction": self.stage_busy_fraction,
            "warmup_exclusion": self.warmup_exclusion,
            "microbatch_size": self.microbatch_size,
            "completions_s": self.completions_s,
        }
        if include_events:
            out["events"] = [asdict(e) for e in self.events]
        return out

    def write_events(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.events:
                fh.write(json.dumps(asdict(e)) + "\n")


def stage_costs(model: ModelProfile, pool: DevicePool, plan: Plan, microbatch_size: int):
    """(compute seconds, send seconds or None) for every stage."""
    stages = plan.stages
    out = []
    for k, stage in enumerate(stages):
        comp = t_comp(model, stage.layers, pool.device(stage.device_id), microbatch_size)
        if k + 1 < len(stages):
            nbytes = boundary_bytes(model, stage.last_layer, microbatch_size)
            comm = t_comm(pool, stage.device_id, stages[k + 1].device_id, nbytes)
        else:
            comm = None
        out.append((comp, comm))
    return out


def simulate(model: ModelProfile, pool: DevicePool, plan: Plan, config: SimConfig) -> SimReport:
    violations = validate_plan(model, pool, plan)
    if violations:
        raise InfeasiblePlanError(violations)
    K = len(plan.stages)
    M = config.microbatch_count
    costs = stage_costs(model, pool, plan, config.microbatch_size)

    compute_queue = [deque() for _ in range(K)]
    compute_queue[0].extend(range(M))
    link_queue = [deque() for _ in range(K)]
    compute_busy = [False] * K
    link_busy = [False] * K
    busy_time = [0.0] * K
    completions = [0.0] * M
    events: list[SimEvent] = []
    heap: list[tuple] = []

    def dispatch(now: float):
        for s in range(K):
            if not compute_busy[s] and compute_queue[s]:
                m = compute_queue[s].popleft()
                compute_busy[s] = True
                events.append(SimEvent(COMPUTE_START, s, m, now))
                dur = costs[s][0]
                busy_time[s] += dur
                heapq.heappush(heap, (now + dur, _END_PRIORITY[COMPUTE_END], s, m))
        for s in range(K - 1):
            if not link_busy[s] and link_queue[s]:
                m = link_queue[s].popleft()
                link_busy[s] = True
                events.append(SimEvent(SEND_START, s, m, now))
                heapq.heappush(heap, (now + costs[s][1], _END_PRIORITY[SEND_END], s, m))

    dispatch(0.0)
    while heap:
        now = heap[0][0]
        while heap and heap[0][0] == now:
            _, prio, s, m = heapq.heappop(heap)
            if prio == _END_PRIORITY[SEND_END]:
                events.append(SimEvent(SEND_END, s, m, now))
                link_busy[s] = False
                compute_queue[s + 1].append(m)
            else:
                events.append(SimEvent(COMPUTE_END, s, m, now))
                compute_busy[s] = False
                if s + 1 < K:
                    link_queue[s].append(m)
                else:
                    completions[m] = now
        dispatch(now)

    warmup = config.warmup_exclusion
    if warmup is None:
        warmup = min(K, M - 1)
    makespan = completions[-1]
    first = max(warmup, 1)
    if M > first:
        steady = (completions[M - 1] - completions[first - 1]) / (M - first)
    else:
        steady = completions[0]
    busy = [b / makespan if makespan > 0 else 0.0 for b in busy_time]
    return SimReport(
        events=events,
        completions_s=completions,
        makespan_s=makespan,
        steady_period_s=steady,
        throughput_samples_per_s=config.microbatch_size / steady,
        stage_busy_fraction=busy,
        warmup_exclusion=warmup,
        microbatch_size=config.microbatch_size,
    )


@dataclass(frozen=True)
class SteadyStateComparison:
    analytic_period_s: float
    simulated_period_s: float
    relative_error: float


def steady_state_check(model: ModelProfile, pool: DevicePool, plan: Plan,
                       config: SimConfig) -> SteadyStateComparison:
    """Analytic bottleneck period against the simulated steady-state period."""
    if config.microbatch_count < 10 * len(plan.stages):
        raise ValueError("steady_state_check needs at least 10 microbatches per stage")
    sized = Plan(plan.stages, config.microbatch_size, plan.predicted_period_s)
    analytic = plan_period(model, pool, sized)
    report = simulate(model, pool, plan, config)
    rel = abs(report.steady_period_s - analytic) / analytic
    return SteadyStateComparison(analytic, report.steady_period_s, rel)


def sweep_microbatch(
    model: ModelProfile,
    pool: DevicePool,
    planner: Callable[[ModelProfile, DevicePool, int], "object"],
    mb_range: Iterable[int],
    microbatch_count: int = 100,
) -> list[tuple[int, float]]:
    """Re-plan and simulate at every microbatch size; returns (mb, samples/s) pairs."""
    sizes = list(mb_range)
    if not sizes:
        raise ValueError("mb_range must not be empty")
    curve = []
    for mb in sizes:
        result = planner(model, pool, mb)
        count = max(microbatch_count, 10 * len(result.plan.stages))
        report = simulate(model, pool, result.plan, SimConfig(count, mb))
        curve.append((mb, report.throughput_samples_per_s))
    return curve


def sweep_bandwidth(
    model: ModelProfile,
    pool: DevicePool,
    plan: Plan,
    bandwidths_bps: Sequence[float],
    microbatch_count: int = 100,
) -> list[tuple[float, float]]:
    """Simulate a fixed plan with every link set to each bandwidth in turn."""
    curve = []
    for bw in bandwidths_bps:
        shaped = with_uniform_bandwidth(pool, bw)
        count = max(microbatch_count, 10 * len(plan.stages))
        report = simulate(model, shaped, plan, SimConfig(count, plan.microbatch_size))
        curve.append((bw, report.throughput_samples_per_s))
    return curve
