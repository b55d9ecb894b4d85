"""Optimal and baseline planners.

The two DP planners share one forward sweep over states ``(i, used, u)``:
layers 1..i are placed, ``used`` encodes the devices already holding a stage,
and ``u`` is the device (or category) that will host the next stage. The naive
planner encodes ``used`` as a device bitmask, the category planner as a
mixed-radix vector of per-category usage counts.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .core import (
    DevicePool,
    InvalidPoolError,
    ModelProfile,
    PipeplanError,
    Plan,
    Stage,
    Violation,
    boundary_bytes,
    plan_period,
    t_comm,
    t_period,
    validate_plan,
)

INF = math.inf
TERMINAL = None  # successor sentinel for the last stage


class InfeasibleError(PipeplanError):
    """No assignment of layers to devices satisfies the memory limits."""


class RefusedScaleError(PipeplanError):
    pass


class PlannerTimeoutError(PipeplanError):
    pass


class PlannerConsistencyError(PipeplanError, RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerResult:
    plan: Plan
    t_opt_s: float
    planner: str
    wall_time_s: float
    states_explored: int
    violations: tuple[Violation, ...] = ()

    @property
    def throughput(self) -> float:
        return self.plan.microbatch_size / self.t_opt_s


@dataclass(frozen=True)
class BruteForceLimits:
    max_devices: int = 5
    max_layers: int = 8
    timeout_s: Optional[float] = None


@dataclass
class DpTable:
    """Memoized ``h(i, used, u)`` values and precursor links.

    ``h[i][used]`` is a list indexed by the next slot ``u``; terminal entries
    (``u`` is the none-successor) live in ``terminal[used]`` as
    ``(value, last_slot, stage_start)``. ``precursor[i][used][u]`` is
    ``(prev_i, prev_slot)``: slot ``prev_slot`` ran layers ``prev_i+1..i``.
    """

    num_layers: int
    num_slots: int
    microbatch_size: int
    remove: Callable[[int, int], int]
    resolve: Callable[[Sequence[int]], list[str]]
    h: list[dict[int, list[float]]] = field(default_factory=list)
    precursor: list[dict[int, list[Optional[tuple[int, int]]]]] = field(default_factory=list)
    terminal: dict[int, tuple[float, int, int]] = field(default_factory=dict)

    def value(self, key) -> float:
        i, used, u = key
        if u is TERMINAL:
            if i != self.num_layers or used not in self.terminal:
                return INF
            return self.terminal[used][0]
        row = self.h[i].get(used)
        return INF if row is None else row[u]

    def slot_sequence(self, i: int, used: int, u: int) -> list[int]:
        """Slots already holding stages, in pipeline order, for state (i, used, u)."""
        seq = []
        while i > 0:
            link = self.precursor[i][used][u]
            if link is None:
                raise PlannerConsistencyError(f"broken precursor chain at ({i}, {used}, {u})")
            prev_i, prev_u = link
            seq.append(prev_u)
            used = self.remove(used, prev_u)
            i, u = prev_i, prev_u
        if used != 0:
            raise PlannerConsistencyError("precursor chain ends with devices still marked used")
        seq.reverse()
        return seq


def reconstruct_strategy(table: DpTable, terminal_key) -> Plan:
    """Walk precursor links from ``(L, used, TERMINAL)`` back to layer 0."""
    L, used, u = terminal_key
    if u is not TERMINAL or L != table.num_layers or used not in table.terminal:
        raise PlannerConsistencyError(f"{terminal_key!r} is not a finite terminal state")
    value, last, start = table.terminal[used]
    stages_rev = [(last, start + 1, L)]
    used = table.remove(used, last)
    i, u = start, last
    while i > 0:
        link = table.precursor[i].get(used, [None] * table.num_slots)[u]
        if link is None:
            raise PlannerConsistencyError(f"broken precursor chain at ({i}, {used}, {u})")
        prev_i, prev_u = link
        stages_rev.append((prev_u, prev_i + 1, i))
        used = table.remove(used, prev_u)
        i, u = prev_i, prev_u
    if used != 0:
        raise PlannerConsistencyError("precursor chain ends with devices still marked used")
    stages_rev.reverse()
    ids = table.resolve([slot for slot, _, _ in stages_rev])
    stages = tuple(Stage(dev, a, b) for dev, (_, a, b) in zip(ids, stages_rev))
    return Plan(stages, table.microbatch_size, value)


class _Costs:
    """Per-slot cost tables built with the same folds as the core functions."""

    def __init__(self, model: ModelProfile, pool: DevicePool, reps: Sequence[int], mb: int,
                 pair: Callable[[int, int], Optional[tuple[int, int]]]):
        L = model.num_layers
        self.L = L
        work = [layer.work(mb) for layer in model.layers]
        mem = [layer.memory_bytes for layer in model.layers]
        nbytes = [boundary_bytes(model, j, mb) for j in range(1, L + 1)]
        n = len(reps)
        self.comp = []  # comp[u][i] -> list over j (index j-i-1)
        self.reach = []  # reach[u][i] -> largest j with layers i+1..j fitting
        for u in range(n):
            dev = pool.devices[reps[u]]
            comp_u, reach_u = [], []
            for i in range(L):
                acc = 0.0
                used = 0
                row = []
                j = i
                for k in range(i, L):
                    used += mem[k]
                    if used > dev.memory_bytes:
                        break
                    acc += work[k]
                    row.append(acc / dev.speed)
                    j = k + 1
                comp_u.append(row)
                reach_u.append(j)
            self.comp.append(comp_u)
            self.reach.append(reach_u)
        # comm[u][v][j] for boundary after layer j (1..L-1); None when u->v impossible
        self.comm = []
        for u in range(n):
            rows = []
            for v in range(n):
                link = pair(u, v)
                if link is None:
                    rows.append(None)
                    continue
                a, b = pool.devices[link[0]].id, pool.devices[link[1]].id
                rows.append([0.0] + [t_comm(pool, a, b, nbytes[j - 1]) for j in range(1, L)])
            self.comm.append(rows)


def _infeasible_message(model: ModelProfile, pool: DevicePool) -> str:
    biggest_layer = max(model.layers, key=lambda l: l.memory_bytes)
    biggest_dev = max(pool.devices, key=lambda d: d.memory_bytes)
    total_dev = sum(d.memory_bytes for d in pool.devices)
    total_model = sum(l.memory_bytes for l in model.layers)
    return (
        f"no feasible assignment: largest layer {biggest_layer.index} needs {biggest_layer.memory_bytes} B, "
        f"largest device {biggest_dev.id!r} has {biggest_dev.memory_bytes} B; "
        f"model needs {total_model} B in total, pool has {total_dev} B"
    )


def _sweep(
    L: int,
    n: int,
    costs: _Costs,
    table: DpTable,
    available: Callable[[int], list[int]],
    add: Callable[[int, int], int],
    count: Callable[[int], int],
    rank_of: Callable[[int, int], int],
) -> tuple[Optional[tuple], int]:
    """Forward DP over all reachable states. Returns (best terminal key, evaluations).

    Ties on value keep the lexicographically smaller device-id prefix; every
    state carries its prefix as a tuple of id ranks so ties compare in O(L).
    """
    comp, reach, comm = costs.comp, costs.reach, costs.comm
    h, prec, terminal = table.h, table.precursor, table.terminal
    keys: list[dict[int, list[tuple]]] = [dict() for _ in range(L + 1)]
    keys[0][0] = [()] * n
    term_keys: dict[int, tuple] = {}

    evaluated = 0
    for i in range(L):
        layer_states = h[i]
        layer_keys = keys[i]
        for used in sorted(layer_states):
            row = layer_states[used]
            krow = layer_keys[used]
            for u in available(used):
                base = row[u]
                if base == INF:
                    continue
                used2 = add(used, u)
                nxt = available(used2)
                comp_u = comp[u][i]
                comm_u = comm[u]
                ext = krow[u] + (rank_of(used, u),)
                for j in range(i + 1, reach[u][i] + 1):
                    c = comp_u[j - i - 1]
                    if base > c:
                        c = base
                    if j == L:
                        evaluated += 1
                        cur = terminal.get(used2)
                        if cur is None or c < cur[0] or (c == cur[0] and ext < term_keys[used2]):
                            terminal[used2] = (c, u, i)
                            term_keys[used2] = ext
                        continue
                    target = h[j].get(used2)
                    if target is None:
                        target = h[j][used2] = [INF] * n
                        prec[j][used2] = [None] * n
                        keys[j][used2] = [()] * n
                    tprec = prec[j][used2]
                    tkeys = keys[j][used2]
                    for v in nxt:
                        evaluated += 1
                        link = comm_u[v][j]
                        val = c if c > link else link
                        old = target[v]
                        if val < old or (val == old and ext < tkeys[v]):
                            target[v] = val
                            tprec[v] = (i, u)
                            tkeys[v] = ext

    best_key, best_rank = None, None
    for used2, (value, _, _) in terminal.items():
        rank = (value, count(used2), term_keys[used2])
        if best_rank is None or rank < best_rank:
            best_key, best_rank = (L, used2, TERMINAL), rank
    return best_key, evaluated


def _finish(model, pool, table, key, name, started, evaluated) -> PlannerResult:
    if key is None:
        raise InfeasibleError(_infeasible_message(model, pool))
    plan = reconstruct_strategy(table, key)
    violations = validate_plan(model, pool, plan)
    if violations:
        raise PlannerConsistencyError(f"{name} produced an invalid plan: {violations}")
    period = plan_period(model, pool, plan)
    if period != plan.predicted_period_s:
        raise PlannerConsistencyError(
            f"{name}: table value {plan.predicted_period_s!r} != recomputed period {period!r}"
        )
    return PlannerResult(plan, period, name, time.perf_counter() - started, evaluated)


def _new_table(L, n, mb, remove, resolve) -> DpTable:
    table = DpTable(L, n, mb, remove, resolve)
    table.h = [dict() for _ in range(L + 1)]
    table.precursor = [dict() for _ in range(L + 1)]
    table.h[0][0] = [0.0] * n
    table.precursor[0][0] = [None] * n
    return table


def partition_naive_dp(model: ModelProfile, pool: DevicePool, microbatch_size: int) -> PlannerResult:
    """Optimal plan by DP over (layers placed, device subset, next device)."""
    started = time.perf_counter()
    L, D = model.num_layers, pool.size
    ids = [d.id for d in pool.devices]
    costs = _Costs(model, pool, list(range(D)), microbatch_size,
                   lambda u, v: None if u == v else (u, v))

    def available(mask):
        return [u for u in range(D) if not mask >> u & 1]

    cache: dict[int, list[int]] = {}

    def available_cached(mask):
        got = cache.get(mask)
        if got is None:
            got = cache[mask] = available(mask)
        return got

    table = _new_table(
        L, D, microbatch_size,
        remove=lambda mask, u: mask & ~(1 << u),
        resolve=lambda seq: [ids[u] for u in seq],
    )
    id_rank = {dev_id: r for r, dev_id in enumerate(sorted(ids))}
    ranks = [id_rank[dev_id] for dev_id in ids]
    key, evaluated = _sweep(
        L, D, costs, table, available_cached,
        add=lambda mask, u: mask | (1 << u),
        count=lambda mask: bin(mask).count("1"),
        rank_of=lambda mask, u: ranks[u],
    )
    return _finish(model, pool, table, key, "dp", started, evaluated)


def partition_category_dp(model: ModelProfile, pool: DevicePool, microbatch_size: int) -> PlannerResult:
    """Optimal plan by DP over per-category usage counts instead of device subsets."""
    started = time.perf_counter()
    L = model.num_layers
    groups = pool.categories()  # validated identical at pool construction
    cats = list(groups)
    N = len(cats)
    sizes = [len(groups[c]) for c in cats]
    members = [sorted(pool.index(d.id) for d in groups[c]) for c in cats]
    by_id = [sorted(groups[c], key=lambda d: d.id) for c in cats]
    radix = [1] * N
    for k in range(1, N):
        radix[k] = radix[k - 1] * (sizes[k - 1] + 1)

    def pair(a, b):
        if a != b:
            return members[a][0], members[b][0]
        if sizes[a] < 2:
            return None
        return members[a][0], members[a][1]

    costs = _Costs(model, pool, [m[0] for m in members], microbatch_size, pair)

    def counts_of(code):
        return [(code // radix[k]) % (sizes[k] + 1) for k in range(N)]

    cache: dict[int, list[int]] = {}

    def available(code):
        got = cache.get(code)
        if got is None:
            cnt = counts_of(code)
            got = cache[code] = [k for k in range(N) if cnt[k] < sizes[k]]
        return got

    def resolve(seq):
        taken = [0] * N
        out = []
        for k in seq:
            out.append(by_id[k][taken[k]].id)
            taken[k] += 1
        return out

    table = _new_table(
        L, N, microbatch_size,
        remove=lambda code, k: code - radix[k],
        resolve=resolve,
    )
    id_rank = {dev_id: r for r, dev_id in enumerate(sorted(d.id for d in pool.devices))}
    ranks = [[id_rank[d.id] for d in by_id[k]] for k in range(N)]
    key, evaluated = _sweep(
        L, N, costs, table, available,
        add=lambda code, k: code + radix[k],
        count=lambda code: sum(counts_of(code)),
        rank_of=lambda code, k: ranks[k][(code // radix[k]) % (sizes[k] + 1)],
    )
    return _finish(model, pool, table, key, "category", started, evaluated)


def search_space_size(num_devices: int, num_layers: int) -> int:
    """Number of (ordered device sequence, contiguous split) candidates."""
    D, L = num_devices, num_layers
    return sum(
        math.perm(D, k) * math.comb(L - 1, k - 1) for k in range(1, min(D, L) + 1)
    )


def partition_brute_force(
    model: ModelProfile,
    pool: DevicePool,
    microbatch_size: int,
    limits: BruteForceLimits = BruteForceLimits(),
) -> PlannerResult:
    """Exhaustive search; every candidate is scored with the core cost functions."""
    started = time.perf_counter()
    L, D = model.num_layers, pool.size
    if D > limits.max_devices or L > limits.max_layers:
        raise RefusedScaleError(
            f"brute force refused: D={D}, L={L} exceeds limits "
            f"(max_devices={limits.max_devices}, max_layers={limits.max_layers}); "
            f"{search_space_size(D, L)} candidates"
        )
    deadline = None if limits.timeout_s is None else started + limits.timeout_s
    ids = [d.id for d in pool.devices]
    mem = {d.id: d.memory_bytes for d in pool.devices}

    best = None
    candidates = 0
    for k in range(1, min(D, L) + 1):
        for cuts in itertools.combinations(range(1, L), k - 1):
            bounds = (0,) + cuts + (L,)
            ranges = [(bounds[s] + 1, bounds[s + 1]) for s in range(k)]
            need = [model.memory(r) for r in ranges]
            for order in itertools.permutations(ids, k):
                candidates += 1
                if deadline is not None and candidates % 4096 == 0 and time.perf_counter() > deadline:
                    raise PlannerTimeoutError(f"brute force exceeded {limits.timeout_s} s")
                if any(need[s] > mem[order[s]] for s in range(k)):
                    continue
                period = max(
                    t_period(model, pool, ranges[s], order[s],
                             order[s + 1] if s + 1 < k else None, microbatch_size)
                    for s in range(k)
                )
                rank = (period, k, order)
                if best is None or rank < best[0]:
                    best = (rank, ranges)
    if best is None:
        raise InfeasibleError(_infeasible_message(model, pool))
    (period, k, order), ranges = best
    plan = Plan(tuple(Stage(dev, a, b) for dev, (a, b) in zip(order, ranges)), microbatch_size, period)
    t_opt = plan_period(model, pool, plan)
    return PlannerResult(plan, t_opt, "brute", time.perf_counter() - started, candidates)


def even_split(num_layers: int, parts: int) -> list[tuple[int, int]]:
    """Contiguous near-equal ranges; the first ``L mod k`` parts get one extra layer."""
    size, extra = divmod(num_layers, parts)
    out, first = [], 1
    for k in range(parts):
        n = size + (1 if k < extra else 0)
        out.append((first, first + n - 1))
        first += n
    return out


def partition_even(model: ModelProfile, pool: DevicePool, device_order: Sequence[str],
                   microbatch_size: int) -> PlannerResult:
    """Baseline: equal layer counts per device, in the given order.

    The period is scored against ``pool``; memory violations do not raise but are
    attached to the result.
    """
    started = time.perf_counter()
    order = list(device_order)
    if not order:
        raise ValueError("device_order must not be empty")
    if len(order) > model.num_layers:
        raise ValueError(f"{len(order)} devices for {model.num_layers} layers")
    if len(set(order)) != len(order):
        raise ValueError("device_order contains duplicates")
    for dev in order:
        pool.index(dev)
    ranges = even_split(model.num_layers, len(order))
    stages = tuple(Stage(dev, a, b) for dev, (a, b) in zip(order, ranges))
    draft = Plan(stages, microbatch_size, INF)
    violations = tuple(validate_plan(model, pool, draft))
    period = plan_period(model, pool, draft, check_memory=False)
    plan = Plan(stages, microbatch_size, period)
    return PlannerResult(plan, period, "even", time.perf_counter() - started, 1, violations)


PLANNERS = {
    "dp": partition_naive_dp,
    "category": partition_category_dp,
    "brute": partition_brute_force,
}


def naive_dp_work(num_devices: int, num_layers: int) -> int:
    """Upper bound on naive-DP transition evaluations."""
    return 2 ** num_devices * num_layers ** 2 * num_devices ** 2


def category_dp_work(category_sizes: Sequence[int], num_layers: int) -> int:
    prod = 1
    for n in category_sizes:
        prod *= n + 1
    N = len(category_sizes)
    return prod * num_layers ** 2 * N ** 2


__all__ = [
    "BruteForceLimits",
    "DpTable",
    "InfeasibleError",
    "InvalidPoolError",
    "PlannerConsistencyError",
    "PlannerResult",
    "PlannerTimeoutError",
    "RefusedScaleError",
    "TERMINAL",
    "category_dp_work",
    "even_split",
    "naive_dp_work",
    "partition_brute_force",
    "partition_category_dp",
    "partition_even",
    "partition_naive_dp",
    "reconstruct_strategy",
    "search_space_size",
]
