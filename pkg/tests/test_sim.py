import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from pipeplan.core import Device, DevicePool, InfeasiblePlanError, LayerSpec, ModelProfile, Plan, Stage, plan_period
from pipeplan.instances import random_heterogeneous_pool, random_model
from pipeplan.partitioner import partition_naive_dp
from pipeplan.sim import (
    COMPUTE_END,
    COMPUTE_START,
    SEND_END,
    SEND_START,
    SimConfig,
    simulate,
    steady_state_check,
    sweep_bandwidth,
    sweep_microbatch,
)

from conftest import identical_pool


def reference_completions(comp, comm, count):
    """Max-plus recurrences for FIFO stages and links with unbounded buffers."""
    K = len(comp)
    ready = [0.0] * count
    for s in range(K):
        end_prev = 0.0
        done = []
        for m in range(count):
            start = max(ready[m], end_prev)
            end_prev = start + comp[s]
            done.append(end_prev)
        if s == K - 1:
            return done
        link_prev = 0.0
        for m in range(count):
            start = max(done[m], link_prev)
            link_prev = start + comm[s]
            ready[m] = link_prev


def chain(comp, comm):
    """One layer per stage on speed-1 devices; link k carries comm[k] seconds at 8 Mbit/s."""
    K = len(comp)
    bw = 8e6
    layers = tuple(
        LayerSpec(k + 1, comp[k], 0.0, round(comm[k] * bw / 8) if k < K - 1 else 0, 1) for k in range(K)
    )
    model = ModelProfile(layers)
    pool = identical_pool(K, bandwidth=bw)
    plan = Plan(tuple(Stage(f"d{k}", k + 1, k + 1) for k in range(K)), 1, 0)
    return model, pool, plan


def test_reference_matches_hand_timeline():
    done = reference_completions([1.0, 1.0], [0.2], 10)
    assert done[-1] == pytest.approx(11.2)
    assert done[0] == pytest.approx(2.2)


def test_single_stage():
    model, pool, plan = chain([1.0], [])
    rep = simulate(model, pool, plan, SimConfig(3, 1))
    assert rep.completions_s == [1.0, 2.0, 3.0]
    assert rep.steady_period_s == 1.0
    assert rep.makespan_s == 3.0
    assert rep.stage_busy_fraction == [1.0]


def test_two_stage_compute_bound():
    model, pool, plan = chain([1.0, 1.0], [0.2])
    rep = simulate(model, pool, plan, SimConfig(10, 1))
    assert rep.makespan_s == pytest.approx(1 + 0.2 + 1 + 9 * 1)
    assert rep.steady_period_s == pytest.approx(1.0)
    assert rep.completions_s == pytest.approx(reference_completions([1.0, 1.0], [0.2], 10), rel=1e-12)


def test_two_stage_network_bound():
    model, pool, plan = chain([0.3, 0.3], [1.0])
    rep = simulate(model, pool, plan, SimConfig(10, 1))
    assert rep.steady_period_s == pytest.approx(1.0, rel=1e-12)
    assert rep.steady_period_s == pytest.approx(plan_period(model, pool, plan), rel=1e-12)


def test_bottleneck_in_middle_stage():
    model, pool, plan = chain([0.5, 1.5, 0.7], [0.1, 0.4])
    chk = steady_state_check(model, pool, plan, SimConfig(100, 1))
    assert chk.analytic_period_s == pytest.approx(1.5)
    assert chk.relative_error <= 1e-9
    ref = reference_completions([0.5, 1.5, 0.7], [0.1, 0.4], 100)
    assert simulate(model, pool, plan, SimConfig(100, 1)).completions_s == pytest.approx(ref, rel=1e-12)


def test_single_stage_steady_equals_t_comp():
    model = ModelProfile.uniform(3, 0.25, 0, 1, fixed_overhead=0.1)
    pool = identical_pool(1, speed=0.5)
    plan = Plan((Stage("d0", 1, 3),), 4, 0)
    chk = steady_state_check(model, pool, plan, SimConfig(20, 4))
    assert chk.simulated_period_s == pytest.approx((0.3 + 4 * 0.75) / 0.5, rel=1e-12)


def test_steady_state_check_needs_enough_microbatches():
    model, pool, plan = chain([1.0, 1.0], [0.1])
    with pytest.raises(ValueError):
        steady_state_check(model, pool, plan, SimConfig(19, 1))


def test_simulate_rejects_invalid_plan():
    model, pool, _ = chain([1.0, 1.0], [0.1])
    with pytest.raises(InfeasiblePlanError):
        simulate(model, pool, Plan((Stage("d0", 1, 1),), 1, 0), SimConfig(5, 1))


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(0, 1)
    with pytest.raises(ValueError):
        SimConfig(5, 1, warmup_exclusion=5)


def test_event_tie_order_and_jsonl(tmp_path):
    # comp == comm makes send-end, compute-end and compute-start coincide
    model, pool, plan = chain([1.0, 1.0], [1.0])
    rep = simulate(model, pool, plan, SimConfig(4, 1))
    rank = {SEND_END: 0, COMPUTE_END: 1, COMPUTE_START: 2, SEND_START: 3}
    by_time = {}
    for e in rep.events:
        by_time.setdefault(e.timestamp_s, []).append(e)
    for events in by_time.values():
        # within a dispatch round ends precede starts, send-end before compute-end
        ends = [e for e in events if e.kind in (SEND_END, COMPUTE_END)]
        assert [rank[e.kind] for e in ends] == sorted(rank[e.kind] for e in ends)
    path = tmp_path / "events.jsonl"
    rep.write_events(path)
    lines = path.read_text().splitlines()
    assert len(lines) == len(rep.events)
    assert json.loads(lines[0]) == {"kind": COMPUTE_START, "stage_index": 0, "microbatch_index": 0, "timestamp_s": 0.0}


def _random_feasible(seed):
    rng = random.Random(seed)
    L = rng.randint(1, 8)
    model = random_model(rng, L)
    pool = random_heterogeneous_pool(rng, rng.randint(1, 5), max_memory=10**13, latency=True)
    k = rng.randint(1, min(L, pool.size))
    cuts = sorted(rng.sample(range(1, L), k - 1))
    bounds = [0] + cuts + [L]
    order = rng.sample([d.id for d in pool.devices], k)
    plan = Plan(tuple(Stage(order[s], bounds[s] + 1, bounds[s + 1]) for s in range(k)), rng.randint(1, 8), 0)
    return model, pool, plan


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_event_invariants(seed, count):
    model, pool, plan = _random_feasible(seed)
    K = len(plan.stages)
    rep = simulate(model, pool, plan, SimConfig(count, plan.microbatch_size))
    kinds = [e.kind for e in rep.events]
    assert kinds.count(COMPUTE_START) == kinds.count(COMPUTE_END) == K * count
    assert kinds.count(SEND_START) == kinds.count(SEND_END) == (K - 1) * count
    assert len(rep.events) == 2 * K * count + 2 * (K - 1) * count

    at = {(e.kind, e.stage_index, e.microbatch_index): e.timestamp_s for e in rep.events}
    for m in range(count):
        for s in range(K):
            assert at[(COMPUTE_END, s, m)] >= at[(COMPUTE_START, s, m)]
            if s > 0:
                assert at[(COMPUTE_START, s, m)] >= at[(SEND_END, s - 1, m)]
            if m > 0:
                assert at[(COMPUTE_START, s, m)] >= at[(COMPUTE_END, s, m - 1)]
            if s < K - 1:
                assert at[(SEND_START, s, m)] >= at[(COMPUTE_END, s, m)]
    times = [e.timestamp_s for e in rep.events]
    assert times == sorted(times)

    period = plan_period(model, pool, plan)
    assert rep.makespan_s >= (count - 1) * period * (1 - 1e-12)
    again = simulate(model, pool, plan, SimConfig(count, plan.microbatch_size))
    assert again.events == rep.events


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_reference_simulator(seed):
    from pipeplan.sim import stage_costs

    model, pool, plan = _random_feasible(seed)
    costs = stage_costs(model, pool, plan, plan.microbatch_size)
    ref = reference_completions([c for c, _ in costs], [m for _, m in costs[:-1]], 30)
    rep = simulate(model, pool, plan, SimConfig(30, plan.microbatch_size))
    assert rep.completions_s == pytest.approx(ref, rel=1e-12)


def test_sweep_microbatch_zero_overhead_flat():
    model = ModelProfile.uniform(4, 0.1, 1000, 1)
    pool = identical_pool(2, bandwidth=1e6)
    curve = sweep_microbatch(model, pool, partition_naive_dp, [1, 2, 4, 8])
    values = [tp for _, tp in curve]
    assert values == pytest.approx([values[0]] * 4, rel=1e-9)


def test_sweep_microbatch_closed_form():
    model = ModelProfile((LayerSpec(1, 0.01, 0.1, 0, 1),))
    pool = identical_pool(1)
    for mb, tp in sweep_microbatch(model, pool, partition_naive_dp, range(1, 33)):
        assert tp == pytest.approx(mb / (0.1 + 0.01 * mb), rel=1e-9)


def test_sweep_microbatch_latency_penalizes_small_batches():
    model = ModelProfile((LayerSpec(1, 0.01, 0.0, 1000, 1), LayerSpec(2, 0.01, 0.0, 0, 1)))
    devices = [Device("a", "x", 1, 10), Device("b", "x", 1, 10)]
    pool = DevicePool.uniform_links(devices, 1e6, latency_s=0.05)
    plan = Plan((Stage("a", 1, 1), Stage("b", 2, 2)), 1, 0)

    def fixed_two_stage(model_, pool_, mb):
        from pipeplan.partitioner import PlannerResult

        p = Plan(plan.stages, mb, 0)
        return PlannerResult(p, plan_period(model_, pool_, p), "fixed", 0.0, 0)

    curve = sweep_microbatch(model, pool, fixed_two_stage, [1, 2, 4, 8, 16, 32])
    for mb, tp in curve:
        # link: 8000 bits per sample at 1 Mbit/s plus 50 ms latency; compute 10 ms per sample
        assert tp == pytest.approx(mb / max(0.01 * mb, 0.008 * mb + 0.05), rel=1e-9)
    tps = [tp for _, tp in curve]
    assert tps == sorted(tps)
    assert tps[0] < tps[-1] <= 100 * (1 + 1e-12)


def test_sweep_bandwidth_uses_uniform_links():
    model, pool, plan = chain([1.0, 1.0], [0.5])
    curve = sweep_bandwidth(model, pool, plan, [8e6, 2e6])
    assert curve[0][1] == pytest.approx(1.0, rel=1e-9)
    assert curve[1][1] == pytest.approx(1 / 2.0, rel=1e-9)
