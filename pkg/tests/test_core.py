import math

import pytest
from hypothesis import given, settings, strategies as st

from pipeplan.core import (
    Device,
    DevicePool,
    InfeasiblePlanError,
    InvalidPoolError,
    InvalidProfileError,
    InvalidRangeError,
    LayerSpec,
    ModelProfile,
    Plan,
    Stage,
    plan_period,
    stage_periods,
    t_comm,
    t_comp,
    t_period,
    validate_plan,
)

from conftest import identical_pool, uniform_model


def test_t_comp_identity_speed():
    model = uniform_model(2, base=0.5)
    assert t_comp(model, (1, 2), Device("a", "a", 1.0, 10), 1) == 1.0


def test_t_comp_speed_scaling():
    model = uniform_model(2, base=0.5)
    assert t_comp(model, (1, 2), Device("a", "a", 2.0, 10), 1) == 0.5


def test_t_comp_affine_microbatch():
    layers = tuple(LayerSpec(i + 1, b, 0.05, 0, 1) for i, b in enumerate([0.1, 0.2, 0.3]))
    model = ModelProfile(layers)
    # independent scalar evaluation of (overhead sum + per-sample sum * mb) / speed
    expected = (0.05 * 3 + (0.1 + 0.2 + 0.3) * 4) / 0.5
    assert expected == pytest.approx(5.1, rel=1e-12)
    assert t_comp(model, (1, 3), Device("a", "a", 0.5, 10), 4) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("rng_", [(0, 1), (1, 4), (2, 1), (3, 4)])
def test_t_comp_rejects_bad_range(rng_):
    with pytest.raises(InvalidRangeError):
        t_comp(uniform_model(3), rng_, Device("a", "a", 1.0, 10), 1)


def test_t_comm_cases():
    pool = DevicePool.uniform_links([Device("a", "x", 1, 1), Device("b", "x", 1, 1)], 1e8)
    assert t_comm(pool, "a", "b", 0) == 0.0
    assert t_comm(pool, "a", "b", 10 * 10**6) == pytest.approx(0.8)
    assert t_comm(pool, "a", None, 10**9) == 0.0
    lat = DevicePool.uniform_links([Device("a", "x", 1, 1), Device("b", "x", 1, 1)], 1e8, 0.02)
    assert t_comm(lat, "a", "b", 0) == 0.02


def _two_stage(comp, comm, mb=1):
    # one layer per stage, speed 1, output bytes chosen for the requested comm time
    bw = 8e6
    nbytes = round(comm * bw / 8)
    model = ModelProfile((LayerSpec(1, comp, 0.0, nbytes, 1), LayerSpec(2, comp, 0.0, 0, 1)))
    pool = DevicePool.uniform_links([Device("a", "x", 1, 10), Device("b", "x", 1, 10)], bw)
    return model, pool


@pytest.mark.parametrize("comp,comm,expected", [(1.0, 0.3, 1.0), (0.3, 1.0, 1.0)])
def test_t_period_is_max(comp, comm, expected):
    model, pool = _two_stage(comp, comm)
    assert t_period(model, pool, (1, 1), "a", "b", 1) == pytest.approx(expected)


def test_t_period_terminal_stage():
    model, pool = _two_stage(0.8, 5.0)
    assert t_period(model, pool, (1, 1), "a", None, 1) == 0.8


def test_plan_period_single_stage():
    model = uniform_model(4, base=0.25)
    pool = identical_pool(1)
    plan = Plan((Stage("d0", 1, 4),), 1, 0.0)
    assert plan_period(model, pool, plan) == t_comp(model, (1, 4), pool.devices[0], 1)


def test_plan_period_symmetric_split():
    model, pool = _two_stage(1.0, 0.2)
    plan = Plan((Stage("a", 1, 1), Stage("b", 2, 2)), 1, 0.0)
    assert plan_period(model, pool, plan) == 1.0


def test_plan_period_max_selection():
    layers = tuple(LayerSpec(i + 1, b, 0.0, 0, 1) for i, b in enumerate([0.7, 1.3, 0.9]))
    model = ModelProfile(layers)
    pool = identical_pool(3)
    plan = Plan(tuple(Stage(f"d{k}", k + 1, k + 1) for k in range(3)), 1, 0.0)
    assert plan_period(model, pool, plan) == 1.3
    assert stage_periods(model, pool, plan) == [0.7, 1.3, 0.9]


def test_validate_plan_ok_and_violations():
    model = uniform_model(4, memory=1_000_000_000)
    pool = DevicePool.uniform_links(
        [Device("big", "b", 1, 4_000_000_000), Device("small", "s", 1, 2_000_000_000)], 1e9
    )
    assert validate_plan(model, pool, Plan((Stage("big", 1, 2), Stage("small", 3, 4)), 1, 0)) == []

    gap = validate_plan(model, pool, Plan((Stage("big", 1, 2), Stage("small", 4, 4)), 1, 0))
    assert [v.kind for v in gap] == ["coverage"]
    assert "gap 3" in gap[0].detail

    mem = validate_plan(model, pool, Plan((Stage("big", 1, 1), Stage("small", 2, 4)), 1, 0))
    assert [(v.kind, v.stage_index) for v in mem] == [("memory", 1)]

    reuse = validate_plan(model, pool, Plan((Stage("big", 1, 2), Stage("big", 3, 4)), 1, 0))
    assert [v.kind for v in reuse] == ["device-reuse"]

    overlap = validate_plan(model, pool, Plan((Stage("big", 1, 3), Stage("small", 3, 4)), 1, 0))
    assert "contiguity" in [v.kind for v in overlap]

    tail = validate_plan(model, pool, Plan((Stage("big", 1, 2),), 1, 0))
    assert [v.kind for v in tail] == ["coverage"]

    beyond = validate_plan(model, pool, Plan((Stage("big", 1, 2), Stage("small", 3, 5)), 1, 0))
    assert "range" in [v.kind for v in beyond]

    unknown = validate_plan(model, pool, Plan((Stage("ghost", 1, 4),), 1, 0))
    assert [v.kind for v in unknown] == ["unknown-device"]


def test_plan_period_raises_on_infeasible():
    model = uniform_model(2, memory=5)
    pool = identical_pool(1, memory=4)
    with pytest.raises(InfeasiblePlanError) as exc:
        plan_period(model, pool, Plan((Stage("d0", 1, 2),), 1, 0))
    assert exc.value.violations[0].kind == "memory"


def test_profile_validation():
    with pytest.raises(InvalidProfileError):
        ModelProfile((LayerSpec(1, 1, 0, 0, 1), LayerSpec(3, 1, 0, 0, 1)))
    with pytest.raises(InvalidProfileError):
        ModelProfile(())
    with pytest.raises(InvalidProfileError):
        LayerSpec(1, 1, 0, 0, 0)
    with pytest.raises(InvalidPoolError):
        Device("a", "a", 0.0, 1)


def test_pool_validation():
    devs = [Device("a", "x", 1, 1), Device("b", "x", 1, 1)]
    with pytest.raises(InvalidPoolError):
        DevicePool(tuple(devs), [[0, 0], [1, 0]])
    with pytest.raises(InvalidPoolError):
        DevicePool((devs[0], Device("a", "y", 1, 1)), [[0, 1], [1, 0]])
    with pytest.raises(InvalidPoolError):
        DevicePool((devs[0], Device("b", "x", 2, 1)), [[0, 1], [1, 0]])
    three = (devs[0], devs[1], Device("c", "z", 1, 1))
    with pytest.raises(InvalidPoolError, match="different links"):
        DevicePool(three, [[0, 1, 5], [1, 0, 6], [5, 6, 0]])
    DevicePool(three, [[0, 1, 5], [1, 0, 5], [7, 7, 0]])


speeds = st.floats(0.05, 4.0)
works = st.lists(st.floats(0.0, 2.0), min_size=3, max_size=10)


@given(works, speeds, st.integers(1, 16), st.data())
def test_t_comp_additive(base_times, speed, mb, data):
    model = ModelProfile(tuple(LayerSpec(i + 1, b, 0.01, 0, 1) for i, b in enumerate(base_times)))
    L = len(base_times)
    a = data.draw(st.integers(1, L - 1))
    c = data.draw(st.integers(a + 1, L))
    b = data.draw(st.integers(a, c - 1))
    dev = Device("x", "x", speed, 1)
    whole = t_comp(model, (a, c), dev, mb)
    assert t_comp(model, (a, b), dev, mb) + t_comp(model, (b + 1, c), dev, mb) == pytest.approx(whole, rel=1e-12, abs=1e-15)


@given(works, speeds, st.sampled_from([0.25, 0.5, 2.0, 4.0, 8.0]), st.integers(1, 16))
def test_t_comp_inverse_speed_exact(base_times, speed, k, mb):
    model = ModelProfile(tuple(LayerSpec(i + 1, b, 0.0, 0, 1) for i, b in enumerate(base_times)))
    L = len(base_times)
    slow = t_comp(model, (1, L), Device("x", "x", speed, 1), mb)
    fast = t_comp(model, (1, L), Device("x", "x", speed * k, 1), mb)
    assert fast == slow / k


@given(st.integers(0, 10**9), st.integers(1, 50), st.floats(1e3, 1e10))
def test_t_comm_linear_without_latency(nbytes, factor, bw):
    pool = DevicePool.uniform_links([Device("a", "x", 1, 1), Device("b", "x", 1, 1)], bw)
    assert t_comm(pool, "a", "b", nbytes * factor) == pytest.approx(factor * t_comm(pool, "a", "b", nbytes), rel=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(0.01, 2.0), min_size=2, max_size=8), st.permutations(range(4)))
def test_plan_period_relabel_invariant(base_times, perm):
    model = ModelProfile(tuple(LayerSpec(i + 1, b, 0.0, 1000, 1) for i, b in enumerate(base_times)))
    pool = identical_pool(4, bandwidth=1e6)
    L = len(base_times)
    k = min(L, 4)
    cuts = [round(L * s / k) for s in range(k + 1)]
    stages = tuple(Stage(f"d{s}", cuts[s] + 1, cuts[s + 1]) for s in range(k) if cuts[s + 1] > cuts[s])
    relabelled = tuple(Stage(f"d{perm[int(s.device_id[1:])]}", s.first_layer, s.last_layer) for s in stages)
    p1 = plan_period(model, pool, Plan(stages, 2, 0))
    p2 = plan_period(model, pool, Plan(relabelled, 2, 0))
    assert p1 == p2
    # max of independently recomputed stage periods
    manual = []
    for idx, st_ in enumerate(stages):
        comp = sum(base_times[st_.first_layer - 1:st_.last_layer]) * 2
        comm = 0.0 if idx == len(stages) - 1 else 1000 * 2 * 8 / 1e6
        manual.append(max(comp, comm))
    assert p1 == pytest.approx(max(manual), rel=1e-12)
