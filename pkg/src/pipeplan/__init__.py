"""Pipeline partition planning and simulation for heterogeneous edge devices."""

from .core import (
    Device,
    DevicePool,
    InfeasiblePlanError,
    InvalidPoolError,
    InvalidProfileError,
    InvalidRangeError,
    LayerSpec,
    ModelProfile,
    PipeplanError,
    Plan,
    Stage,
    Violation,
    plan_period,
    t_comm,
    t_comp,
    t_period,
    validate_plan,
)
from .partitioner import (
    BruteForceLimits,
    DpTable,
    InfeasibleError,
    PlannerResult,
    RefusedScaleError,
    partition_brute_force,
    partition_category_dp,
    partition_even,
    partition_naive_dp,
    reconstruct_strategy,
)
from .sim import SimConfig, SimEvent, SimReport, simulate, steady_state_check, sweep_microbatch

__version__ = "0.1.0"
