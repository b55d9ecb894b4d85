"""JSON (de)serialization of profiles, pools, plans and scenarios."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Union

from .core import Device, DevicePool, LayerSpec, ModelProfile, PipeplanError, Plan, Stage

PathLike = Union[str, Path]


class ParseError(PipeplanError):
    pass


def _read_json(path: PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ParseError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None


def _int(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ParseError(f"{what} must be an integer, got {value!r}")
    return int(value)


def model_from_dict(data: dict) -> ModelProfile:
    try:
        layers = tuple(
            LayerSpec(
                index=_int(l["index"], "layer index"),
                base_time_per_sample=float(l["base_time_per_sample"]),
                fixed_overhead=float(l.get("fixed_overhead", 0.0)),
                output_bytes_per_sample=_int(l["output_bytes_per_sample"], "output_bytes_per_sample"),
                memory_bytes=_int(l["memory_bytes"], "memory_bytes"),
            )
            for l in data["layers"]
        )
        return ModelProfile(layers, str(data.get("name", "")))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed model profile: {exc!r}") from None
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def model_to_dict(model: ModelProfile) -> dict:
    return {
        "name": model.name,
        "layers": [
            {
                "index": l.index,
                "base_time_per_sample": l.base_time_per_sample,
                "fixed_overhead": l.fixed_overhead,
                "output_bytes_per_sample": l.output_bytes_per_sample,
                "memory_bytes": l.memory_bytes,
            }
            for l in model.layers
        ],
    }


def pool_from_dict(data: dict) -> DevicePool:
    try:
        devices = tuple(
            Device(
                id=str(d["id"]),
                category=str(d.get("category", d["id"])),
                speed=float(d["speed"]),
                memory_bytes=_int(d["memory_bytes"], "memory_bytes"),
            )
            for d in data["devices"]
        )
        return DevicePool(devices, data["bandwidth_bps"], data.get("latency_s"))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed device pool: {exc!r}") from None
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def pool_to_dict(pool: DevicePool) -> dict:
    return {
        "devices": [
            {"id": d.id, "category": d.category, "speed": d.speed, "memory_bytes": d.memory_bytes}
            for d in pool.devices
        ],
        "bandwidth_bps": [list(row) for row in pool.bandwidth_bps],
        "latency_s": [list(row) for row in pool.latency_s],
    }


def plan_to_dict(result) -> dict:
    """Plan file payload for a PlannerResult."""
    plan = result.plan
    out = {
        "planner": result.planner,
        "microbatch_size": plan.microbatch_size,
        "t_opt_s": result.t_opt_s,
        "predicted_throughput": plan.microbatch_size / result.t_opt_s,
        "stages": [
            {"device_id": s.device_id, "first_layer": s.first_layer, "last_layer": s.last_layer}
            for s in plan.stages
        ],
        "wall_time_s": result.wall_time_s,
        "states_explored": result.states_explored,
    }
    if result.violations:
        out["violations"] = [
            {"kind": v.kind, "stage_index": v.stage_index, "detail": v.detail} for v in result.violations
        ]
    return out


def plan_from_dict(data: dict) -> Plan:
    try:
        stages = tuple(
            Stage(str(s["device_id"]), _int(s["first_layer"], "first_layer"), _int(s["last_layer"], "last_layer"))
            for s in data["stages"]
        )
        return Plan(stages, _int(data["microbatch_size"], "microbatch_size"), float(data["t_opt_s"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed plan: {exc!r}") from None
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def load_model(path: PathLike) -> ModelProfile:
    return model_from_dict(_read_json(path))


def load_pool(path: PathLike) -> DevicePool:
    return pool_from_dict(_read_json(path))


def load_plan(path: PathLike) -> Plan:
    return plan_from_dict(_read_json(path))


@dataclass(frozen=True)
class Scenario:
    name: str
    model_ref: Path
    pool_ref: Path
    microbatch_sizes: tuple[int, ...]
    comment: str = ""

    def load(self) -> tuple[ModelProfile, DevicePool]:
        return load_model(self.model_ref), load_pool(self.pool_ref)


def load_scenario(path: PathLike) -> Scenario:
    """Scenario file; model/pool paths are resolved relative to the scenario file."""
    data = _read_json(path)
    base = Path(path).resolve().parent
    try:
        sizes = data["microbatch_sizes"]
        if isinstance(sizes, (int, float)):
            sizes = [sizes]
        sizes = tuple(_int(s, "microbatch size") for s in sizes)
        if not sizes:
            raise ParseError("microbatch_sizes must not be empty")
        scenario = Scenario(
            name=str(data["name"]),
            model_ref=base / data["model_ref"],
            pool_ref=base / data["pool_ref"],
            microbatch_sizes=sizes,
            comment=str(data.get("comment", "")),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed scenario: {exc!r}") from None
    for ref in (scenario.model_ref, scenario.pool_ref):
        if not ref.exists():
            raise ParseError(f"scenario {scenario.name}: missing file {ref}")
    return scenario


def write_json(path: PathLike, payload: Any) -> None:
    """Write atomically so a failure never leaves a partial file behind."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
