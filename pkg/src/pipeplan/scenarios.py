"""Synthetic heterogeneous-cluster fixtures modelled on six edge-cluster cases.

Device classes follow the two testbed boards: a fast 8 GB board (speed 1.0 at
full CPU) and a 2 GB board measured at about 0.77x of it. CPU throttling scales
speed linearly. Per-layer compute profiles are synthetic and uniform because no
per-layer timings were published; link bandwidth between two devices is the
smaller of their two caps.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .core import Device, DevicePool, ModelProfile
from .io import model_to_dict, pool_to_dict, write_json

GB = 1_000_000_000
MBPS = 1_000_000
GBPS = 1_000_000_000

BOARD_SPEED = 1.0
SMALL_BOARD_SPEED = 0.77
LINK_LATENCY_S = 0.02

PROVENANCE = (
    "synthetic fixture: uniform per-layer compute times (no published per-layer timings); "
    "device counts, CPU throttling, memory and bandwidth caps mirror a six-case heterogeneous edge testbed; "
    "pairwise bandwidth = min(cap_u, cap_v); 20 ms link latency"
)


@dataclass(frozen=True)
class DeviceGroup:
    count: int
    board: str  # "rcc" or "minnow"
    cpu: float  # fraction of full CPU
    memory_bytes: int
    bandwidth_cap_bps: float

    @property
    def speed(self) -> float:
        base = BOARD_SPEED if self.board == "rcc" else SMALL_BOARD_SPEED
        return base * self.cpu

    @property
    def label(self) -> str:
        return f"{self.board}-{int(round(self.cpu * 100))}cpu-{self.memory_bytes // GB}gb-{int(self.bandwidth_cap_bps // MBPS)}mbps"


def _g(count, board, cpu, mem_gb, bw):
    return DeviceGroup(count, board, cpu, mem_gb * GB, bw)


CASES: dict[str, list[DeviceGroup]] = {
    "case-1": [_g(8, "rcc", 1.0, 8, 1 * GBPS), _g(8, "minnow", 1.0, 2, 1 * GBPS)],
    "case-2": [
        _g(4, "rcc", 1.0, 8, 1 * GBPS),
        _g(4, "rcc", 0.75, 4, 1 * GBPS),
        _g(4, "rcc", 0.25, 4, 1 * GBPS),
        _g(4, "minnow", 1.0, 2, 1 * GBPS),
    ],
    "case-3": [_g(8, "rcc", 1.0, 8, 40 * MBPS), _g(8, "minnow", 1.0, 2, 10 * MBPS)],
    "case-4": [
        _g(4, "rcc", 1.0, 8, 30 * MBPS),
        _g(4, "rcc", 1.0, 8, 20 * MBPS),
        _g(4, "minnow", 1.0, 2, 10 * MBPS),
        _g(4, "minnow", 1.0, 2, 5 * MBPS),
    ],
    "case-5": [
        _g(3, "rcc", 1.0, 8, 50 * MBPS),
        _g(8, "rcc", 0.10, 4, 20 * MBPS),
        _g(5, "minnow", 1.0, 2, 30 * MBPS),
    ],
    "case-6": [
        _g(2, "rcc", 1.0, 8, 100 * MBPS),
        _g(3, "rcc", 0.75, 4, 60 * MBPS),
        _g(4, "rcc", 0.50, 4, 40 * MBPS),
        _g(3, "rcc", 0.25, 4, 20 * MBPS),
        _g(2, "rcc", 0.10, 4, 10 * MBPS),
        _g(2, "minnow", 1.0, 2, 80 * MBPS),
    ],
}


def vit_like_model(num_layers: int = 24, name: str = "vit-large-like") -> ModelProfile:
    """Uniform transformer-block profile: 197 tokens x 1024 fp32 activations per sample."""
    return ModelProfile.uniform(
        num_layers,
        base_time_per_sample=0.18,
        output_bytes_per_sample=197 * 1024 * 4,
        memory_bytes=150_000_000,
        fixed_overhead=0.05,
        name=name,
    )


def case_pool(groups: list[DeviceGroup], latency_s: float = LINK_LATENCY_S) -> DevicePool:
    devices, caps = [], []
    for k, g in enumerate(groups):
        for _ in range(g.count):
            devices.append(Device(f"g{k}-{g.board}-{len(devices):02d}", f"g{k}-{g.label}", g.speed, g.memory_bytes))
            caps.append(g.bandwidth_cap_bps)
    D = len(devices)
    bw = [[min(caps[u], caps[v]) if u != v else 0.0 for v in range(D)] for u in range(D)]
    lat = [[latency_s if u != v else 0.0 for v in range(D)] for u in range(D)]
    return DevicePool(tuple(devices), bw, lat)


def write_fixtures(out_dir: Path, microbatch_sizes=(8,)) -> list[Path]:
    """Write the shared model profile plus one pool and scenario file per case."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = vit_like_model()
    model_payload = model_to_dict(model)
    model_payload["comment"] = PROVENANCE
    write_json(out_dir / "vit_large_like.json", model_payload)
    written = []
    for name, groups in CASES.items():
        pool_payload = pool_to_dict(case_pool(groups))
        pool_payload["comment"] = PROVENANCE
        write_json(out_dir / f"{name}.pool.json", pool_payload)
        scenario = {
            "name": name,
            "model_ref": "vit_large_like.json",
            "pool_ref": f"{name}.pool.json",
            "microbatch_sizes": list(microbatch_sizes),
            "comment": PROVENANCE,
        }
        path = out_dir / f"{name}.json"
        write_json(path, scenario)
        written.append(path)
    return written
