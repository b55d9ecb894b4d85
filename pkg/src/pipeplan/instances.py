"""Seeded random model profiles and device pools for property tests and benchmarks."""

from __future__ import annotations

import random
from typing import Optional, Sequence

from .core import Device, DevicePool, LayerSpec, ModelProfile

MB = 1_000_000


def random_model(rng: random.Random, num_layers: int, *, overhead: bool = True,
                 max_output_bytes: int = 20 * MB, max_memory: int = 500 * MB) -> ModelProfile:
    layers = []
    for i in range(1, num_layers + 1):
        layers.append(LayerSpec(
            index=i,
            base_time_per_sample=rng.uniform(0.01, 1.0),
            fixed_overhead=rng.uniform(0.0, 0.2) if overhead and rng.random() < 0.5 else 0.0,
            output_bytes_per_sample=rng.randint(0, max_output_bytes),
            memory_bytes=rng.randint(1, max_memory),
        ))
    return ModelProfile(tuple(layers), name=f"random-{num_layers}")


def _device_profile(rng: random.Random, max_memory: int):
    speed = rng.choice([0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, rng.uniform(0.1, 2.0)])
    memory = rng.randint(max_memory // 4, max_memory)
    return speed, memory


def random_pool(
    rng: random.Random,
    category_sizes: Sequence[int],
    *,
    max_memory: int = 2000 * MB,
    bandwidth_range: tuple[float, float] = (5e6, 1e9),
    latency: bool = False,
    id_prefix: str = "d",
) -> DevicePool:
    """Pool whose ``k``-th category holds ``category_sizes[k]`` identical devices.

    Bandwidth and latency depend only on the category pair, so the category
    invariants hold by construction.
    """
    N = len(category_sizes)
    profiles = [_device_profile(rng, max_memory) for _ in range(N)]
    bw = [[0.0] * N for _ in range(N)]
    lat = [[0.0] * N for _ in range(N)]
    for a in range(N):
        for b in range(a, N):
            bw[a][b] = bw[b][a] = rng.uniform(*bandwidth_range)
            if latency:
                lat[a][b] = lat[b][a] = rng.choice([0.0, 0.005, 0.02])
    devices, cat_of = [], []
    for k, n in enumerate(category_sizes):
        for _ in range(n):
            speed, memory = profiles[k]
            devices.append(Device(f"{id_prefix}{len(devices)}", f"c{k}", speed, memory))
            cat_of.append(k)
    order = list(range(len(devices)))
    rng.shuffle(order)
    devices = [devices[p] for p in order]
    cat_of = [cat_of[p] for p in order]
    D = len(devices)
    bw_m = [[bw[cat_of[u]][cat_of[v]] if u != v else 0.0 for v in range(D)] for u in range(D)]
    lat_m = [[lat[cat_of[u]][cat_of[v]] if u != v else 0.0 for v in range(D)] for u in range(D)]
    return DevicePool(tuple(devices), bw_m, lat_m)


def random_heterogeneous_pool(rng: random.Random, num_devices: int, *, max_memory: int = 2000 * MB,
                              bandwidth_range: tuple[float, float] = (5e6, 1e9),
                              latency: bool = False) -> DevicePool:
    """Every device in its own category, with an arbitrary (asymmetric) bandwidth matrix."""
    devices = []
    for k in range(num_devices):
        speed, memory = _device_profile(rng, max_memory)
        devices.append(Device(f"d{k}", f"d{k}", speed, memory))
    bw = [[rng.uniform(*bandwidth_range) if u != v else 0.0 for v in range(num_devices)]
          for u in range(num_devices)]
    lat = [[(rng.choice([0.0, 0.01, 0.02]) if latency and u != v else 0.0) for v in range(num_devices)]
           for u in range(num_devices)]
    return DevicePool(tuple(devices), bw, lat)


def add_device(pool: DevicePool, device: Device, bandwidth_to: Sequence[float],
               bandwidth_from: Sequence[float], latency: float = 0.0) -> DevicePool:
    """Copy of ``pool`` with one more device appended; existing links unchanged."""
    D = pool.size
    bw = [list(row) + [bandwidth_to[u]] for u, row in enumerate(pool.bandwidth_bps)]
    bw.append(list(bandwidth_from) + [0.0])
    lat = [list(row) + [latency] for row in pool.latency_s]
    lat.append([latency] * D + [0.0])
    return DevicePool(pool.devices + (device,), bw, lat)


def scale_pool(pool: DevicePool, factor: float) -> DevicePool:
    """Multiply every device speed and link bandwidth by ``factor``."""
    devices = tuple(Device(d.id, d.category, d.speed * factor, d.memory_bytes) for d in pool.devices)
    bw = [[x * factor for x in row] for row in pool.bandwidth_bps]
    return DevicePool(devices, bw, pool.latency_s)


def with_uniform_bandwidth(pool: DevicePool, bandwidth_bps: float,
                           latency_s: Optional[float] = None) -> DevicePool:
    D = pool.size
    bw = [[bandwidth_bps] * D for _ in range(D)]
    lat = pool.latency_s if latency_s is None else [[latency_s] * D for _ in range(D)]
    return DevicePool(pool.devices, bw, lat)
