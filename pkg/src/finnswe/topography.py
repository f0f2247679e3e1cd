"""Analytic bathymetry generators.

Two families are provided. ``arctan_slope`` is a smooth ramp whose depth
grows along a rotated axis; it is used for training, one random rotation and
depth scale per sequence. ``bumpy`` is a seeded mixture of Gaussian bumps on
a gentle tilt; it is used as the hidden topography for inference.

Depths are positive metres. Plots usually show ``-H``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .rng import SplitMix64
from .swe import Grid

BASE_DEPTH_M = 100.0
ARCTAN_AMPLITUDE_M = 28.5
ARCTAN_STEEPNESS = 4.0

# unscaled depth window the bumpy field is mapped onto; beta = 0.68 gives [63, 74] m
BUMPY_LOW_M = 63.0 / 0.68
BUMPY_HIGH_M = 74.0 / 0.68

KINDS = ("arctan_slope", "bumpy")


@dataclass(frozen=True)
class TopoSpec:
    kind: str = "arctan_slope"
    rotation_rad: float = 0.0
    depth_scale: float = 1.0
    seed: int = 1
    amplitude_m: float = ARCTAN_AMPLITUDE_M
    steepness: float = ARCTAN_STEEPNESS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown topography kind {self.kind!r}")
        if not 0.5 <= self.depth_scale <= 1.0:
            raise DomainError(f"depth_scale must lie in [0.5, 1.0], got {self.depth_scale}")
        if not 0.0 <= self.rotation_rad < 2.0 * math.pi:
            raise DomainError(f"rotation_rad must lie in [0, 2pi), got {self.rotation_rad}")


def _rotated_offsets(grid: Grid, phi: float) -> tuple[np.ndarray, np.ndarray]:
    X, Y = grid.cell_centers()
    cx = 0.5 * grid.side_length_m
    dx, dy = X - cx, Y - cx
    c, s = math.cos(phi), math.sin(phi)
    return c * dx + s * dy, -s * dx + c * dy


def arctan_profile(grid: Grid, spec: TopoSpec) -> np.ndarray:
    """Unscaled (beta = 1) arctan ramp."""
    xr, _ = _rotated_offsets(grid, spec.rotation_rad)
    L = grid.side_length_m
    return BASE_DEPTH_M + spec.amplitude_m * (2.0 / math.pi) * np.arctan(spec.steepness * xr / L)


def gen_arctan(grid: Grid, spec: TopoSpec) -> np.ndarray:
    if spec.kind != "arctan_slope":
        raise DomainError(f"gen_arctan needs kind 'arctan_slope', got {spec.kind!r}")
    return spec.depth_scale * arctan_profile(grid, spec)


def bumpy_profile(grid: Grid, seed: int) -> np.ndarray:
    """Unscaled bumpy field, affinely mapped onto [BUMPY_LOW_M, BUMPY_HIGH_M]."""
    rng = SplitMix64(seed, "bumpy")
    X, Y = grid.cell_centers()
    L = grid.side_length_m
    xs, ys = X / L, Y / L

    tilt_dir = rng.uniform(0.0, 2.0 * math.pi)
    tilt_m = rng.uniform(1.0, 3.0)
    raw = BASE_DEPTH_M + tilt_m * (math.cos(tilt_dir) * (xs - 0.5) + math.sin(tilt_dir) * (ys - 0.5))

    n_bumps = rng.integers(4, 9)
    for k in range(n_bumps):
        cx = rng.uniform(0.15, 0.85)
        cy = rng.uniform(0.15, 0.85)
        width = rng.uniform(0.08, 0.2)
        amp = rng.uniform(3.0, 8.0) * (1.0 if k % 2 == 0 else -1.0)
        raw = raw + amp * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * width * width))

    lo, hi = raw.min(), raw.max()
    return BUMPY_LOW_M + (raw - lo) * ((BUMPY_HIGH_M - BUMPY_LOW_M) / (hi - lo))


def gen_bumpy(grid: Grid, spec: TopoSpec) -> np.ndarray:
    if spec.kind != "bumpy":
        raise DomainError(f"gen_bumpy needs kind 'bumpy', got {spec.kind!r}")
    return spec.depth_scale * bumpy_profile(grid, spec.seed)


def generate(grid: Grid, spec: TopoSpec) -> np.ndarray:
    if spec.kind == "arctan_slope":
        return gen_arctan(grid, spec)
    return gen_bumpy(grid, spec)


def topo_metadata(H: np.ndarray) -> dict[str, float]:
    if H.size == 0:
        raise DomainError("empty field")
    lo, hi = float(H.min()), float(H.max())
    return {"min": lo, "max": hi, "mean": float(H.mean()), "range": hi - lo}
