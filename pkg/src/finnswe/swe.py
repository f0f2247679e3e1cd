"""Grid geometry, boundary handling and the reference shallow-water integrator.

All fields are cell-centred ``(nx, ny)`` float64 arrays; axis 0 is x, axis 1
is y. The solver integrates

    d(eta)/dt + d/dx[u (H + eta)] + d/dy[v (H + eta)] = 0
    du/dt = -g d(eta)/dx
    dv/dt = -g d(eta)/dy

with a forward-backward Euler step: velocities are advanced first from
``eta(t)``, then the surface is advanced with the new velocities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, DryingError, InstabilityError, ShapeError

BLOWUP_LIMIT_M = 1.0e6
DEFAULT_DURATION_S = 19.71 * 3600.0


@dataclass(frozen=True)
class Grid:
    nx: int = 32
    ny: int = 32
    side_length_m: float = 1.0e6

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise DomainError(f"grid must be at least 4x4, got {self.nx}x{self.ny}")
        if not self.side_length_m > 0:
            raise DomainError("side_length_m must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def dx_m(self) -> float:
        return self.side_length_m / self.nx

    @property
    def dy_m(self) -> float:
        return self.side_length_m / self.ny

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of cell-centre coordinates (x, y) in metres, ``indexing='ij'``."""
        x = (np.arange(self.nx) + 0.5) * self.dx_m
        y = (np.arange(self.ny) + 0.5) * self.dy_m
        return np.meshgrid(x, y, indexing="ij")


def derive_dt(grid: Grid, cfl: float, g: float, depth_m: float) -> float:
    return cfl * min(grid.dx_m, grid.dy_m) / math.sqrt(g * depth_m)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``dt_s`` and ``steps`` are derived when left as ``None``: the step follows
    the Courant bound for a water column of ``depth_ref_m`` and the step count
    covers ``duration_s``.
    """

    grid: Grid = field(default_factory=Grid)
    g_m_s2: float = 9.81
    cfl: float = 0.7
    depth_ref_m: float = 100.0
    duration_s: float = DEFAULT_DURATION_S
    dt_s: float | None = None
    steps: int | None = None

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise DomainError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.dt_s is None:
            object.__setattr__(self, "dt_s", derive_dt(self.grid, self.cfl, self.g_m_s2, self.depth_ref_m))
        if self.dt_s <= 0:
            raise DomainError("dt_s must be positive")
        if self.steps is None:
            object.__setattr__(self, "steps", max(1, round(self.duration_s / self.dt_s)))
        if self.steps < 1:
            raise DomainError("steps must be >= 1")

    @property
    def dx_m(self) -> float:
        return self.grid.dx_m

    @property
    def dy_m(self) -> float:
        return self.grid.dy_m

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def courant_number(self, H: np.ndarray) -> float:
        return self.dt_s * math.sqrt(self.g_m_s2 * float(np.max(H))) / min(self.dx_m, self.dy_m)


def _check_shape(grid_shape, *fields):
    for f in fields:
        if f.shape != grid_shape:
            raise ShapeError(f"field shape {f.shape} does not match grid {grid_shape}")


def apply_no_slip(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero both velocity components on the outermost ring of cells."""
    if u.shape != v.shape:
        raise ShapeError(f"u shape {u.shape} != v shape {v.shape}")
    out = []
    for f in (u, v):
        f = f.copy()
        f[0, :] = 0.0
        f[-1, :] = 0.0
        f[:, 0] = 0.0
        f[:, -1] = 0.0
        out.append(f)
    return out[0], out[1]


def apply_wall_eta(flux_x: np.ndarray, flux_y: np.ndarray, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Close the domain: zero the outermost interface fluxes.

    ``flux_x`` is (nx+1, ny), ``flux_y`` is (nx, ny+1).
    """
    nx, ny = shape
    if flux_x.shape != (nx + 1, ny) or flux_y.shape != (nx, ny + 1):
        raise ShapeError(
            f"interface arrays must be {(nx + 1, ny)} and {(nx, ny + 1)}, "
            f"got {flux_x.shape} and {flux_y.shape}"
        )
    fx = flux_x.copy()
    fy = flux_y.copy()
    fx[0, :] = 0.0
    fx[-1, :] = 0.0
    fy[:, 0] = 0.0
    fy[:, -1] = 0.0
    return fx, fy


def momentum_step(eta, u, v, cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    _check_shape(cfg.grid.shape, eta, u, v)
    g, dt = cfg.g_m_s2, cfg.dt_s
    detadx = np.zeros_like(eta)
    detady = np.zeros_like(eta)
    detadx[1:-1, :] = (eta[2:, :] - eta[:-2, :]) / (2.0 * cfg.dx_m)
    detady[:, 1:-1] = (eta[:, 2:] - eta[:, :-2]) / (2.0 * cfg.dy_m)
    return apply_no_slip(u + dt * (-g * detadx), v + dt * (-g * detady))


def interface_fluxes(eta, u, v, H) -> tuple[np.ndarray, np.ndarray]:
    """Mass fluxes u(H+eta), v(H+eta) on interior interfaces.

    Interface values are arithmetic means of the two adjacent cells.
    Returned arrays are (nx+1, ny) and (nx, ny+1) with zero outer interfaces.
    """
    nx, ny = eta.shape
    depth = H + eta
    if np.any(depth <= 0.0):
        i, j = np.argwhere(depth <= 0.0)[0]
        raise DryingError(f"water column H + eta <= 0 at cell ({i}, {j})")
    fx = np.zeros((nx + 1, ny))
    fy = np.zeros((nx, ny + 1))
    fx[1:-1, :] = (0.5 * (u[:-1, :] + u[1:, :])) * (0.5 * (depth[:-1, :] + depth[1:, :]))
    fy[:, 1:-1] = (0.5 * (v[:, :-1] + v[:, 1:])) * (0.5 * (depth[:, :-1] + depth[:, 1:]))
    return apply_wall_eta(fx, fy, (nx, ny))


def continuity_step(eta, u, v, H, cfg: SimConfig) -> np.ndarray:
    _check_shape(cfg.grid.shape, eta, u, v, H)
    fx, fy = interface_fluxes(eta, u, v, H)
    div = (fx[1:, :] - fx[:-1, :]) / cfg.dx_m + (fy[:, 1:] - fy[:, :-1]) / cfg.dy_m
    return eta - cfg.dt_s * div


def reference_rollout(eta0, H, cfg: SimConfig, steps: int | None = None):
    """Integrate from rest; returns (eta, u, v) stacks of shape (T+1, nx, ny)."""
    T = cfg.steps if steps is None else steps
    _check_shape(cfg.grid.shape, eta0, H)
    nx, ny = cfg.grid.shape
    etas = np.empty((T + 1, nx, ny))
    us = np.zeros((T + 1, nx, ny))
    vs = np.zeros((T + 1, nx, ny))
    eta = np.array(eta0, dtype=np.float64)
    u = np.zeros((nx, ny))
    v = np.zeros((nx, ny))
    etas[0] = eta
    for t in range(T):
        u, v = momentum_step(eta, u, v, cfg)
        eta = continuity_step(eta, u, v, H, cfg)
        if not np.all(np.abs(eta) <= BLOWUP_LIMIT_M):
            raise InstabilityError(f"|eta| exceeded {BLOWUP_LIMIT_M:g} m at step {t + 1}")
        etas[t + 1] = eta
        us[t + 1] = u
        vs[t + 1] = v
    return etas, us, vs


def mass_drift(etas: np.ndarray) -> float:
    """Largest |sum(eta_t) - sum(eta_0)| relative to sum(|eta_0|)."""
    sums = etas.reshape(len(etas), -1).sum(axis=1)
    scale = np.abs(etas[0]).sum()
    drift = np.max(np.abs(sums - sums[0]))
    return float(drift / scale) if scale > 0 else float(drift)
