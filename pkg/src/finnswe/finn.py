"""Finite-volume neural network surrogate for the shallow-water system.

Two sub-models share one closed-loop Euler rollout:

* the velocity model maps every pair of adjacent surface values to an
  interface quantity ``q``; differencing the two interfaces that flank a cell
  gives du/dt (or dv/dt) there,
* the surface model maps every adjacent pair to an interface surface height
  ``eta_bar``; the interface mass flux is ``mean(u) * (mean(H) + eta_bar)``
  and its divergence gives d(eta)/dt.

Border velocities are zeroed (no-slip) and the outermost interface fluxes are
closed (wall), outside the learned part, so mass is conserved for any weights.
Each stencil network is a 2 -> hidden -> 1 MLP with a tanh hidden layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var
from .errors import DryingError, InstabilityError, NonFiniteError, ShapeError
from .rng import SplitMix64
from .swe import BLOWUP_LIMIT_M, SimConfig

NETS = ("velo_x", "velo_y", "eta_x", "eta_y")
PARTS = ("w1", "b1", "w2", "b2")
DEFAULT_HIDDEN = 13


def part_shapes(hidden: int) -> dict[str, tuple[int, int]]:
    return {"w1": (2, hidden), "b1": (1, hidden), "w2": (hidden, 1), "b2": (1, 1)}


def param_names() -> list[str]:
    return [f"{net}.{part}" for net in NETS for part in PARTS]


def count_params(hidden: int) -> int:
    return len(NETS) * (2 * hidden + hidden + hidden + 1)


@dataclass
class FinnParams:
    """Weights of the four stencil MLPs, keyed ``"<net>.<part>"``."""

    hidden_width: int
    arrays: dict[str, np.ndarray]

    def __post_init__(self):
        shapes = part_shapes(self.hidden_width)
        for name in param_names():
            if name not in self.arrays:
                raise ShapeError(f"missing parameter {name}")
            want = shapes[name.split(".")[1]]
            arr = np.asarray(self.arrays[name], dtype=np.float64)
            if arr.shape != want:
                raise ShapeError(f"{name}: expected shape {want}, got {arr.shape}")
            self.arrays[name] = arr

    @property
    def count(self) -> int:
        return count_params(self.hidden_width)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[n].ravel() for n in param_names()])

    @classmethod
    def from_flat(cls, hidden: int, vec: np.ndarray) -> "FinnParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != count_params(hidden):
            raise ShapeError(f"expected {count_params(hidden)} values, got {vec.size}")
        shapes = part_shapes(hidden)
        arrays, pos = {}, 0
        for name in param_names():
            shape = shapes[name.split(".")[1]]
            n = shape[0] * shape[1]
            arrays[name] = vec[pos:pos + n].reshape(shape).copy()
            pos += n
        return cls(hidden, arrays)

    def copy(self) -> "FinnParams":
        return FinnParams(self.hidden_width, {k: v.copy() for k, v in self.arrays.items()})

    def on_tape(self, tape: Tape) -> dict[str, Var]:
        return {name: tape.var(self.arrays[name]) for name in param_names()}

    @classmethod
    def init(cls, seed: int, hidden: int = DEFAULT_HIDDEN) -> "FinnParams":
        """Uniform in +-1/sqrt(fan_in), drawn from a seeded stream."""
        rng = SplitMix64(seed, "finn-init")
        shapes = part_shapes(hidden)
        fan_in = {"w1": 2, "b1": 2, "w2": hidden, "b2": hidden}
        arrays = {}
        for name in param_names():
            part = name.split(".")[1]
            shape = shapes[part]
            bound = 1.0 / math.sqrt(fan_in[part])
            vals = rng.uniform_array(shape[0] * shape[1], -bound, bound)
            arrays[name] = np.array(vals).reshape(shape)
        return cls(hidden, arrays)

    @classmethod
    def oracle(cls, g: float, hidden: int = DEFAULT_HIDDEN, units: int = 3, scale: float = 1e-3) -> "FinnParams":
        """Closed-form weights that reproduce the reference discretisation.

        Velocity nets compute ``q(a, b) = -g (a + b) / 2`` and surface nets
        ``eta_bar(a, b) = (a + b) / 2``. A linear map is built from ``units``
        tanh units with pre-activations ``k * scale * (a + b)``; output weights
        cancel the odd Taylor terms up to order ``2 * units - 1``.
        """
        if units > hidden:
            raise ValueError("need at least `units` hidden neurons")
        k = np.arange(1, units + 1, dtype=np.float64)
        A = np.array([k ** (2 * m + 1) for m in range(units)])
        rhs = np.zeros(units)
        rhs[0] = 1.0 / scale
        coef = np.linalg.solve(A, rhs)

        arrays = {}
        for net in NETS:
            gain = -0.5 * g if net.startswith("velo") else 0.5
            w1 = np.zeros((2, hidden))
            w1[0, :units] = k * scale
            w1[1, :units] = k * scale
            w2 = np.zeros((hidden, 1))
            w2[:units, 0] = gain * coef
            arrays[f"{net}.w1"] = w1
            arrays[f"{net}.b1"] = np.zeros((1, hidden))
            arrays[f"{net}.w2"] = w2
            arrays[f"{net}.b2"] = np.zeros((1, 1))
        return cls(hidden, arrays)


def stencil_mlp(pairs: Var, pv: dict[str, Var], net: str) -> Var:
    """Apply one stencil MLP to an (n, 2) matrix of adjacent pairs -> (n, 1)."""
    h = ad.tanh(ad.add_bias(pairs @ pv[f"{net}.w1"], pv[f"{net}.b1"]))
    return ad.add_bias(h @ pv[f"{net}.w2"], pv[f"{net}.b2"])


def _interfaces_x(field: Var, pv, net: str) -> Var:
    nx, ny = field.shape
    return ad.reshape(stencil_mlp(ad.stack_adjacent_x(field), pv, net), (nx - 1, ny))


def _interfaces_y(field: Var, pv, net: str) -> Var:
    nx, ny = field.shape
    return ad.reshape(stencil_mlp(ad.stack_adjacent_y(field), pv, net), (nx, ny - 1))


def _check_output(v: Var, what: str) -> None:
    if not np.all(np.isfinite(v.value)):
        i, j = np.argwhere(~np.isfinite(v.value))[0]
        raise NonFiniteError(f"{what}: non-finite network output at ({i}, {j})")


def finn_velo(eta: Var, pv: dict[str, Var], cfg: SimConfig) -> tuple[Var, Var]:
    """Velocity tendencies (du/dt, dv/dt); zero on the border ring."""
    qx = _interfaces_x(eta, pv, "velo_x")
    qy = _interfaces_y(eta, pv, "velo_y")
    _check_output(qx, "velo_x")
    _check_output(qy, "velo_y")
    # cell i (interior) sits between interfaces i-1/2 and i+1/2
    dudt = (qx[1:, 1:-1] - qx[:-1, 1:-1]) * (1.0 / cfg.dx_m)
    dvdt = (qy[1:-1, 1:] - qy[1:-1, :-1]) * (1.0 / cfg.dy_m)
    ring = ((1, 1), (1, 1))
    return ad.pad_zero(dudt, ring), ad.pad_zero(dvdt, ring)


def finn_eta(eta: Var, u: Var, v: Var, H: Var, pv: dict[str, Var], cfg: SimConfig) -> Var:
    """Surface tendency d(eta)/dt from learned interface heights."""
    ebx = _interfaces_x(eta, pv, "eta_x")
    eby = _interfaces_y(eta, pv, "eta_y")
    _check_output(ebx, "eta_x")
    _check_output(eby, "eta_y")
    depth_x = (H[:-1, :] + H[1:, :]) * 0.5 + ebx
    depth_y = (H[:, :-1] + H[:, 1:]) * 0.5 + eby
    for d, axis in ((depth_x, "x"), (depth_y, "y")):
        if np.any(d.value <= 0.0):
            i, j = np.argwhere(d.value <= 0.0)[0]
            raise DryingError(f"interface water column <= 0 at {axis}-interface ({i}, {j})")
    fx = ((u[:-1, :] + u[1:, :]) * 0.5) * depth_x
    fy = ((v[:, :-1] + v[:, 1:]) * 0.5) * depth_y
    # wall: no flux through the outer interfaces
    fx = ad.pad_zero(fx, ((1, 1), (0, 0)))
    fy = ad.pad_zero(fy, ((0, 0), (1, 1)))
    div = (fx[1:, :] - fx[:-1, :]) * (1.0 / cfg.dx_m) + (fy[:, 1:] - fy[:, :-1]) * (1.0 / cfg.dy_m)
    return -div


def no_slip(f: Var) -> Var:
    return ad.pad_zero(f[1:-1, 1:-1], ((1, 1), (1, 1)))


def finn_rollout(
    tape: Tape,
    eta0,
    H,
    pv: dict[str, Var],
    cfg: SimConfig,
    steps: int | None = None,
    keep_velocities: bool = False,
):
    """Closed-loop Euler rollout; returns the list of eta frames 0..T.

    With ``keep_velocities`` the (u, v) frames are returned as well.
    """
    T = cfg.steps if steps is None else steps
    shape = cfg.grid.shape
    eta = eta0 if isinstance(eta0, Var) else tape.var(eta0, kind="const")
    H = H if isinstance(H, Var) else tape.var(H, kind="const")
    if eta.shape != shape or H.shape != shape:
        raise ShapeError(f"eta0 {eta.shape} / H {H.shape} do not match grid {shape}")
    u = tape.var(np.zeros(shape), kind="const")
    v = tape.var(np.zeros(shape), kind="const")
    etas, us, vs = [eta], [u], [v]
    dt = cfg.dt_s
    for t in range(T):
        dudt, dvdt = finn_velo(eta, pv, cfg)
        u = no_slip(u + dudt * dt)
        v = no_slip(v + dvdt * dt)
        eta = eta + finn_eta(eta, u, v, H, pv, cfg) * dt
        if not np.all(np.abs(eta.value) <= BLOWUP_LIMIT_M):
            raise InstabilityError(f"|eta| exceeded {BLOWUP_LIMIT_M:g} m at step {t + 1}")
        etas.append(eta)
        if keep_velocities:
            us.append(u)
            vs.append(v)
    if keep_velocities:
        return etas, us, vs
    return etas


def sequence_loss(pred: list[Var], data: np.ndarray) -> Var:
    """Mean squared error over frames 1..T (frame 0 is the given state)."""
    data = np.asarray(data)
    if len(pred) != len(data):
        raise ShapeError(f"{len(pred)} predicted frames vs {len(data)} data frames")
    if len(pred) < 2:
        raise ShapeError("need at least one frame after the initial condition")
    total = None
    for p, d in zip(pred[1:], data[1:]):
        if p.shape != d.shape:
            raise ShapeError(f"frame shape {p.shape} vs data {d.shape}")
        r = p - d
        s = ad.sum_(ad.square(r))
        total = s if total is None else total + s
    n = (len(pred) - 1) * data[0].size
    return total * (1.0 / n)


def rollout_values(params: FinnParams, eta0, H, cfg: SimConfig, steps: int | None = None) -> np.ndarray:
    """Predicted eta frames as a (T+1, nx, ny) array, without recording."""
    tape = Tape(record=False)
    frames = finn_rollout(tape, eta0, H, params.on_tape(tape), cfg, steps)
    return np.stack([f.value for f in frames])
