import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finnswe.errors import DomainError, DryingError, InstabilityError, ShapeError
from finnswe.scenario import gaussian_ic
from finnswe.swe import (
    Grid, SimConfig, apply_no_slip, apply_wall_eta, continuity_step, derive_dt, mass_drift,
    momentum_step, reference_rollout,
)


def small_cfg(n=5, **kw):
    return SimConfig(grid=Grid(n, n), **kw)


# ------------------------------------------------------------------ oracles

def loop_momentum(eta, u, v, g, dt, dx, dy):
    nx, ny = eta.shape
    un, vn = np.zeros_like(u), np.zeros_like(v)
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            un[i, j] = u[i, j] - dt * g * (eta[i + 1, j] - eta[i - 1, j]) / (2 * dx)
            vn[i, j] = v[i, j] - dt * g * (eta[i, j + 1] - eta[i, j - 1]) / (2 * dy)
    return un, vn


def loop_continuity(eta, u, v, H, dt, dx, dy):
    nx, ny = eta.shape
    d = H + eta
    out = eta.copy()
    for i in range(nx):
        for j in range(ny):
            east = 0.25 * (u[i, j] + u[i + 1, j]) * (d[i, j] + d[i + 1, j]) if i + 1 < nx else 0.0
            west = 0.25 * (u[i - 1, j] + u[i, j]) * (d[i - 1, j] + d[i, j]) if i > 0 else 0.0
            north = 0.25 * (v[i, j] + v[i, j + 1]) * (d[i, j] + d[i, j + 1]) if j + 1 < ny else 0.0
            south = 0.25 * (v[i, j - 1] + v[i, j]) * (d[i, j - 1] + d[i, j]) if j > 0 else 0.0
            out[i, j] -= dt * ((east - west) / dx + (north - south) / dy)
    return out


# ------------------------------------------------------------------ config

def test_default_grid_and_step():
    cfg = SimConfig()
    assert cfg.dx_m == 31250.0
    assert cfg.dt_s == pytest.approx(0.7 * 31250.0 / math.sqrt(9.81 * 100.0), rel=1e-15)
    assert cfg.steps == round(19.71 * 3600 / cfg.dt_s)


def test_explicit_steps_and_dt():
    cfg = SimConfig(dt_s=100.0, steps=7)
    assert cfg.dt_s == 100.0 and cfg.steps == 7


@pytest.mark.parametrize("bad", [dict(cfl=0.0), dict(cfl=1.5), dict(dt_s=-1.0), dict(steps=0)])
def test_bad_config(bad):
    with pytest.raises(DomainError):
        SimConfig(**bad)


def test_grid_too_small():
    with pytest.raises(DomainError):
        Grid(3, 8)


def test_cfl_guard():
    cfg = SimConfig()
    H = np.full(cfg.grid.shape, 100.0)
    assert cfg.dt_s <= cfg.cfl * min(cfg.dx_m, cfg.dy_m) / math.sqrt(cfg.g_m_s2 * H.max()) * (1 + 1e-15)
    assert cfg.courant_number(H) <= cfg.cfl + 1e-12
    assert derive_dt(cfg.grid, 0.5, 9.81, 100.0) < cfg.dt_s


# ------------------------------------------------------------------ boundaries

def test_no_slip_ones():
    u, v = apply_no_slip(np.ones((4, 4)), np.ones((4, 4)))
    for f in (u, v):
        assert f.sum() == 4.0
        np.testing.assert_array_equal(f[1:3, 1:3], np.ones((2, 2)))


def test_no_slip_zero_fixed_point():
    z = np.zeros((4, 4))
    u, v = apply_no_slip(z, z)
    np.testing.assert_array_equal(u, z)


def test_no_slip_random_bit_exact():
    rng = np.random.default_rng(0)
    u0, v0 = rng.standard_normal((5, 5)), rng.standard_normal((5, 5))
    u, v = apply_no_slip(u0, v0)
    for f, f0 in ((u, u0), (v, v0)):
        border = np.ones((5, 5), bool)
        border[1:-1, 1:-1] = False
        assert np.all(f[border] == 0.0)
        assert f[1:-1, 1:-1].tobytes() == f0[1:-1, 1:-1].tobytes()


def test_wall_closure_uniform_flux():
    fx, fy = apply_wall_eta(np.full((6, 5), 2.0), np.full((5, 6), 3.0), (5, 5))
    assert np.all(fx[[0, -1], :] == 0) and np.all(fy[:, [0, -1]] == 0)
    assert np.all(fx[1:-1] == 2.0) and np.all(fy[:, 1:-1] == 3.0)
    zx, zy = apply_wall_eta(np.zeros((6, 5)), np.zeros((5, 6)), (5, 5))
    assert not zx.any() and not zy.any()


def test_wall_closure_shape_check():
    with pytest.raises(ShapeError):
        apply_wall_eta(np.zeros((5, 5)), np.zeros((5, 6)), (5, 5))


# ------------------------------------------------------------------ steps

def test_momentum_constant_eta():
    cfg = small_cfg()
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal((5, 5)), rng.standard_normal((5, 5))
    un, vn = momentum_step(np.full((5, 5), 0.3), u, v, cfg)
    np.testing.assert_array_equal(un[1:-1, 1:-1], u[1:-1, 1:-1])
    np.testing.assert_array_equal(vn[1:-1, 1:-1], v[1:-1, 1:-1])
    assert un[0].sum() == 0 and vn[:, -1].sum() == 0


def test_momentum_linear_eta():
    cfg = small_cfg()
    s = 2e-6
    X, _ = cfg.grid.cell_centers()
    un, vn = momentum_step(s * X, np.zeros((5, 5)), np.zeros((5, 5)), cfg)
    np.testing.assert_allclose(un[1:-1, 1:-1], -cfg.g_m_s2 * s * cfg.dt_s, rtol=1e-12)
    assert np.all(vn == 0)


def test_momentum_matches_loop_oracle():
    cfg = small_cfg()
    eta = np.arange(25.0).reshape(5, 5) ** 1.5 / 100.0
    eta[2, 3] = -0.7
    rng = np.random.default_rng(2)
    u, v = rng.standard_normal((5, 5)), rng.standard_normal((5, 5))
    un, vn = momentum_step(eta, u, v, cfg)
    ou, ov = loop_momentum(eta, u, v, cfg.g_m_s2, cfg.dt_s, cfg.dx_m, cfg.dy_m)
    np.testing.assert_allclose(un, ou, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(vn, ov, rtol=1e-13, atol=1e-15)


def test_continuity_zero_velocity():
    cfg = small_cfg()
    eta = np.random.default_rng(3).standard_normal((5, 5))
    z = np.zeros((5, 5))
    np.testing.assert_array_equal(continuity_step(eta, z, z, np.full((5, 5), 100.0), cfg), eta)


def test_continuity_single_velocity():
    cfg = small_cfg()
    eta = np.zeros((5, 5))
    u = np.zeros((5, 5))
    u[2, 2] = 0.5
    out = continuity_step(eta, u, np.zeros((5, 5)), np.full((5, 5), 100.0), cfg)
    assert out[1, 2] < 0 and out[3, 2] > 0
    assert out[1, 2] == -out[3, 2]
    assert abs(out.sum()) < 1e-15 * np.abs(out).sum()


def test_continuity_uniform_flow_changes_only_at_walls():
    cfg = small_cfg()
    eta = np.zeros((5, 5))
    u = np.full((5, 5), 0.2)
    H = np.full((5, 5), 80.0)
    out = continuity_step(eta, u, np.zeros((5, 5)), H, cfg)
    np.testing.assert_allclose(out[1:-1, :], 0.0, atol=1e-15)
    assert np.all(out[0] < 0) and np.all(out[-1] > 0)
    np.testing.assert_allclose(out, loop_continuity(eta, u, np.zeros((5, 5)), H, cfg.dt_s, cfg.dx_m, cfg.dy_m), atol=1e-15)


def test_continuity_matches_loop_oracle():
    cfg = small_cfg()
    rng = np.random.default_rng(4)
    eta, u, v = rng.uniform(-1, 1, (3, 5, 5))
    H = rng.uniform(50, 100, (5, 5))
    np.testing.assert_allclose(
        continuity_step(eta, u, v, H, cfg),
        loop_continuity(eta, u, v, H, cfg.dt_s, cfg.dx_m, cfg.dy_m),
        rtol=1e-12, atol=1e-14,
    )


def test_continuity_drying():
    cfg = small_cfg()
    eta = np.zeros((5, 5))
    eta[1, 1] = -200.0
    with pytest.raises(DryingError):
        continuity_step(eta, np.zeros((5, 5)), np.zeros((5, 5)), np.full((5, 5), 100.0), cfg)


# ------------------------------------------------------------------ rollouts

def test_rest_is_fixed_point():
    cfg = SimConfig(grid=Grid(8, 8), steps=30)
    eta, u, v = reference_rollout(np.zeros((8, 8)), np.full((8, 8), 70.0), cfg)
    assert not eta.any() and not u.any() and not v.any()


def test_rollout_shapes_and_mass():
    cfg = SimConfig(grid=Grid(16, 16), steps=50)
    eta0 = gaussian_ic(cfg.grid, 3e5, 6e5)
    H = np.linspace(60, 100, 256).reshape(16, 16)
    eta, u, v = reference_rollout(eta0, H, cfg)
    assert eta.shape == u.shape == v.shape == (51, 16, 16)
    assert mass_drift(eta) < 1e-9
    assert np.all(u[:, 0, :] == 0) and np.all(v[:, :, -1] == 0)


def test_symmetric_bump_stays_symmetric():
    cfg = SimConfig(steps=60)
    eta0 = gaussian_ic(cfg.grid, 5e5, 5e5)
    eta, _, _ = reference_rollout(eta0, np.full(cfg.grid.shape, 100.0), cfg)
    for f in eta[::10]:
        scale = np.abs(f).max()
        for g in (f.T, f[::-1, :], f[:, ::-1]):
            assert np.abs(f - g).max() <= 1e-12 * scale


def test_blowup_guard():
    # far above the CFL limit the scheme diverges
    cfg = SimConfig(grid=Grid(8, 8), dt_s=40000.0, steps=200)
    eta0 = gaussian_ic(cfg.grid, 5e5, 5e5, 2e5)
    with pytest.raises((InstabilityError, DryingError)):
        reference_rollout(eta0, np.full((8, 8), 100.0), cfg)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        reference_rollout(np.zeros((4, 4)), np.zeros((5, 5)), small_cfg())


@settings(max_examples=15, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    n=st.integers(4, 10),
    steps=st.integers(1, 40),
)
def test_mass_conservation_property(seed, n, steps):
    rng = np.random.default_rng(seed)
    cfg = SimConfig(grid=Grid(n, n), steps=steps)
    eta0 = rng.uniform(-1, 1, (n, n))
    H = rng.uniform(50, 110, (n, n))
    eta, _, _ = reference_rollout(eta0, H, cfg)
    assert mass_drift(eta) < 1e-9
