"""The variational step: constraint map, Newton-CG minimizer and step certificates."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polytherm import grid as g
from polytherm import nulllag
from polytherm.constitutive import DomainError, PaperEnergy, QuadraticEnergy
from polytherm.grid import GridSpec
from polytherm.presets import equilibrium, smooth_wave
from polytherm.selfcheck import dense_constraint, dense_quadratic_step
from polytherm.varstep import (
    Constraint,
    State,
    StepConfig,
    StepFailure,
    constraint_adjoint,
    constraint_apply,
    entropy_update,
    relative_energy_density,
    solve_step,
    total_energy,
)


def _wavy_F(grid, rng, scale=0.05):
    u = scale * rng.normal(size=(3,) + grid.n)
    return np.eye(3).reshape(3, 3, 1, 1, 1) + g.gradient(grid, u)


def test_state_validation(cube8):
    s = equilibrium(cube8)
    assert s.U.shape == (23,) + cube8.n
    with pytest.raises(DomainError):
        State(cube8, s.u, s.v, s.xi, -np.ones(cube8.n))
    bad = s.v.copy()
    bad[0, 0, 0, 0] = np.inf
    with pytest.raises(ValueError, match="non-finite"):
        State(cube8, s.u, bad, s.xi, s.eta)
    with pytest.raises(ValueError):
        State(cube8, s.u, s.v, s.xi[:18], s.eta)


def test_from_motion_is_consistent(cube8, rng):
    u = 0.01 * rng.normal(size=(3,) + cube8.n)
    s = State.from_motion(cube8, u, np.zeros_like(u), np.ones(cube8.n))
    assert s.gradient_defect() == 0.0
    assert np.array_equal(s.zeta, nulllag.cof(s.F))
    assert np.array_equal(s.w, nulllag.det(s.F))
    assert np.allclose(s.y, cube8.coords() + u)


@pytest.mark.parametrize("kw", [dict(h=0), dict(h=1e-3, newton_tol=0), dict(h=1e-3, backtrack_factor=1.0),
                                dict(h=1e-3, cg_max=0)])
def test_step_config_validation(kw):
    with pytest.raises(ValueError):
        StepConfig(**kw)


def test_entropy_update(paper, cube8):
    xi = nulllag.phi(np.broadcast_to(np.eye(3).reshape(3, 3, 1, 1, 1), (3, 3) + cube8.n))
    eta0 = np.ones(cube8.n)
    eta = entropy_update(paper, xi, eta0, 0.5, 0.1)
    assert np.allclose(eta, 1 + 0.1 * 0.5 / paper.theta(xi, eta0))
    with pytest.raises(DomainError, match="reduce h"):
        entropy_update(paper, xi, eta0, -100.0, 0.1)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_constraint_adjoint_identity(seed):
    grid = GridSpec((4, 5, 6), (1.0, 1.2, 0.9))
    rng = np.random.default_rng(seed)
    F0 = _wavy_F(grid, rng)
    v = rng.normal(size=(3,) + grid.n)
    m = rng.normal(size=(19,) + grid.n)
    A = Constraint(grid, F0)
    lhs = g.inner(grid, A.apply(v), m)
    rhs = g.inner(grid, v, A.adjoint(m))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
    assert np.array_equal(constraint_adjoint(grid, F0, m), A.adjoint(m))


def test_constraint_matches_dense_assembly(rng):
    grid = GridSpec((4, 4, 4))
    F0 = _wavy_F(grid, rng)
    v = rng.normal(size=(3,) + grid.n)
    dense = dense_constraint(grid, F0) @ v.ravel()
    assert np.allclose(Constraint(grid, F0).apply(v).ravel(), dense, atol=1e-12)


def test_constraint_F_block_is_gradient_update(grid6, rng):
    F0 = _wavy_F(grid6, rng)
    xi0 = nulllag.phi(F0)
    v = rng.normal(size=(3,) + grid6.n)
    xi = constraint_apply(grid6, F0, v, 0.1, xi0)
    assert np.allclose(xi[0:9].reshape(F0.shape), F0 + 0.1 * g.gradient(grid6, v), atol=1e-14)


def test_relative_energy_density_quadratic(quadratic, rng):
    xi, xir = rng.normal(size=(19, 10)), rng.normal(size=(19, 10))
    eta, etar = rng.uniform(0, 1, 10), rng.uniform(0, 1, 10)
    v, vr = rng.normal(size=(3, 10)), rng.normal(size=(3, 10))
    dens = relative_energy_density(quadratic, vr, xir, etar, v, xi, eta)
    exact = 0.5 * (np.sum((vr - v) ** 2, axis=0) + np.sum((xir - xi) ** 2, axis=0) + (etar - eta) ** 2)
    assert np.allclose(dens, exact, atol=1e-13)
    assert np.all(relative_energy_density(quadratic, v, xi, eta, v, xi, eta) == 0)


def test_quadratic_step_matches_dense_solve(rng):
    grid = GridSpec((4, 4, 4))
    U0 = smooth_wave(grid, amplitude=0.03, velocity=0.3)
    U0 = State(grid, U0.u, U0.v, U0.xi + 0.01 * rng.normal(size=U0.xi.shape), U0.eta)
    cfg = StepConfig(h=0.05, newton_tol=1e-14, cg_tol=1e-14, cg_max=2000)
    U, rep = solve_step(U0, 0.0, cfg, QuadraticEnergy())
    v = dense_quadratic_step(U0, 0.05)
    assert np.max(np.abs(U.v - v)) / np.max(np.abs(v)) < 1e-10


def test_step_satisfies_euler_lagrange(cube8, paper):
    U0 = smooth_wave(cube8, amplitude=0.02, velocity=0.2)
    U, rep = solve_step(U0, 0.0, StepConfig(h=2e-3), paper)
    assert rep.grad_norm_final <= rep.grad_tol
    # the reduced gradient is the adjoint-consistent EL residual times h
    assert rep.el_residual * 2e-3 < 1e-6 + rep.el_gap * 2e-3
    assert U.t == pytest.approx(2e-3)
    assert U.gradient_defect() < 1e-13
    assert np.array_equal(U.u, U0.u + 2e-3 * U.v)


def test_discrete_energy_identity(cube8, paper):
    """E1 - E0 = -I(U0|U1) + heat up to the Newton residual (exact minimizer identity)."""
    U0 = smooth_wave(cube8, amplitude=0.02, velocity=0.2, eta_amplitude=0.2)
    r = 0.3
    cfg = StepConfig(h=2e-3, newton_tol=1e-12, cg_tol=1e-12)
    U, rep = solve_step(U0, r, cfg, paper)
    # heat enters through theta(xi, eta) (eta - eta0) = h theta r / theta0
    lhs = rep.energy_after - rep.energy_before
    rhs = -rep.relative_energy + rep.heat_term
    assert lhs == pytest.approx(rhs, abs=1e-10)
    kin, internal = total_energy(paper, U)
    assert rep.energy_after == pytest.approx(kin + internal, rel=1e-15)


def test_uniqueness_from_two_starts(cube8, paper, rng):
    U0 = smooth_wave(cube8, amplitude=0.02, velocity=0.2)
    cfg = StepConfig(h=5e-3, newton_tol=1e-12, cg_tol=1e-12)
    Ua, _ = solve_step(U0, 0.0, cfg, paper, v_init=np.zeros_like(U0.v))
    Ub, _ = solve_step(U0, 0.0, cfg, paper, v_init=U0.v + 0.5 * rng.normal(size=U0.v.shape))
    assert np.max(np.abs(Ua.v - Ub.v)) < 1e-9


def test_newton_failure_reports(cube8, paper):
    U0 = smooth_wave(cube8, amplitude=0.05, velocity=5.0)
    with pytest.raises(StepFailure) as exc:
        solve_step(U0, 0.0, StepConfig(h=0.5, newton_max=2), paper)
    assert exc.value.report.newton_iters == 2


def test_equilibrium_is_fixed_point(cube8, paper):
    U0 = equilibrium(cube8, eta0=0.7)
    U, rep = solve_step(U0, 0.0, StepConfig(h=0.01), paper)
    assert np.max(np.abs(U.U - U0.U)) == 0.0
    assert rep.newton_iters == 0
