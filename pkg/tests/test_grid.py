"""Periodic lattice, centered differences and reductions."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polytherm import grid as g
from polytherm.grid import GridSpec


def test_spacing_and_volume():
    grid = GridSpec((4, 5, 8), (1.0, 2.0, 4.0))
    assert grid.dx == (0.25, 0.4, 0.5)
    assert grid.vol == pytest.approx(0.05)
    assert grid.npoints == 160


@pytest.mark.parametrize("n, L", [((3, 4, 4), (1, 1, 1)), ((4, 4, 4), (1, 0, 1)), ((4, 4), (1, 1))])
def test_rejects_bad_grids(n, L):
    with pytest.raises(ValueError):
        GridSpec(n, L)


def test_roundtrip_dict():
    grid = GridSpec((4, 6, 8), (1.0, 2.5, 3.0))
    assert GridSpec.from_dict(grid.to_dict()) == grid


def test_check_kind(grid6):
    g.integrate(grid6, grid6.zeros())
    with pytest.raises(ValueError):
        grid6.check(np.zeros((3, 4, 4, 4)))
    with pytest.raises(ValueError):
        grid6.check(grid6.zeros("vector"), "tensor")


def test_diff_axis_validation(grid6):
    with pytest.raises(ValueError, match="axis"):
        g.diff(grid6, grid6.zeros(), 3)


def test_diff_matches_analytic_sine():
    n = 32
    grid = GridSpec((n, n, n))
    x = grid.coords()
    f = np.sin(2 * np.pi * x[1])
    d = g.diff(grid, f, 1)
    k = 2 * np.pi
    # centered difference of sin(kx) is sin(k dx)/dx cos(kx) exactly
    exact = np.sin(k * grid.dx[1]) / grid.dx[1] * np.cos(k * x[1])
    assert np.max(np.abs(d - exact)) < 1e-12
    assert np.max(np.abs(g.diff(grid, f, 0))) == 0.0


def test_constants_are_in_kernel(grid6):
    f = np.full(grid6.n, 3.7)
    for a in range(3):
        assert np.max(np.abs(g.diff(grid6, f, a))) < 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.integers(0, 2), b=st.integers(0, 2))
def test_skew_adjoint_and_commuting(seed, a, b):
    grid = GridSpec((5, 6, 7), (1.0, 0.7, 1.9))
    rng = np.random.default_rng(seed)
    f, q = rng.normal(size=grid.n), rng.normal(size=grid.n)
    lhs = g.inner(grid, g.diff(grid, f, a), q)
    rhs = -g.inner(grid, f, g.diff(grid, q, a))
    assert lhs == pytest.approx(rhs, abs=1e-12)
    dab = g.diff(grid, g.diff(grid, f, a), b)
    dba = g.diff(grid, g.diff(grid, f, b), a)
    assert np.max(np.abs(dab - dba)) < 1e-10


def test_gradient_and_divergence_layout(grid6, rng):
    v = rng.normal(size=(3,) + grid6.n)
    G = g.gradient(grid6, v)
    assert G.shape == (3, 3) + grid6.n
    assert np.array_equal(G[1, 2], g.diff(grid6, v[1], 2))
    div = g.divergence(grid6, G)
    assert np.allclose(div[0], sum(g.diff(grid6, G[0, a], a) for a in range(3)))
    with pytest.raises(ValueError):
        g.divergence(grid6, rng.normal(size=(2,) + grid6.n))


def test_divergence_adjoint_to_gradient(grid6, rng):
    T = rng.normal(size=(3, 3) + grid6.n)
    v = rng.normal(size=(3,) + grid6.n)
    assert g.inner(grid6, g.divergence(grid6, T), v) == pytest.approx(
        -g.inner(grid6, T, g.gradient(grid6, v)), abs=1e-11)


def test_curl_of_discrete_gradient_vanishes(grid6, rng):
    u = rng.normal(size=(3,) + grid6.n)
    F = np.eye(3).reshape(3, 3, 1, 1, 1) + g.gradient(grid6, u)
    assert g.curl_residual(grid6, F) < 1e-11
    F[0, 1] += rng.normal(size=grid6.n)
    assert g.curl_residual(grid6, F) > 1e-2


def test_integrate_and_inner(grid6, rng):
    assert g.integrate(grid6, np.ones(grid6.n)) == pytest.approx(1.0 * 1.3 * 0.8)
    f = rng.normal(size=(3,) + grid6.n)
    assert g.norm(grid6, f) ** 2 == pytest.approx(g.inner(grid6, f, f))
    with pytest.raises(ValueError):
        g.inner(grid6, f, f[0])


def test_reductions_deterministic(grid6, rng):
    f = rng.normal(size=grid6.n)
    assert g.integrate(grid6, f) == g.integrate(grid6, f.copy())
    # a non-contiguous view must give the same bits
    big = np.zeros((2,) + grid6.n)
    big[1] = f
    assert g.integrate(grid6, np.asfortranarray(f)) == g.integrate(grid6, big[1])
