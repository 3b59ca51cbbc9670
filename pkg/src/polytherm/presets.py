"""Initial-data and heat-supply presets."""

from __future__ import annotations

import numpy as np

from .grid import GridSpec
from .varstep import State
from . import nulllag


def equilibrium(grid: GridSpec, eta0: float = 1.0) -> State:
    """y = x, v = 0, constant entropy."""
    z = grid.zeros("vector")
    return State.from_motion(grid, z, z.copy(), np.full(grid.n, float(eta0)))


def smooth_wave(grid: GridSpec, amplitude: float = 0.02, velocity: float = 0.0, k: int = 1,
                eta0: float = 1.0, eta_amplitude: float = 0.0) -> State:
    """Cyclic shear wave u_i = a sin(2 pi k x_{i+1} / L_{i+1}), v_i = b sin(2 pi k x_{i+2} / L_{i+2}).

    Each displacement component depends on a different coordinate, so the
    motion is genuinely three-dimensional (plane waves keep cof and det
    affine in F and never exercise the minors). The amplitude guard keeps
    det F = 1 + prod(F_{i,i+1}) > 0.
    """
    x = grid.coords()
    kk = [2 * np.pi * k / grid.L[a] for a in range(3)]
    if max(abs(amplitude) * kk[a] for a in range(3)) >= 0.5:
        raise ValueError("amplitude too large: need 2 pi k a / L < 0.5 so that det F stays positive")
    u = np.stack([amplitude * np.sin(kk[(i + 1) % 3] * x[(i + 1) % 3]) for i in range(3)])
    v = np.stack([velocity * np.sin(kk[(i + 2) % 3] * x[(i + 2) % 3]) for i in range(3)])
    eta = eta0 + eta_amplitude * np.cos(kk[0] * x[0]) * np.cos(kk[1] * x[1])
    if np.any(eta < 0):
        raise ValueError("eta_amplitude exceeds eta0; entropy must stay nonnegative")
    return State.from_motion(grid, u, v, eta)


def offset_drift(grid: GridSpec, offset: float = 1e-2, **wave) -> State:
    """Smooth wave with zeta0 = cof F0 + offset (every entry) and w0 = det F0 + offset."""
    base = smooth_wave(grid, **wave)
    xi = base.xi.copy()
    xi[9:19] += offset
    return State(grid, base.u, base.v, xi, base.eta, base.t)


def analytic_gradient(grid: GridSpec, amplitude: float = 0.05, k: int = 1) -> np.ndarray:
    """Exact F = grad y sampled on the grid for y_i = x_i + a sin(k_j x_j + k_l x_l) + a cos(k_j x_j).

    Here j = i+1 and l = i+2 cyclically, and k_a = 2 pi k / L_a. Used as a
    frozen smooth field for Piola-residual refinement.
    """
    x = grid.coords()
    kk = [2 * np.pi * k / grid.L[a] for a in range(3)]
    F = np.zeros((3, 3) + grid.n)
    for i in range(3):
        j, l = (i + 1) % 3, (i + 2) % 3
        c = amplitude * np.cos(kk[j] * x[j] + kk[l] * x[l])
        F[i, i] = 1.0
        F[i, j] = kk[j] * c - amplitude * kk[j] * np.sin(kk[j] * x[j])
        F[i, l] = kk[l] * c
    return F


INITIAL = {"equilibrium": equilibrium, "smooth-wave": smooth_wave, "offset-drift": offset_drift}


def make_initial(name: str, grid: GridSpec, **params) -> State:
    try:
        fn = INITIAL[name]
    except KeyError:
        raise ValueError(f"unknown initial preset {name!r}; choose from {sorted(INITIAL)}") from None
    return fn(grid, **params)


def heat_supply(name: str, grid: GridSpec, value: float = 0.0, amplitude: float = 0.0,
                width: float = 0.1, center=(0.5, 0.5, 0.5)):
    """Time-independent heat supply field: 'zero', 'constant' (value) or 'bump'.

    The bump is a periodised Gaussian of the given amplitude and width,
    centred at ``center`` given as fractions of the period lengths.
    """
    if name == "zero":
        return np.zeros(grid.n)
    if name == "constant":
        return np.full(grid.n, float(value))
    if name == "bump":
        x = grid.coords()
        d2 = np.zeros(grid.n)
        for a in range(3):
            d = x[a] - center[a] * grid.L[a]
            d = d - grid.L[a] * np.round(d / grid.L[a])
            d2 += d * d
        return amplitude * np.exp(-0.5 * d2 / width**2)
    raise ValueError(f"unknown heat supply preset {name!r}; choose zero, constant or bump")


def minors_offset(state: State) -> tuple[np.ndarray, np.ndarray]:
    """(zeta - cof F, w - det F) at a state."""
    F = state.F
    return state.zeta - nulllag.cof(F), state.w - nulllag.det(F)
