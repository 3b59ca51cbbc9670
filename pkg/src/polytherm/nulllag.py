"""Null-Lagrangians F, cof F, det F and their F-derivatives.

All functions are pointwise and vectorised: a 3x3 matrix argument may carry
any number of trailing axes (typically the grid axes). The 19-component
ordering is row-major F, row-major cof F, then det F.
"""

from __future__ import annotations

import numpy as np

from . import grid as g

NPHI = 19
F_SLICE = slice(0, 9)
COF_SLICE = slice(9, 18)
DET_INDEX = 18


def _levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    return eps


EPS = _levi_civita()


def cof(F: np.ndarray) -> np.ndarray:
    """Cofactor matrix, cof_{ia} = 1/2 eps_ijk eps_abc F_jb F_kc."""
    F = np.asarray(F, dtype=float)
    C = np.empty_like(F)
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for a in range(3):
            a1, a2 = (a + 1) % 3, (a + 2) % 3
            C[i, a] = F[i1, a1] * F[i2, a2] - F[i1, a2] * F[i2, a1]
    return C


def det(F: np.ndarray) -> np.ndarray:
    """det F = 1/3 cof(F)_{ia} F_{ia}."""
    F = np.asarray(F, dtype=float)
    return np.sum(cof(F) * F, axis=(0, 1)) / 3.0


def phi(F: np.ndarray) -> np.ndarray:
    """The 19-vector (F, cof F, det F)."""
    F = np.asarray(F, dtype=float)
    rest = F.shape[2:]
    return np.concatenate(
        [F.reshape((9,) + rest), cof(F).reshape((9,) + rest), det(F)[None]], axis=0
    )


def split(xi: np.ndarray):
    """Inverse of the ordering: xi -> (F, cof-part, det-part)."""
    rest = xi.shape[1:]
    return xi[F_SLICE].reshape((3, 3) + rest), xi[COF_SLICE].reshape((3, 3) + rest), xi[DET_INDEX]


def dphi(F0: np.ndarray) -> np.ndarray:
    """Full derivative table P[B, i, a] = dPhi^B / dF_{ia} at F0, shape (19, 3, 3, ...)."""
    F0 = np.asarray(F0, dtype=float)
    rest = F0.shape[2:]
    P = np.zeros((NPHI, 3, 3) + rest)
    eye = np.eye(3)
    idF = np.einsum("ji,ba->jbia", eye, eye).reshape(9, 3, 3)
    P[F_SLICE] = idF.reshape((9, 3, 3) + (1,) * len(rest))
    # d cof_{jb} / dF_{ia} = eps_jik eps_bac F_kc
    P[COF_SLICE] = np.einsum("jik,bac,kc...->jbia...", EPS, EPS, F0).reshape((9, 3, 3) + rest)
    P[DET_INDEX] = cof(F0)
    return P


def dphi_apply(F0: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Pairing table T[B, a] = dPhi^B/dF_{ia}(F0) v_i, shape (19, 3, ...)."""
    return np.einsum("Bia...,i...->Ba...", dphi(F0), np.asarray(v, dtype=float))


def piola_residual(grid: g.GridSpec, F: np.ndarray) -> np.ndarray:
    """Per component B, the L2 norm over grid and i of sum_a D_a (dPhi^B/dF_{ia}(F))."""
    F = grid.check(F, "tensor")
    P = dphi(F)
    res = g.divergence(grid, P)  # (19, 3, n...)
    return np.array([g.norm(grid, res[B]) for B in range(NPHI)])


def transport_residual(grid: g.GridSpec, F0: np.ndarray, F1: np.ndarray, v1: np.ndarray, h: float) -> dict:
    """Discrete residuals of the transport identities for cof F and det F over one step.

    ``total`` compares (Phi(F1) - Phi(F0))/h with D_a(dPhi(F0) v1); ``spatial``
    is the frozen-field part D_a(dPhi(F0) v1) - dPhi(F0) : D v1, i.e. the
    product-rule and Piola defects of the grid operators alone.
    """
    F0 = grid.check(F0, "tensor")
    F1 = grid.check(F1, "tensor")
    v1 = grid.check(v1, "vector")
    P0 = dphi(F0)
    flux = g.divergence(grid, np.einsum("Bia...,i...->Ba...", P0, v1))
    chain = np.einsum("Bia...,ia...->B...", P0, g.gradient(grid, v1))
    rate = (phi(F1) - phi(F0)) / h
    total = rate - flux
    spatial = flux - chain
    return {
        "cof_total": g.norm(grid, total[COF_SLICE]),
        "det_total": g.norm(grid, total[DET_INDEX]),
        "cof_spatial": g.norm(grid, spatial[COF_SLICE]),
        "det_spatial": g.norm(grid, spatial[DET_INDEX]),
    }
