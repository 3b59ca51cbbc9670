"""Periodic 3-D lattice and discrete calculus.

Fields are plain numpy arrays whose last three axes are the grid axes:

    scalar  (n1, n2, n3)
    vector  (3, n1, n2, n3)
    tensor  (3, 3, n1, n2, n3)      T[i, a] is row i, column a
    ext     (19, n1, n2, n3)        F (9, row-major), cof (9, row-major), det

The first derivative is the second-order centered difference with periodic
wrap-around. It is exactly skew-adjoint under :func:`inner`, and difference
operators along different axes commute, so discrete integration by parts and
``curl(grad y) = 0`` hold to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COMPONENTS = {"scalar": (), "vector": (3,), "tensor": (3, 3), "ext": (19,)}


@dataclass(frozen=True)
class GridSpec:
    n: tuple[int, int, int]
    L: tuple[float, float, float] = (1.0, 1.0, 1.0)
    dx: tuple[float, float, float] = field(init=False)

    def __post_init__(self):
        n = tuple(int(k) for k in self.n)
        L = tuple(float(x) for x in self.L)
        if len(n) != 3 or len(L) != 3:
            raise ValueError("GridSpec needs three axes")
        if min(n) < 4:
            raise ValueError(f"need at least 4 points per axis, got n={n}")
        if not all(np.isfinite(x) and x > 0 for x in L):
            raise ValueError(f"period lengths must be positive, got L={L}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "dx", tuple(L[a] / n[a] for a in range(3)))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.n

    @property
    def vol(self) -> float:
        return self.dx[0] * self.dx[1] * self.dx[2]

    @property
    def npoints(self) -> int:
        return self.n[0] * self.n[1] * self.n[2]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (3, n1, n2, n3); node k sits at k*dx."""
        axes = [np.arange(self.n[a]) * self.dx[a] for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def zeros(self, kind: str = "scalar") -> np.ndarray:
        return np.zeros(COMPONENTS[kind] + self.n)

    def check(self, f: np.ndarray, kind: str | None = None) -> np.ndarray:
        """Validate that ``f`` lives on this grid (and has the given kind)."""
        f = np.asarray(f, dtype=float)
        if f.shape[-3:] != self.n:
            raise ValueError(f"field shape {f.shape} does not match grid {self.n}")
        if kind is not None and f.shape[:-3] != COMPONENTS[kind]:
            raise ValueError(f"expected a {kind} field, got shape {f.shape}")
        return f

    def to_dict(self) -> dict:
        return {"n": list(self.n), "L": list(self.L)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(tuple(d["n"]), tuple(d["L"]))


def diff(grid: GridSpec, f: np.ndarray, axis: int) -> np.ndarray:
    """Centered periodic difference along grid axis ``axis`` (0, 1 or 2), componentwise."""
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis!r}")
    f = grid.check(f)
    ax = f.ndim - 3 + axis
    return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * grid.dx[axis])


def gradient(grid: GridSpec, v: np.ndarray) -> np.ndarray:
    """(grad v)[i, a] = D_a v_i. A scalar input gives a vector."""
    v = grid.check(v)
    return np.stack([diff(grid, v, a) for a in range(3)], axis=v.ndim - 3)


def divergence(grid: GridSpec, T: np.ndarray) -> np.ndarray:
    """(div T)[...] = sum_a D_a T[..., a]; contracts the last component index."""
    T = grid.check(T)
    if T.ndim < 4 or T.shape[-4] != 3:
        raise ValueError(f"divergence needs a trailing component index of length 3, got {T.shape}")
    return sum(diff(grid, T[..., a, :, :, :], a) for a in range(3))


def integrate(grid: GridSpec, f: np.ndarray) -> float:
    """vol * sum over grid points (numpy pairwise summation, fixed order)."""
    f = grid.check(f, "scalar")
    return grid.vol * float(np.sum(np.ascontiguousarray(f).ravel()))


def inner(grid: GridSpec, f: np.ndarray, g: np.ndarray) -> float:
    f = grid.check(f)
    g = grid.check(g)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch {f.shape} vs {g.shape}")
    return grid.vol * float(np.sum(np.ascontiguousarray(f * g).ravel()))


def norm(grid: GridSpec, f: np.ndarray) -> float:
    return float(np.sqrt(inner(grid, f, f)))


def curl_residual(grid: GridSpec, F: np.ndarray) -> float:
    """max over (i, a, b) of || D_a F[i, b] - D_b F[i, a] ||_{L2}."""
    F = grid.check(F, "tensor")
    worst = 0.0
    for a in range(3):
        for b in range(a + 1, 3):
            r = diff(grid, F[:, b], a) - diff(grid, F[:, a], b)
            for i in range(3):
                worst = max(worst, norm(grid, r[i]))
    return worst
