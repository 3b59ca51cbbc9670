"""Invariant suite run by ``polytherm check``.

Each item yields a row (name, value, tolerance, passed, note). The dense
oracle for the quadratic surrogate is assembled from Kronecker products
of circulant difference matrices and complex-step derivatives, so it
shares no code with the grid or null-Lagrangian modules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as g
from . import nulllag
from .constitutive import EnergyModel, PaperEnergy, QuadraticEnergy, check_hypotheses, make_model
from .grid import GridSpec
from .march import run
from .presets import equilibrium, smooth_wave
from .varstep import StepConfig, constraint_adjoint, constraint_apply, solve_step


@dataclass
class Row:
    name: str
    value: float
    tol: float
    passed: bool
    note: str = ""
    warn: bool = False


def _circulant_diff(n: int, dx: float) -> np.ndarray:
    D = np.zeros((n, n))
    for k in range(n):
        D[k, (k + 1) % n] += 1.0
        D[k, (k - 1) % n] -= 1.0
    return D / (2 * dx)


def dense_difference(grid: GridSpec, axis: int) -> np.ndarray:
    """Matrix of the centered difference along ``axis`` on C-ordered n1*n2*n3 vectors."""
    mats = [np.eye(n) for n in grid.n]
    mats[axis] = _circulant_diff(grid.n[axis], grid.dx[axis])
    return np.kron(np.kron(mats[0], mats[1]), mats[2])


def _complex_step_phi_jacobian(F: np.ndarray) -> np.ndarray:
    """d(F, cof F, det F)/dF at one point as a (19, 3, 3) array, by complex step."""
    s = 1e-30
    J = np.empty((19, 3, 3))
    for i in range(3):
        for a in range(3):
            Fc = F.astype(complex)
            Fc[i, a] += 1j * s
            d = np.linalg.det(Fc)
            cofc = d * np.linalg.inv(Fc).T
            J[0:9, i, a] = np.eye(9)[3 * i + a]
            J[9:18, i, a] = cofc.imag.ravel() / s
            J[18, i, a] = d.imag / s
    return J


def dense_constraint(grid: GridSpec, F0: np.ndarray) -> np.ndarray:
    """(19 N) x (3 N) matrix of v -> sum_a D_a(dPhi(F0)[:, :, a] v)."""
    N = grid.npoints
    Fp = F0.reshape(3, 3, N)
    J = np.stack([_complex_step_phi_jacobian(Fp[:, :, k]) for k in range(N)], axis=-1)  # (19,3,3,N)
    A = np.zeros((19 * N, 3 * N))
    for a in range(3):
        D = dense_difference(grid, a)
        for B in range(19):
            for i in range(3):
                A[B * N:(B + 1) * N, i * N:(i + 1) * N] += D * J[B, i, a][None, :]
    return A


def dense_quadratic_step(state, h: float) -> np.ndarray:
    """Exact minimizer v of the step for e = |xi|^2/2 + eta^2/2 + delta eta.

    (I + h^2 A^T A) v = v0 - h A^T xi0, solved densely. The entropy part
    decouples, so delta and eta play no role.
    """
    grid = state.grid
    A = dense_constraint(grid, state.F)
    K = np.eye(A.shape[1]) + h * h * A.T @ A
    rhs = state.v.ravel() - h * A.T @ state.xi.ravel()
    return np.linalg.solve(K, rhs).reshape(state.v.shape)


# ---------------------------------------------------------------------------


def _grid_rows(rng, grid):
    f = rng.normal(size=grid.n)
    q = rng.normal(size=grid.n)
    adj = max(abs(g.inner(grid, g.diff(grid, f, a), q) + g.inner(grid, f, g.diff(grid, q, a))) for a in range(3))
    adj /= g.norm(grid, f) * g.norm(grid, q) / min(grid.dx)
    comm = max(
        float(np.max(np.abs(g.diff(grid, g.diff(grid, f, a), b) - g.diff(grid, g.diff(grid, f, b), a))))
        for a in range(3) for b in range(3)
    )
    return [
        Row("grid_skew_adjoint", adj, 1e-13, adj <= 1e-13, "relative"),
        Row("grid_commuting", comm, 1e-12 * float(np.max(np.abs(f))) / min(grid.dx) ** 2,
            comm <= 1e-12 * float(np.max(np.abs(f))) / min(grid.dx) ** 2),
    ]


def _nulllag_rows(rng, grid):
    F = np.eye(3)[:, :, None] + 0.3 * rng.normal(size=(3, 3, 200))
    c, d = nulllag.cof(F), nulllag.det(F)
    ident = np.einsum("ia...,ib...->ab...", c, F) - d * np.eye(3)[:, :, None]
    err_id = float(np.max(np.abs(ident)))
    err_det = float(np.max(np.abs(d - np.linalg.det(np.moveaxis(F, -1, 0)))))
    # d det / dF = cof by central differences
    hstep = 1e-6
    fd = np.empty_like(F)
    for i in range(3):
        for a in range(3):
            E = np.zeros((3, 3, 1))
            E[i, a] = hstep
            fd[i, a] = (nulllag.det(F + E) - nulllag.det(F - E)) / (2 * hstep)
    err_ddet = float(np.max(np.abs(fd - c)) / np.max(np.abs(c)))
    # cof-block Piola identity on a discrete gradient is exact
    u = 0.05 * rng.normal(size=(3,) + grid.n)
    Fg = np.eye(3).reshape(3, 3, 1, 1, 1) + g.gradient(grid, u)
    piola = nulllag.piola_residual(grid, Fg)
    pc = float(np.max(piola[9:18]))
    return [
        Row("cof_transpose_F_is_det_I", err_id, 1e-12, err_id <= 1e-12),
        Row("det_matches_lapack", err_det, 1e-12, err_det <= 1e-12),
        Row("ddet_dF_is_cof", err_ddet, 1e-6, err_ddet <= 1e-6, "central differences"),
        Row("piola_cof_discrete_gradient", pc, 1e-10, pc <= 1e-10),
    ]


def derivative_rows(model: EnergyModel, rng, npoints: int = 100):
    """Gradient vs central differences and Hessian-action symmetry at random points."""
    xi = rng.uniform(-1.5, 1.5, size=(19, npoints))
    eta = rng.uniform(0.1, 2.0, size=npoints)
    gxi, th = model.grad(xi, eta)
    worst = 0.0
    for k in range(20):
        hk = 1e-6 * (1 + (np.abs(xi[k]) if k < 19 else np.abs(eta)))
        dxi = np.zeros_like(xi)
        deta = np.zeros_like(eta)
        if k < 19:
            dxi[k] = hk
        else:
            deta = hk
        fd = (model.eval(xi + dxi, eta + deta) - model.eval(xi - dxi, eta - deta)) / (2 * hk)
        exact = gxi[k] if k < 19 else th
        worst = max(worst, float(np.max(np.abs(fd - exact) / np.maximum(1.0, np.abs(exact)))))
    a = rng.normal(size=(19, npoints)), rng.normal(size=npoints)
    b = rng.normal(size=(19, npoints)), rng.normal(size=npoints)
    ha = model.hess_vec(xi, eta, *a)
    hb = model.hess_vec(xi, eta, *b)
    lhs = np.sum(ha[0] * b[0], axis=0) + ha[1] * b[1]
    rhs = np.sum(hb[0] * a[0], axis=0) + hb[1] * a[1]
    scale = np.abs(lhs) + np.abs(rhs) + 1e-300
    sym = float(np.max(np.abs(lhs - rhs) / scale))
    return [
        Row("energy_gradient_fd", worst, 1e-6, worst <= 1e-6, "relative, central differences"),
        Row("hessian_symmetric", sym, 1e-10, sym <= 1e-10),
    ]


def exponents_compatible(model: EnergyModel) -> bool:
    """Whether the dual-growth bound can hold for |zeta|^q and |w|^rho energies (q <= p/2, rho <= p/3)."""
    p = model.p
    return getattr(model, "q", 0) <= p / 2 and getattr(model, "rho", 0) <= p / 3


def hypothesis_rows(model: EnergyModel, seed: int):
    rep = check_hypotheses(model, seed=seed)
    rows = []
    for c in rep.checks:
        note = f"margin {c.margin:.3e}"
        if c.note:
            note += f"; {c.note}"
        if c.name == "dual_growth" and not c.passed and not exponents_compatible(model):
            note = (f"advisory: q={getattr(model, 'q', '?')}, rho={getattr(model, 'rho', '?')} exceed "
                    f"p/2, p/3 so this bound cannot hold for the chosen exponents")
            rows.append(Row(f"constitutive_{c.name}", c.value, float("nan"), True, note, warn=True))
            continue
        rows.append(Row(f"constitutive_{c.name}", c.value, float("nan"), c.passed, note))
    return rows


def adjoint_row(rng, grid, adjoint=constraint_adjoint):
    u = 0.03 * rng.normal(size=(3,) + grid.n)
    F0 = np.eye(3).reshape(3, 3, 1, 1, 1) + g.gradient(grid, u)
    v = rng.normal(size=(3,) + grid.n)
    m = rng.normal(size=(19,) + grid.n)
    zero = np.zeros((19,) + grid.n)
    Av = constraint_apply(grid, F0, v, 1.0, zero)
    lhs = g.inner(grid, Av, m)
    rhs = g.inner(grid, v, adjoint(grid, F0, m))
    err = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)
    return Row("constraint_adjoint_identity", err, 1e-12, err <= 1e-12, "<A v, m> = <v, A* m>")


def equilibrium_row(model: EnergyModel, grid, nsteps: int = 5):
    U0 = equilibrium(grid)
    h = 1e-2
    tr = run(U0, 0.0, nsteps * h, StepConfig(h=h), model)
    last = tr.states[-1]
    dev = max(float(np.max(np.abs(last.U - U0.U))), float(np.max(np.abs(last.u - U0.u))))
    return Row("equilibrium_fixed_point", dev, 1e-12, dev <= 1e-12, f"{nsteps} steps")


def quadratic_oracle_row(seed: int = 0, n: int = 4, h: float = 0.05):
    grid = GridSpec((n, n, n), (1.0, 1.0, 1.0))
    U0 = smooth_wave(grid, amplitude=0.03, velocity=0.2)
    rng = np.random.default_rng(seed)
    xi = U0.xi + 0.01 * rng.normal(size=U0.xi.shape)
    from .varstep import State

    U0 = State(grid, U0.u, U0.v, xi, U0.eta)
    v_dense = dense_quadratic_step(U0, h)
    cfg = StepConfig(h=h, newton_tol=1e-14, cg_tol=1e-14, cg_max=2000)
    U, _ = solve_step(U0, 0.0, cfg, QuadraticEnergy())
    err = float(np.max(np.abs(U.v - v_dense)) / np.max(np.abs(v_dense)))
    return Row("quadratic_surrogate_oracle", err, 1e-10, err <= 1e-10, f"{n}^3 dense solve")


def run_suite(model: EnergyModel | None = None, seed: int = 0, adjoint=constraint_adjoint, n: int = 6) -> list[Row]:
    """All invariants; ``adjoint`` may be replaced to check that the suite catches a faulty one."""
    if model is None:
        model = PaperEnergy()
    rng = np.random.default_rng(seed)
    grid = GridSpec((n, n + 1, n + 2), (1.0, 1.3, 0.8))
    rows = []
    rows += _grid_rows(rng, grid)
    rows += _nulllag_rows(rng, grid)
    rows += derivative_rows(model, rng)
    rows += hypothesis_rows(model, seed)
    rows.append(adjoint_row(rng, grid, adjoint))
    try:
        rows.append(equilibrium_row(model, GridSpec((4, 4, 4), (1.0, 1.0, 1.0))))
    except Exception as exc:  # a broken model may not even step
        rows.append(Row("equilibrium_fixed_point", float("nan"), 1e-12, False, f"{type(exc).__name__}: {exc}"))
    rows.append(quadratic_oracle_row(seed))
    return rows


def format_table(rows: list[Row]) -> str:
    w = max(len(r.name) for r in rows)
    lines = [f"{'check':<{w}}  {'value':>12}  {'tolerance':>12}  verdict  note"]
    for r in rows:
        verdict = "PASS" if r.passed else "FAIL"
        if r.passed and r.warn:
            verdict = "WARN"
        lines.append(f"{r.name:<{w}}  {r.value:>12.4e}  {r.tol:>12.4e}  {verdict:<7}  {r.note}")
    return "\n".join(lines)


def suite_for(name: str, seed: int = 0, **params) -> list[Row]:
    return run_suite(make_model(name, **params), seed=seed)
