"""One step of the variational scheme.

Given U0 = (v0, xi0, eta0), the step

1. updates the entropy explicitly, eta = eta0 + h r / theta(xi0, eta0);
2. eliminates the affine constraint xi = xi0 + h A(F0) v, where
   (A v)^B = sum_a D_a(dPhi^B/dF_{ia}(F0) v_i);
3. minimises the strictly convex reduced objective

       G(v) = int |v - v0|^2 / 2 + e(xi0 + h A v, eta) dx

   with Newton-CG (Hessian action dv -> dv + h^2 A* e_xixi A dv) and
   Armijo backtracking.

Because xi is built from the accepted v by the same linear map, the discrete
constraint holds exactly, and F = I + grad u with u += h v keeps F a
discrete gradient.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import grid as g
from . import nulllag
from .constitutive import DomainError, EnergyModel

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """The step could not be completed (Newton stalled or entropy went negative)."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True, eq=False)
class State:
    """Discrete unknowns at one time level.

    ``u`` is the periodic displacement, so the motion is y = x + u and
    F = I + grad u. ``xi`` holds (F, zeta, w) in the 19-component ordering.
    """

    grid: g.GridSpec
    u: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        grid = self.grid
        object.__setattr__(self, "u", grid.check(self.u, "vector"))
        object.__setattr__(self, "v", grid.check(self.v, "vector"))
        object.__setattr__(self, "xi", grid.check(self.xi, "ext"))
        object.__setattr__(self, "eta", grid.check(self.eta, "scalar"))
        for name in ("u", "v", "xi", "eta"):
            a = getattr(self, name)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"State.{name} has non-finite entries")
        if np.any(self.eta < 0):
            raise DomainError("State.eta must be nonnegative")

    @property
    def F(self) -> np.ndarray:
        return self.xi[0:9].reshape((3, 3) + self.grid.n)

    @property
    def zeta(self) -> np.ndarray:
        return self.xi[9:18].reshape((3, 3) + self.grid.n)

    @property
    def w(self) -> np.ndarray:
        return self.xi[18]

    @property
    def y(self) -> np.ndarray:
        return self.grid.coords() + self.u

    @property
    def U(self) -> np.ndarray:
        """Stacked (v, xi, eta), shape (23, n1, n2, n3)."""
        return np.concatenate([self.v, self.xi, self.eta[None]], axis=0)

    @classmethod
    def from_motion(cls, grid, u, v, eta, t=0.0, zeta=None, w=None):
        """Build a state with F = I + grad u and, by default, zeta = cof F, w = det F."""
        u = grid.check(u, "vector")
        F = np.eye(3).reshape((3, 3, 1, 1, 1)) + g.gradient(grid, u)
        xi = nulllag.phi(F)
        if zeta is not None:
            xi[9:18] = np.asarray(zeta, dtype=float).reshape((9,) + grid.n)
        if w is not None:
            xi[18] = w
        return cls(grid, u, np.array(v, dtype=float), xi, np.array(eta, dtype=float), t)

    def gradient_defect(self) -> float:
        """|| F - (I + grad u) ||_L2, zero up to roundoff for every accepted state."""
        F = np.eye(3).reshape((3, 3, 1, 1, 1)) + g.gradient(self.grid, self.u)
        return g.norm(self.grid, self.F - F)


@dataclass(frozen=True)
class StepConfig:
    h: float
    newton_tol: float = 1e-9
    newton_max: int = 50
    cg_tol: float = 1e-10
    cg_max: int = 500
    backtrack_factor: float = 0.5
    armijo: float = 1e-4
    backtrack_max: int = 40

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"time step must be positive, got h={self.h}")
        for name in ("newton_tol", "cg_tol", "armijo"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.newton_max < 1 or self.cg_max < 1 or self.backtrack_max < 1:
            raise ValueError("iteration limits must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepReport:
    newton_iters: int = 0
    cg_iters_total: int = 0
    grad_norm_final: float = 0.0
    grad_tol: float = 0.0
    el_residual: float = 0.0
    el_gap: float = 0.0
    energy_before: float = 0.0
    energy_after: float = 0.0
    kinetic_before: float = 0.0
    internal_before: float = 0.0
    kinetic_after: float = 0.0
    internal_after: float = 0.0
    relative_energy: float = 0.0
    dissipation_margin: float = 0.0
    heat_term: float = 0.0
    delta_norm2: float = 0.0
    c_diss: float = 0.0
    tol_d_unit: float = 0.0
    eta_min: float = 0.0
    objective_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StepReport":
        return cls(**d)


def entropy_update(model: EnergyModel, xi0, eta0, r, h: float) -> np.ndarray:
    """eta = eta0 + h r / theta(xi0, eta0), rejected if any value turns negative."""
    theta0 = model.theta(xi0, eta0)
    eta = eta0 + h * np.asarray(r, dtype=float) / theta0
    if np.any(eta < 0):
        raise DomainError(
            f"entropy update gives min eta = {float(np.min(eta)):.3e} < 0; reduce h"
        )
    return eta


class Constraint:
    """The linear map v -> A(F0) v and its exact adjoint under grid.inner."""

    def __init__(self, grid: g.GridSpec, F0: np.ndarray):
        self.grid = grid
        self.P = nulllag.dphi(grid.check(F0, "tensor"))

    def apply(self, v: np.ndarray) -> np.ndarray:
        flux = np.einsum("Bia...,i...->Ba...", self.P, v)
        return g.divergence(self.grid, flux)

    def adjoint(self, m: np.ndarray) -> np.ndarray:
        Dm = g.gradient(self.grid, m)  # (19, 3, n...)
        return -np.einsum("Bia...,Ba...->i...", self.P, Dm)


def constraint_apply(grid, F0, v, h, xi0):
    """xi = xi0 + h sum_a D_a(dPhi(F0) v); the F block is F0 + h grad v."""
    return xi0 + h * Constraint(grid, F0).apply(v)


def constraint_adjoint(grid, F0, m):
    """(A* m)_i = -sum_{B,a} dPhi^B/dF_{ia}(F0) D_a m^B."""
    return Constraint(grid, F0).adjoint(m)


def relative_energy_density(model, v_ref, xi_ref, eta_ref, v, xi, eta):
    """Pointwise |v_ref - v|^2/2 + e(xi_ref, eta_ref | xi, eta) (Taylor remainder about (xi, eta))."""
    e_xi, theta = model.grad(xi, eta)
    de = (
        model.eval(xi_ref, eta_ref) - model.eval(xi, eta)
        - np.sum(e_xi * (xi_ref - xi), axis=0) - theta * (eta_ref - eta)
    )
    return 0.5 * np.sum((v_ref - v) ** 2, axis=0) + de


def total_energy(model, state: State) -> tuple[float, float]:
    """(kinetic, internal) integrals."""
    grid = state.grid
    kin = 0.5 * g.inner(grid, state.v, state.v)
    return kin, g.integrate(grid, model.eval(state.xi, state.eta))


def solve_step(U0: State, r, cfg: StepConfig, model: EnergyModel, v_init=None) -> tuple[State, StepReport]:
    """Advance ``U0`` by one step of size cfg.h under heat supply ``r``."""
    grid = U0.grid
    h = cfg.h
    r = np.broadcast_to(np.asarray(r, dtype=float), grid.n)
    v0, xi0, eta0 = U0.v, U0.xi, U0.eta
    eta = entropy_update(model, xi0, eta0, r, h)

    A = Constraint(grid, U0.F)
    rep = StepReport()
    kin0, int0 = total_energy(model, U0)
    rep.kinetic_before, rep.internal_before = kin0, int0
    rep.energy_before = kin0 + int0

    def objective(v):
        xi = xi0 + h * A.apply(v)
        e = model.eval(xi, eta)
        if not np.all(np.isfinite(e)):
            raise DomainError("energy not finite at trial point")
        dv = v - v0
        return 0.5 * g.inner(grid, dv, dv) + g.integrate(grid, e), xi

    def gradient(v, xi):
        e_xi, _ = model.grad(xi, eta)
        return (v - v0) + h * A.adjoint(e_xi)

    v = np.array(v0 if v_init is None else v_init, dtype=float)
    G, xi = objective(v)
    rep.objective_history.append(G)
    tol = cfg.newton_tol * (g.norm(grid, v0) + 1.0)
    rep.grad_tol = tol
    shape = v.shape
    cg_count = [0]

    for it in range(cfg.newton_max + 1):
        grad = gradient(v, xi)
        gnorm = g.norm(grid, grad)
        rep.grad_norm_final = gnorm
        if gnorm <= tol:
            break
        if it == cfg.newton_max:
            rep.newton_iters = it
            rep.cg_iters_total = cg_count[0]
            raise StepFailure(
                f"Newton did not converge in {cfg.newton_max} iterations (|grad G| = {gnorm:.3e} > {tol:.3e})",
                rep,
            )

        xi_cur = xi

        def hess(x, xi_cur=xi_cur):
            dv = x.reshape(shape)
            hx, _ = model.hess_vec(xi_cur, eta, A.apply(dv), 0.0)
            return (dv + h * h * A.adjoint(hx)).ravel()

        H = LinearOperator((v.size, v.size), matvec=hess, dtype=float)

        def count(_):
            cg_count[0] += 1

        d, info = cg(H, -grad.ravel(), rtol=cfg.cg_tol, atol=0.0, maxiter=cfg.cg_max, callback=count)
        if info < 0:
            raise StepFailure(f"CG breakdown (info={info})", rep)
        d = d.reshape(shape)
        slope = g.inner(grid, grad, d)
        if slope >= 0:
            d, slope = -grad, -gnorm * gnorm

        alpha = 1.0
        for _ in range(cfg.backtrack_max + 1):
            try:
                G_new, xi_new = objective(v + alpha * d)
                if G_new <= G + cfg.armijo * alpha * slope + 4 * np.finfo(float).eps * abs(G):
                    break
            except DomainError:
                pass
            alpha *= cfg.backtrack_factor
        else:
            rep.newton_iters = it + 1
            rep.cg_iters_total = cg_count[0]
            raise StepFailure(f"line search failed at Newton iteration {it + 1}", rep)
        v = v + alpha * d
        G, xi = G_new, xi_new
        rep.objective_history.append(G)
        rep.newton_iters = it + 1

    rep.cg_iters_total = cg_count[0]
    U = State(grid, U0.u + h * v, v, xi, eta, U0.t + h)

    # certificates
    e_xi, theta = model.grad(xi, eta)
    stress = np.einsum("B...,Bia...->ia...", e_xi, A.P)
    el = (v - v0) / h - g.divergence(grid, stress)
    rep.el_residual = g.norm(grid, el)
    rep.el_gap = g.norm(grid, el - gradient(v, xi) / h)
    kin, internal = total_energy(model, U)
    rep.kinetic_after, rep.internal_after = kin, internal
    rep.energy_after = kin + internal
    rep.relative_energy = g.integrate(grid, relative_energy_density(model, v0, xi0, eta0, v, xi, eta))
    theta0 = model.theta(xi0, eta0)
    rep.heat_term = h * g.integrate(grid, theta * r / theta0)
    dU = U.U - U0.U
    rep.delta_norm2 = g.inner(grid, dU, dU)
    rep.c_diss = min(1.0, model.c_e)
    rep.dissipation_margin = rep.energy_before + rep.heat_term - rep.energy_after - rep.c_diss * rep.delta_norm2
    v_w1 = np.sqrt(g.inner(grid, v, v) + g.inner(grid, g.gradient(grid, v), g.gradient(grid, v)))
    rep.tol_d_unit = h * max(grid.dx) ** 2 * (1.0 + float(np.max(np.abs(e_xi)))) * v_w1
    rep.eta_min = float(np.min(eta))
    return U, rep


def with_time(state: State, t: float) -> State:
    return replace(state, t=t)
