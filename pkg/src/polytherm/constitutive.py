"""Internal energy models e(xi, eta) on the extended variable.

A model maps the 19-component extended strain ``xi`` (shape (19, ...)) and the
entropy ``eta`` (shape (...)) to the energy density, its gradient
(e_xi, theta) and its Hessian action. All methods are pointwise and
vectorised over trailing axes. Entropy must be nonnegative.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class DomainError(ValueError):
    """Raised when an argument leaves the domain eta >= 0 of the energy."""


def _check_eta(eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise DomainError("entropy must be finite and nonnegative")
    return eta


class EnergyModel:
    """Base class. Subclasses define ``_eval``, ``_grad`` and ``_hess_vec``.

    Metadata: growth exponents ``p, q, rho, ell``, the uniform convexity
    constant ``c_e`` (lower bound of the Hessian) and the temperature floor
    ``delta`` (lower bound of theta = de/deta on eta >= 0).
    """

    name = "abstract"
    p = q = rho = ell = 2.0
    delta = 0.0

    @property
    def c_e(self) -> float:
        raise NotImplementedError

    def eval(self, xi, eta):
        return self._eval(np.asarray(xi, dtype=float), _check_eta(eta))

    def grad(self, xi, eta):
        """Return (e_xi, theta) with shapes (19, ...) and (...)."""
        return self._grad(np.asarray(xi, dtype=float), _check_eta(eta))

    def hess_vec(self, xi, eta, dxi, deta=0.0):
        """Hessian of e in (xi, eta) applied to (dxi, deta)."""
        dxi = np.asarray(dxi, dtype=float)
        deta = np.broadcast_to(np.asarray(deta, dtype=float), dxi.shape[1:])
        return self._hess_vec(np.asarray(xi, dtype=float), _check_eta(eta), dxi, deta)

    def theta(self, xi, eta):
        return self.grad(xi, eta)[1]

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class PaperEnergy(EnergyModel):
    """e = |F|^4 + |F|^2 + g(zeta) + h(w) + k(eta) with

        g(zeta) = beta_zeta (1 + |zeta|^2)^(q/2)
        h(w)    = beta_w    (1 + w^2)^(rho/2)
        k(eta)  = beta_eta  (1 + eta^2)^(ell/2) + delta * eta

    so that theta = k'(eta) >= delta, attained at eta = 0. For exponents of 2
    or more the Hessian is bounded below by ``c_e`` everywhere; for smaller
    ``rho`` or ``ell`` the bound only holds on |w|, |eta| <= ``convexity_radius``.
    """

    beta_zeta: float = 1.0
    beta_w: float = 1.0
    beta_eta: float = 1.0
    delta: float = 0.1
    q: float = 2.0
    rho: float = 2.0
    ell: float = 2.0
    convexity_radius: float = 10.0
    p: float = field(default=4.0, init=False)
    name = "paper"

    def __post_init__(self):
        if min(self.beta_zeta, self.beta_w, self.beta_eta, self.delta) <= 0:
            raise ValueError("beta_zeta, beta_w, beta_eta and delta must be positive")
        if self.q < 2 or self.rho <= 1 or self.ell <= 1:
            raise ValueError("exponents need q >= 2, rho > 1, ell > 1")
        if self.rho < 2 or self.ell < 2:
            log.warning(
                "rho=%g, ell=%g < 2: uniform convexity constant only valid for |w|, |eta| <= %g",
                self.rho, self.ell, self.convexity_radius,
            )

    @staticmethod
    def _radial_min(beta, s, R):
        # min over |x| <= R (or all x when s >= 2) of d^2/dx^2 beta (1 + x^2)^(s/2)
        if s >= 2:
            return beta * s
        return beta * s * (1 + R * R) ** (s / 2 - 2) * (1 + (s - 1) * R * R)

    @property
    def c_e(self) -> float:
        R = self.convexity_radius
        return float(min(
            2.0,
            self.beta_zeta * self.q,
            self._radial_min(self.beta_w, self.rho, R),
            self._radial_min(self.beta_eta, self.ell, R),
        ))

    def params(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "p"}

    def _eval(self, xi, eta):
        F, z, w = xi[0:9], xi[9:18], xi[18]
        sF = np.sum(F * F, axis=0)
        sz = np.sum(z * z, axis=0)
        return (
            sF * sF + sF
            + self.beta_zeta * (1 + sz) ** (self.q / 2)
            + self.beta_w * (1 + w * w) ** (self.rho / 2)
            + self.beta_eta * (1 + eta * eta) ** (self.ell / 2)
            + self.delta * eta
        )

    def _grad(self, xi, eta):
        F, z, w = xi[0:9], xi[9:18], xi[18]
        sF = np.sum(F * F, axis=0)
        sz = np.sum(z * z, axis=0)
        g = np.empty_like(xi)
        g[0:9] = (4 * sF + 2) * F
        g[9:18] = self.beta_zeta * self.q * (1 + sz) ** (self.q / 2 - 1) * z
        g[18] = self.beta_w * self.rho * (1 + w * w) ** (self.rho / 2 - 1) * w
        theta = self.beta_eta * self.ell * (1 + eta * eta) ** (self.ell / 2 - 1) * eta + self.delta
        return g, theta

    def _hess_vec(self, xi, eta, dxi, deta):
        F, z, w = xi[0:9], xi[9:18], xi[18]
        dF, dz, dw = dxi[0:9], dxi[9:18], dxi[18]
        sF = np.sum(F * F, axis=0)
        sz = np.sum(z * z, axis=0)
        out = np.empty(np.broadcast_shapes(xi.shape, dxi.shape))
        out[0:9] = (4 * sF + 2) * dF + 8 * F * np.sum(F * dF, axis=0)
        q = self.q
        out[9:18] = self.beta_zeta * q * (
            (1 + sz) ** (q / 2 - 1) * dz + (q - 2) * (1 + sz) ** (q / 2 - 2) * z * np.sum(z * dz, axis=0)
        )
        r = self.rho
        out[18] = self.beta_w * r * (1 + w * w) ** (r / 2 - 2) * (1 + (r - 1) * w * w) * dw
        ell = self.ell
        d_eta = self.beta_eta * ell * (1 + eta * eta) ** (ell / 2 - 2) * (1 + (ell - 1) * eta * eta) * deta
        return out, d_eta


@dataclass(frozen=True)
class QuadraticEnergy(EnergyModel):
    """Surrogate e = |xi|^2/2 + eta^2/2 + delta*eta; every step is a linear SPD solve."""

    delta: float = 0.1
    name = "quadratic"

    @property
    def c_e(self) -> float:
        return 1.0

    def params(self) -> dict:
        return asdict(self)

    def _eval(self, xi, eta):
        return 0.5 * np.sum(xi * xi, axis=0) + 0.5 * eta * eta + self.delta * eta

    def _grad(self, xi, eta):
        return xi.copy(), eta + self.delta

    def _hess_vec(self, xi, eta, dxi, deta):
        return np.broadcast_to(dxi, np.broadcast_shapes(xi.shape, dxi.shape)).copy(), deta.copy()


@dataclass(frozen=True)
class SaddleEnergy(EnergyModel):
    """Deliberately non-convex test model |F|^2 - |zeta|^2 + eta^2/2 + delta*eta."""

    delta: float = 0.1
    name = "saddle"

    @property
    def c_e(self) -> float:
        return 1.0  # declared, not true: check_hypotheses must catch it

    def params(self) -> dict:
        return asdict(self)

    def _eval(self, xi, eta):
        return np.sum(xi[0:9] ** 2, axis=0) - np.sum(xi[9:18] ** 2, axis=0) + 0.5 * eta * eta + self.delta * eta

    def _grad(self, xi, eta):
        g = np.zeros_like(xi)
        g[0:9] = 2 * xi[0:9]
        g[9:18] = -2 * xi[9:18]
        return g, eta + self.delta

    def _hess_vec(self, xi, eta, dxi, deta):
        out = np.zeros(np.broadcast_shapes(xi.shape, dxi.shape))
        out[0:9] = 2 * dxi[0:9]
        out[9:18] = -2 * dxi[9:18]
        return out, deta.copy()


MODELS = {"paper": PaperEnergy, "quadratic": QuadraticEnergy, "saddle": SaddleEnergy}


def make_model(name: str, **params) -> EnergyModel:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(**params)


def model_to_dict(model: EnergyModel) -> dict:
    return {"name": model.name, "params": model.params()}


def model_from_dict(d: dict) -> EnergyModel:
    return make_model(d["name"], **d["params"])


# ---------------------------------------------------------------------------
# hypothesis checks


@dataclass
class Check:
    name: str
    value: float
    margin: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.margin) and self.margin >= 0)


@dataclass
class HypothesisReport:
    model: str
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def growth_measure(model: EnergyModel, xi, eta):
    """|F|^p + |zeta|^q + |w|^rho + |eta|^ell with Frobenius norms."""
    nF = np.sqrt(np.sum(xi[0:9] ** 2, axis=0))
    nz = np.sqrt(np.sum(xi[9:18] ** 2, axis=0))
    return nF ** model.p + nz ** model.q + np.abs(xi[18]) ** model.rho + np.abs(eta) ** model.ell


def sample_points(n: int, rng: np.random.Generator, scale_exp=(1.0, 3.0)):
    """Bounded points plus points where random subsets of blocks are large.

    Returns (xi_bounded, eta_bounded, xi_large, eta_large, magnitude_exponent).
    Bounded points include eta = 0 exactly.
    """
    xi_b = rng.uniform(-3, 3, size=(19, n))
    eta_b = rng.uniform(0, 3, size=n)
    eta_b[: max(1, n // 10)] = 0.0

    blocks = [slice(0, 9), slice(9, 18), slice(18, 19)]
    xi_l = rng.uniform(-1, 1, size=(19, n))
    eta_l = rng.uniform(0, 1, size=n)
    expo = rng.uniform(*scale_exp, size=n)
    mag = 10.0 ** expo
    active = rng.integers(0, 2, size=(4, n)).astype(bool)
    active[rng.integers(0, 4, size=n), np.arange(n)] = True
    for b, sl in enumerate(blocks):
        d = rng.normal(size=(sl.stop - sl.start, n))
        d /= np.linalg.norm(d, axis=0)
        xi_l[sl] = np.where(active[b], d * mag, xi_l[sl])
    eta_l = np.where(active[3], mag, eta_l)
    return xi_b, eta_b, xi_l, eta_l, expo


def hessian_min_eig(model: EnergyModel, xi, eta) -> np.ndarray:
    """Smallest eigenvalue of the 20x20 Hessian at each sample (columns of xi)."""
    n = xi.shape[1]
    H = np.empty((n, 20, 20))
    for k in range(20):
        dxi = np.zeros_like(xi)
        deta = np.zeros(n)
        if k < 19:
            dxi[k] = 1.0
        else:
            deta[:] = 1.0
        hx, he = model.hess_vec(xi, eta, dxi, deta)
        H[:, :19, k] = hx.T
        H[:, 19, k] = he
    H = 0.5 * (H + np.transpose(H, (0, 2, 1)))
    return np.linalg.eigvalsh(H)[:, 0]


def check_hypotheses(model: EnergyModel, n: int = 200, seed: int = 0, growth_cap: float = 100.0,
                     sublinear_tol: float = 0.05) -> HypothesisReport:
    """Sample-based verification of the structural hypotheses on ``model``.

    Checks, each reported with a margin that is nonnegative on success:

    growth_two_sided   single constant c with S/c - c <= e <= c S + c; margin growth_cap - c
    theta_sublinear    max theta/S over the largest-magnitude samples, must fall
                       below ``sublinear_tol`` and not increase with magnitude
    dual_growth        c with |e_F|^(p/(p-1)) + |e_zeta|^(p/(p-2)) + |e_w|^(p/(p-3)) <= c S + c;
                       margin growth_cap - c
    theta_floor        min theta - delta
    hessian            min eigenvalue of the Hessian - c_e (bounded samples)
    """
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    xi_b, eta_b, xi_l, eta_l, expo = sample_points(n, rng)
    xi = np.concatenate([xi_b, xi_l], axis=1)
    eta = np.concatenate([eta_b, eta_l])
    S = growth_measure(model, xi, eta)
    e = model.eval(xi, eta)
    g, theta = model.grad(xi, eta)
    checks = []

    # c >= max(e/(S+1), (S+1)/(e+... )) : smallest single constant in both directions
    c_up = np.max((e - 1.0) / (S + 1.0))
    with np.errstate(divide="ignore"):
        low = (e + 1.0) / np.maximum(S - 0.0, 1e-300)
    c_lo = np.min(np.where(S > 1.0, low, np.inf))
    c1 = max(1.0, c_up, 1.0 / c_lo if c_lo > 0 else np.inf)
    if np.any(e < -c1):
        c1 = np.inf
    checks.append(Check("growth_two_sided", c1, growth_cap - c1))

    large = expo[: xi_l.shape[1]]
    S_l, th_l = S[n:], theta[n:]
    top = large >= np.quantile(large, 0.8)
    mid = (large >= np.quantile(large, 0.4)) & (large < np.quantile(large, 0.6))
    r_top = float(np.max(th_l[top] / S_l[top]))
    r_mid = float(np.max(th_l[mid] / S_l[mid])) if np.any(mid) else np.inf
    margin2 = sublinear_tol - r_top if r_top <= r_mid * (1 + 1e-12) else -abs(r_top - r_mid)
    checks.append(Check("theta_sublinear", r_top, margin2))

    p = model.p
    if p > 3:
        dual = (
            np.sqrt(np.sum(g[0:9] ** 2, axis=0)) ** (p / (p - 1))
            + np.sqrt(np.sum(g[9:18] ** 2, axis=0)) ** (p / (p - 2))
            + np.abs(g[18]) ** (p / (p - 3))
        )
        c3 = max(1.0, float(np.max((dual - 1.0) / (S + 1.0))))
        checks.append(Check("dual_growth", c3, growth_cap - c3))
    else:
        checks.append(Check("dual_growth", np.inf, -np.inf, f"needs p > 3, model has p={p}"))

    th_min = float(np.min(theta))
    checks.append(Check("theta_floor", th_min, th_min - model.delta + 1e-14))

    lam = hessian_min_eig(model, xi_b, eta_b)
    lam_min = float(np.min(lam))
    checks.append(Check("hessian", lam_min, lam_min - model.c_e * (1 - 1e-12)))
    return HypothesisReport(model.name, checks)
