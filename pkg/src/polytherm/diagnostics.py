"""Certificates computed from trajectories: energy, dissipation, drift and relative entropy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grid as g
from . import nulllag
from .constitutive import EnergyModel
from .march import Trajectory
from .varstep import Constraint, State, relative_energy_density

EPS = np.finfo(float).eps
KAPPA = 10.0
EXACT_FLOOR = 1e3 * EPS


def relative_energy(U_ref: State, U: State, model: EnergyModel) -> float:
    """int |v_ref - v|^2/2 + e(xi_ref, eta_ref | xi, eta) dx."""
    dens = relative_energy_density(model, U_ref.v, U_ref.xi, U_ref.eta, U.v, U.xi, U.eta)
    return g.integrate(U.grid, dens)


def tol_d(report, kappa: float = KAPPA) -> float:
    """Declared discretisation tolerance kappa h dx^2 (1 + |e_xi|_inf) |v|_{W^1,2}."""
    return kappa * report.tol_d_unit


def observed_order(hs, errs, floor: float = EXACT_FLOOR) -> float:
    """Least-squares slope of log(err) against log(h); inf when every error is at roundoff level."""
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if np.all(errs <= floor):
        return float("inf")
    if np.any(errs <= 0):
        errs = np.maximum(errs, floor)
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def pairwise_orders(hs, errs, floor: float = EXACT_FLOOR) -> list[float]:
    out = []
    for k in range(len(hs) - 1):
        a, b = errs[k], errs[k + 1]
        if a <= floor and b <= floor:
            out.append(float("inf"))
        else:
            out.append(float(np.log(max(a, floor) / max(b, floor)) / np.log(hs[k] / hs[k + 1])))
    return out


def format_order(p: float) -> str:
    return "exact" if np.isinf(p) else f"{p:.4f}"


# ---------------------------------------------------------------------------
# energy


@dataclass
class EnergyLedger:
    step: np.ndarray
    t: np.ndarray
    total: np.ndarray
    kinetic: np.ndarray
    internal: np.ndarray
    relative_energy: np.ndarray
    dissipation_margin: np.ndarray
    heat: np.ndarray

    def rows(self):
        for k in range(len(self.step)):
            yield (int(self.step[k]), self.t[k], self.total[k], self.kinetic[k], self.internal[k],
                   self.relative_energy[k], self.dissipation_margin[k], self.heat[k])

    HEADER = ("step", "t", "total", "kinetic", "internal", "relative_energy", "dissipation_margin", "heat")


def energy_ledger(traj: Trajectory, c: float | None = None) -> EnergyLedger:
    """Per-node energies from the step reports; step-dependent entries are 0 at node 0.

    The dissipation margin uses ``c`` in place of the constant stored in the
    reports when given.
    """
    if traj.reports:
        reps = traj.reports
        kin = np.array([reps[0].kinetic_before] + [r.kinetic_after for r in reps])
        internal = np.array([reps[0].internal_before] + [r.internal_after for r in reps])
    else:
        s = traj.states[0]
        kin = np.array([0.5 * g.inner(traj.grid, s.v, s.v)])
        internal = np.array([g.integrate(traj.grid, traj.model.eval(s.xi, s.eta))])
    n = len(kin)
    pad = lambda xs: np.concatenate([[0.0], np.asarray(xs, dtype=float)])
    return EnergyLedger(
        step=np.arange(n),
        t=np.arange(n) * traj.h,
        total=kin + internal,
        kinetic=kin,
        internal=internal,
        relative_energy=pad([r.relative_energy for r in traj.reports]),
        dissipation_margin=pad([
            r.dissipation_margin if c is None else r.energy_before + r.heat_term - r.energy_after - c * r.delta_norm2
            for r in traj.reports
        ]),
        heat=pad([r.heat_term for r in traj.reports]),
    )


@dataclass
class DissipationCertificate:
    c: float
    margins: np.ndarray
    energy_change: np.ndarray
    tolerances: np.ndarray
    relative_energy: np.ndarray
    delta_norm2: np.ndarray

    @property
    def energy_ok(self) -> np.ndarray:
        """E^j - E^{j-1} - heat_j <= tol_d per step."""
        return self.energy_change <= self.tolerances

    @property
    def lemma_ok(self) -> np.ndarray:
        return self.margins >= -self.tolerances

    @property
    def passed(self) -> bool:
        return bool(np.all(self.energy_ok) and np.all(self.lemma_ok))

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.margins + self.tolerances)) if len(self.margins) else 0.0


def dissipation_certificate(traj: Trajectory, c: float | None = None, kappa: float = KAPPA) -> DissipationCertificate:
    """Per-step check of int I(U) + c|U - U0|^2 <= int I(U0) + heat + tol_d.

    ``heat`` = h int theta r / theta0 is the energy supplied during the step,
    so with r > 0 the total energy may rise while the inequality still holds.

    ``c`` defaults to min(1, c_e). The Taylor remainder of I only guarantees
    the left side with c/2 in place of c; pass ``c=min(1, c_e)/2`` for that
    sharp form.
    """
    if c is None:
        c = min(1.0, traj.model.c_e)
    reps = traj.reports
    before = np.array([r.energy_before for r in reps])
    after = np.array([r.energy_after for r in reps])
    heat = np.array([r.heat_term for r in reps])
    d2 = np.array([r.delta_norm2 for r in reps])
    return DissipationCertificate(
        c=c,
        margins=before + heat - after - c * d2,
        energy_change=after - before - heat,
        tolerances=np.array([tol_d(r, kappa) for r in reps]),
        relative_energy=np.array([r.relative_energy for r in reps]),
        delta_norm2=d2,
    )


def uniform_bound(traj: Trajectory) -> dict:
    """Left side of the uniform energy estimate and its a-priori bound E.

    lhs = sup_j (|v^j|^2 + int e^j) + sum_j |U^j - U^{j-1}|^2. With c =
    min(1, c_e)/2 the per-step relative energy controls c|dU|^2, so
    E = 2 int I(U^0) - inf_j int e^j + (int I(U^0) - int I(U^N) + sum heat)/c
    bounds it whenever each step dissipates.
    """
    led = energy_ledger(traj)
    incr = np.array([r.delta_norm2 for r in traj.reports])
    sup = float(np.max(2 * led.kinetic + led.internal))
    lhs = sup + float(np.sum(incr))
    c = min(1.0, traj.model.c_e) / 2
    heat = float(np.sum(led.heat))
    E = float(2 * led.total[0] + max(0.0, -np.min(led.internal)) + max(0.0, heat)
              + (led.total[0] - led.total[-1] + heat) / c)
    return {"lhs": lhs, "E": E, "sum_increments": float(np.sum(incr)), "passed": lhs <= E * (1 + 1e-12)}


# ---------------------------------------------------------------------------
# constraints and drift


@dataclass
class DriftLedger:
    t: np.ndarray
    cof_drift: np.ndarray
    det_drift: np.ndarray
    piola_cof: np.ndarray
    piola_det: np.ndarray
    curl: np.ndarray
    curl_rel: np.ndarray
    feasibility: np.ndarray
    entropy_identity: np.ndarray
    gradient_defect: np.ndarray
    transport_cof: np.ndarray
    transport_det: np.ndarray

    HEADER = ("step", "t", "cof_drift", "det_drift", "piola_cof", "piola_det", "curl", "curl_rel",
              "feasibility", "entropy_identity", "gradient_defect", "transport_cof", "transport_det")

    def rows(self):
        for k in range(len(self.t)):
            yield (k, self.t[k], self.cof_drift[k], self.det_drift[k], self.piola_cof[k], self.piola_det[k],
                   self.curl[k], self.curl_rel[k], self.feasibility[k], self.entropy_identity[k],
                   self.gradient_defect[k], self.transport_cof[k], self.transport_det[k])


def minors_drift(state: State) -> tuple[float, float]:
    grid = state.grid
    F = state.F
    return (g.norm(grid, state.zeta - nulllag.cof(F)), g.norm(grid, state.w - nulllag.det(F)))


def feasibility_residual(grid, U0: State, U: State, h: float) -> float:
    """max |xi - xi0 - h A(F0) v|, recomputed from the stored states."""
    return float(np.max(np.abs(U.xi - (U0.xi + h * Constraint(grid, U0.F).apply(U.v)))))


def entropy_identity_residual(model, U0: State, U: State, r, h: float) -> float:
    """max |eta - eta0 - h r/theta(xi0, eta0)| relative to the size of the terms.

    Written in difference form so the result sits at roundoff rather than eps/h.
    """
    rate = np.asarray(r, dtype=float) / model.theta(U0.xi, U0.eta)
    res = U.eta - U0.eta - h * rate
    scale = max(float(np.max(np.abs(U0.eta))), float(np.max(np.abs(U.eta))),
                h * float(np.max(np.abs(rate))), 1e-300)
    return float(np.max(np.abs(res)) / scale)


def drift_ledger(traj: Trajectory) -> DriftLedger:
    grid, h = traj.grid, traj.h
    cols = {k: [] for k in DriftLedger.HEADER[1:]}
    for j, s in enumerate(traj.states):
        cd, dd = minors_drift(s)
        pr = nulllag.piola_residual(grid, s.F)
        curl = g.curl_residual(grid, s.F)
        cols["t"].append(s.t)
        cols["cof_drift"].append(cd)
        cols["det_drift"].append(dd)
        cols["piola_cof"].append(float(np.linalg.norm(pr[9:18])))
        cols["piola_det"].append(float(pr[18]))
        cols["curl"].append(curl)
        cols["curl_rel"].append(curl / max(g.norm(grid, s.F), 1e-300))
        cols["gradient_defect"].append(s.gradient_defect())
        if j == 0:
            for k in ("feasibility", "entropy_identity", "transport_cof", "transport_det"):
                cols[k].append(0.0)
            continue
        s0 = traj.states[j - 1]
        cols["feasibility"].append(feasibility_residual(grid, s0, s, h))
        cols["entropy_identity"].append(entropy_identity_residual(traj.model, s0, s, traj.heat[j - 1], h))
        tr = nulllag.transport_residual(grid, s0.F, s.F, s.v, h)
        cols["transport_cof"].append(tr["cof_total"])
        cols["transport_det"].append(tr["det_total"])
    return DriftLedger(**{k: np.array(v) for k, v in cols.items()})


@dataclass
class DriftCertificate:
    hs: np.ndarray
    cof_final: np.ndarray
    det_final: np.ndarray
    cof_order: float
    det_order: float
    cof_pairwise: list
    det_pairwise: list
    threshold: float = 0.8

    @property
    def passed(self) -> bool:
        return self.cof_order >= self.threshold and self.det_order >= self.threshold


def drift_certificate(trajs: list[Trajectory], threshold: float = 0.8) -> DriftCertificate:
    """Final-time drift |zeta - cof F|, |w - det F| across time-step levels and its observed order."""
    if len(trajs) < 3:
        raise ValueError("drift certificate needs at least 3 refinement levels")
    trajs = sorted(trajs, key=lambda tr: -tr.h)
    T = trajs[0].T
    for tr in trajs:
        if tr.grid != trajs[0].grid or abs(tr.T - T) > 1e-12 * max(1, T):
            raise ValueError("levels must share grid and final time")
    hs = np.array([tr.h for tr in trajs])
    fin = np.array([minors_drift(tr.states[-1]) for tr in trajs])
    return DriftCertificate(
        hs=hs,
        cof_final=fin[:, 0],
        det_final=fin[:, 1],
        cof_order=observed_order(hs, fin[:, 0]),
        det_order=observed_order(hs, fin[:, 1]),
        cof_pairwise=pairwise_orders(hs, fin[:, 0]),
        det_pairwise=pairwise_orders(hs, fin[:, 1]),
        threshold=threshold,
    )


def interpolant_gap(traj: Trajectory, component=slice(3, 12), quad_points: int = 3) -> dict:
    """|| linear - constant interpolant ||_{L2(Q_T)} for a block of U (default the F block).

    Computed by Gauss-Legendre quadrature in time on every interval, and
    compared with the closed form sqrt(h/3 sum_j |dF_j|^2) and with
    sqrt(h E) where E = sum_j |U^j - U^{j-1}|^2.
    """
    grid, h = traj.grid, traj.h
    xq, wq = np.polynomial.legendre.leggauss(quad_points)
    s_nodes, s_w = 0.5 * (xq + 1), 0.5 * wq
    total = 0.0
    closed = 0.0
    for j in range(1, len(traj.states)):
        a = traj.states[j - 1].U[component]
        b = traj.states[j].U[component]
        d2 = g.inner(grid, b - a, b - a)
        closed += h / 3 * d2
        for s, wgt in zip(s_nodes, s_w):
            gap = (a + s * (b - a)) - b
            total += h * wgt * g.inner(grid, gap, gap)
    E = float(np.sum(traj.increments()))
    return {"gap": float(np.sqrt(total)), "closed_form": float(np.sqrt(closed)),
            "bound": float(np.sqrt(h * E)), "E": E}


# ---------------------------------------------------------------------------
# relative entropy against a reference


class ReferenceError_(ValueError):
    pass


def gamma_m_check(ref: Trajectory, M: float) -> float:
    """Largest of |F|, |v|, |eta| over the reference; raises if it exceeds M."""
    worst = 0.0
    for s in ref.states:
        worst = max(
            worst,
            float(np.max(np.sqrt(np.sum(s.F**2, axis=(0, 1))))),
            float(np.max(np.sqrt(np.sum(s.v**2, axis=0)))),
            float(np.max(np.abs(s.eta))),
        )
    if worst > M:
        raise ReferenceError_(f"reference leaves Gamma_M: max(|F|, |v|, |eta|) = {worst:.4g} > M = {M}")
    return worst


def relative_entropy_density(model, v, F, eta, vb, Fb, etab):
    """|v - vb|^2/2 + e(Phi(F), eta | Phi(Fb), etab), Taylor remainder about the reference."""
    xi, xib = nulllag.phi(F), nulllag.phi(Fb)
    return relative_energy_density(model, v, xi, eta, vb, xib, etab)


def relative_entropy_series(traj: Trajectory, ref: Trajectory) -> np.ndarray:
    """I_rel(t_j) on the nodes of ``traj``; ``ref`` must have a node at each of them."""
    ratio = traj.h / ref.h
    k = int(round(ratio))
    if abs(k - ratio) > 1e-9 or k < 1:
        raise ValueError("reference step must divide the trajectory step")
    if ref.nsteps < k * traj.nsteps:
        raise ValueError("reference too short")
    out = []
    for j, s in enumerate(traj.states):
        sb = ref.states[j * k]
        dens = relative_entropy_density(traj.model, s.v, s.F, s.eta, sb.v, sb.F, sb.eta)
        out.append(g.integrate(traj.grid, dens))
    return np.array(out)


@dataclass
class GronwallFit:
    C1: float
    C2: float
    I0: float
    t0: float
    residual: float
    under: bool
    npoints: int

    def envelope(self, t):
        return self.C1 * self.I0 * np.exp(self.C2 * (np.asarray(t) - self.t0))


def gronwall_fit(t, I, fit_fraction: float = 0.5, floor: float = EXACT_FLOOR) -> GronwallFit:
    """Fit log I = a + b t by least squares over I > floor.

    The growth rate C2 = max(b, 0) and the constant C1 are taken from the
    first ``fit_fraction`` of the usable points only; the envelope
    C1 I0 exp(C2 (t - t0)) is then tested on all usable points, so the
    later part is a genuine prediction. I0, t0 are the first usable point.
    ``residual`` is the rms misfit of the log-linear fit.
    """
    t, I = np.asarray(t, dtype=float), np.asarray(I, dtype=float)
    ok = I > floor
    if np.count_nonzero(ok) < 3:
        return GronwallFit(1.0, 0.0, 0.0, 0.0, 0.0, bool(np.all(I <= floor)), int(np.count_nonzero(ok)))
    tt, logI = t[ok], np.log(I[ok])
    m = max(2, int(np.ceil(fit_fraction * len(tt))))
    b, a = np.polyfit(tt[:m], logI[:m], 1)
    C2 = max(float(b), 0.0)
    I0, t0 = float(np.exp(logI[0])), float(tt[0])
    C1 = float(np.max(np.exp(logI[:m] - np.log(I0) - C2 * (tt[:m] - t0))))
    env = C1 * I0 * np.exp(C2 * (tt - t0))
    resid = float(np.sqrt(np.mean((logI - (a + b * tt)) ** 2)))
    return GronwallFit(C1, C2, I0, t0, resid, bool(np.all(I[ok] <= env * (1 + 1e-9))), len(tt))


@dataclass
class RelativeEntropyReport:
    hs: np.ndarray
    series: list
    max_I: np.ndarray
    order: float
    fits: list
    gamma_max: float
    threshold: float = 0.8

    @property
    def passed(self) -> bool:
        return self.order >= self.threshold and all(f.under for f in self.fits)


def relative_entropy_vs_reference(trajs: list[Trajectory], ref: Trajectory, M: float,
                                  threshold: float = 0.8) -> RelativeEntropyReport:
    """Relative entropy of each level against a smooth reference run, its order in h and Gronwall fits.

    The relative quantities use Phi(F) of the numerical state rather than its
    independent zeta, w components.
    """
    gmax = gamma_m_check(ref, M)
    trajs = sorted(trajs, key=lambda tr: -tr.h)
    hs = np.array([tr.h for tr in trajs])
    series = [relative_entropy_series(tr, ref) for tr in trajs]
    maxI = np.array([float(np.max(s)) for s in series])
    fits = [gronwall_fit(tr.times, s) for tr, s in zip(trajs, series)]
    return RelativeEntropyReport(hs, series, maxI, observed_order(hs, maxI), fits, gmax, threshold)


# ---------------------------------------------------------------------------
# bound-lemma probes


PROBES = ("I_far", "I_near", "IV_far", "stress", "rel_stress", "rel_theta", "flux_velocity", "theta_ratio")


def probe_samples(n: int, M: float, rng: np.random.Generator, log_scale=(-3.0, 1.5)):
    """Reference points in Gamma_M and perturbed states at log-uniform distances.

    Returns ((v, F, eta), (vb, Fb, etab)) with sample index as the trailing axis.
    """
    def ball(shape, radius):
        d = rng.normal(size=shape)
        d /= np.linalg.norm(d.reshape(-1, shape[-1]), axis=0)
        return d * radius * rng.uniform(0, 1, size=shape[-1]) ** (1 / 3)

    Fb = ball((3, 3, n), M)
    vb = ball((3, n), M)
    etab = rng.uniform(0, M, size=n)
    mags = 10.0 ** rng.uniform(*log_scale, size=(3, n))
    F = Fb + rng.normal(size=(3, 3, n)) / 3 * mags[0]
    v = vb + rng.normal(size=(3, n)) / np.sqrt(3) * mags[1]
    eta = np.abs(etab + rng.normal(size=n) * mags[2])
    # a share of samples move only one block, so single-block growth is probed too
    only = rng.integers(0, 4, size=n)
    F = np.where(only == 1, Fb, F)
    v = np.where(only == 2, vb, v)
    eta = np.where(only == 3, etab, eta)
    return (v, F, eta), (vb, Fb, etab)


def probe_ratios(model: EnergyModel, sample, ref, R: float) -> dict:
    """Ratio of each bounded quantity to I(v, Phi(F), eta | vb, Phi(Fb), etab) per sample."""
    (v, F, eta), (vb, Fb, etab) = sample, ref
    xi, xib = nulllag.phi(F), nulllag.phi(Fb)
    I = relative_energy_density(model, v, xi, eta, vb, xib, etab)
    exi, th = model.grad(xi, eta)
    exib, thb = model.grad(xib, etab)
    dxi, deta = xi - xib, eta - etab
    hx, hth = model.hess_vec(xib, etab, dxi, deta)
    P, Pb = nulllag.dphi(F), nulllag.dphi(Fb)
    dP = P - Pb
    p, ell = model.p, model.ell
    nF = np.sqrt(np.sum(F**2, axis=(0, 1)))
    grow = nF**p + eta**ell + np.sum(v**2, axis=0)
    far = grow > R
    near_q = np.sum(dxi**2, axis=0) + deta**2 + np.sum((v - vb) ** 2, axis=0)
    far_iv = np.sqrt(np.sum((F - Fb) ** 2, axis=(0, 1))) ** p + np.abs(deta) ** ell + np.sum((v - vb) ** 2, axis=0)

    lhs = {
        "I_far": np.where(far, grow, np.nan),
        "I_near": np.where(~far, near_q, np.nan),
        "IV_far": np.where(far, far_iv, np.nan),
        "stress": np.sqrt(np.sum(np.einsum("Bia...,B...->ia...", dP, exi - exib) ** 2, axis=(0, 1))),
        "rel_stress": np.sqrt(np.sum((exi - exib - hx) ** 2, axis=0)),
        "rel_theta": np.abs(th - thb - hth),
        "flux_velocity": np.sqrt(np.sum(np.einsum("Bia...,i...->Ba...", dP, v - vb) ** 2, axis=(0, 1))),
        "theta_ratio": np.abs((1 / th - 1 / thb) * (th - thb)),
    }
    keep = I > 1e-12
    return {k: np.where(keep, val / np.where(keep, I, 1.0), np.nan) for k, val in lhs.items()}, keep


@dataclass
class ProbeReport:
    n: int
    maxima: dict
    maxima_doubled: dict
    excluded: int
    R: float
    stability: float = 1.5
    floor: float = 1e-9

    def stable(self, name) -> bool:
        a, b = self.maxima[name], self.maxima_doubled[name]
        if np.isnan(a) and np.isnan(b):
            return True  # region never sampled at either size
        if max(a, b) <= self.floor:
            return True  # term vanishes identically for this model; ratios are roundoff
        return bool(np.isfinite(a) and np.isfinite(b) and b <= self.stability * a + 1e-300)

    @property
    def passed(self) -> bool:
        return all(self.stable(k) for k in PROBES)

    def constants(self) -> dict:
        """Implied constants: K1 = 2/max, K2 = 1/max, K1' = 4/max, C's = max."""
        m = self.maxima_doubled
        return {
            "K1": 2 / m["I_far"], "K2": 1 / m["I_near"], "K1p": 4 / m["IV_far"],
            "C1": m["stress"], "C2": m["rel_stress"], "C3": m["rel_theta"], "C4": m["flux_velocity"],
            "C5": m["theta_ratio"],
        }


def bound_probes(model: EnergyModel, n: int = 4000, M: float = 3.0, R: float | None = None,
                 seed: int = 0, stability: float = 1.5) -> ProbeReport:
    """Maximum ratio of each bounded term to I over n and over 2n samples.

    R defaults to 16 (M^p + M^ell + M^2), so the far region sits well away
    from Gamma_M. Samples with I <= 1e-12 (coincident points) are excluded.
    A ratio whose maximum stays below 1e-9 at both sizes counts as stable: the
    term vanishes identically (rel_theta when theta is affine in eta).
    """
    if R is None:
        R = 16 * (M**model.p + M**model.ell + M**2)
    rng = np.random.default_rng(seed)
    s1, r1 = probe_samples(n, M, rng)
    s2, r2 = probe_samples(n, M, rng)
    rat1, keep1 = probe_ratios(model, s1, r1, R)
    rat2, keep2 = probe_ratios(model, s2, r2, R)

    def mx(a):
        return float(np.nanmax(a)) if np.any(np.isfinite(a)) else float("nan")

    maxima = {k: mx(rat1[k]) for k in PROBES}
    doubled = {k: mx(np.concatenate([rat1[k], rat2[k]])) for k in PROBES}
    excluded = int(np.count_nonzero(~keep1) + np.count_nonzero(~keep2))
    return ProbeReport(n, maxima, doubled, excluded, R, stability)
