"""Refinement studies: drift and relative-entropy orders in h, Piola-residual order in dx."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import diagnostics as d
from . import nulllag
from .config import RunConfig
from .grid import GridSpec
from .march import Trajectory, run
from .presets import analytic_gradient, heat_supply, make_initial

WAVE_KEYS = ("amplitude", "velocity", "k", "eta0", "eta_amplitude")


def initial_state(cfg: RunConfig, grid: GridSpec | None = None):
    grid = grid or cfg.grid
    p = cfg.initial
    name = p["preset"]
    if name == "equilibrium":
        return make_initial(name, grid, eta0=p["eta0"])
    kw = {k: p[k] for k in WAVE_KEYS}
    if name == "offset-drift":
        kw["offset"] = p["offset"]
    return make_initial(name, grid, **kw)


def heat_field(cfg: RunConfig, grid: GridSpec | None = None) -> np.ndarray:
    p = dict(cfg.heat)
    return heat_supply(p.pop("preset"), grid or cfg.grid, **p)


def simulate(cfg: RunConfig, h: float | None = None, raise_on_failure: bool = False) -> Trajectory:
    step = cfg.step if h is None else replace(cfg.step, h=h)
    return run(initial_state(cfg), heat_field(cfg), cfg.T, step, cfg.make_model(), raise_on_failure)


def _simulate_level(args):
    cfg, h = args
    return simulate(cfg, h, raise_on_failure=True)


def piola_refinement(cfg: RunConfig, threshold: float | None = None) -> dict:
    """Piola residual norm of a frozen analytic F = grad y on each grid of the study."""
    threshold = cfg.study["piola_threshold"] if threshold is None else threshold
    amp = 0.0 if cfg.initial["preset"] == "equilibrium" else 0.05
    dxs, res = [], []
    for n in cfg.study["grids"]:
        grid = GridSpec((int(n),) * 3, cfg.grid.L)
        r = nulllag.piola_residual(grid, analytic_gradient(grid, amp))
        dxs.append(max(grid.dx))
        res.append(float(np.linalg.norm(r)))
    order = d.observed_order(dxs, res)
    return {"dx": np.array(dxs), "residual": np.array(res), "order": order, "threshold": threshold,
            "passed": order >= threshold}


@dataclass
class StudyResult:
    hs: np.ndarray
    drift: d.DriftCertificate
    relent: d.RelativeEntropyReport
    piola: dict
    gap: dict

    @property
    def passed(self) -> bool:
        return (self.drift.passed and self.relent.passed and self.piola["passed"]
                and self.gap["gap"] <= self.gap["bound"])

    def rows(self):
        """(quantity, level, h, dx, value, order, threshold, verdict) for study.csv."""
        out = []
        verdict = lambda ok: "PASS" if ok else "FAIL"
        dxg = ""
        for name, vals, order in (("cof_drift", self.drift.cof_final, self.drift.cof_order),
                                  ("det_drift", self.drift.det_final, self.drift.det_order)):
            for k, h in enumerate(self.drift.hs):
                out.append((name, k, h, dxg, vals[k], d.format_order(order), self.drift.threshold,
                            verdict(order >= self.drift.threshold)))
        for k, h in enumerate(self.relent.hs):
            out.append(("relative_entropy_max", k, h, dxg, self.relent.max_I[k], d.format_order(self.relent.order),
                        self.relent.threshold, verdict(self.relent.order >= self.relent.threshold)))
        for k, (h, fit) in enumerate(zip(self.relent.hs, self.relent.fits)):
            out.append(("gronwall_C1", k, h, dxg, fit.C1, "", "", verdict(fit.under)))
            out.append(("gronwall_C2", k, h, dxg, fit.C2, "", "", verdict(fit.under)))
            out.append(("gronwall_residual", k, h, dxg, fit.residual, "", "", verdict(fit.under)))
        p = self.piola
        for k, (dx, r) in enumerate(zip(p["dx"], p["residual"])):
            out.append(("piola_residual", k, "", dx, r, d.format_order(p["order"]), p["threshold"],
                        verdict(p["passed"])))
        out.append(("interpolant_gap", len(self.hs) - 1, self.hs[-1], dxg, self.gap["gap"], "", self.gap["bound"],
                    verdict(self.gap["gap"] <= self.gap["bound"])))
        return out


STUDY_HEADER = ("quantity", "level", "h", "dx", "value", "order", "threshold", "verdict")


def run_study(cfg: RunConfig, workers: int = 1) -> StudyResult:
    levels = sorted(cfg.study["levels"], reverse=True)
    if len(levels) < 3:
        raise ValueError("a refinement study needs at least 3 time-step levels")
    h_ref = levels[-1] / cfg.study["reference_factor"]
    jobs = [(cfg, h) for h in levels] + [(cfg, h_ref)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(_simulate_level, jobs))
    else:
        trajs = [_simulate_level(j) for j in jobs]
    ref = trajs.pop()
    thr = cfg.study["threshold"]
    drift = d.drift_certificate(trajs, thr)
    relent = d.relative_entropy_vs_reference(trajs, ref, cfg.diagnostics["M"], thr)
    return StudyResult(np.array(levels), drift, relent, piola_refinement(cfg), d.interpolant_gap(trajs[-1]))
