"""Time marching, interpolants and checkpoints."""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Union

import numpy as np

from . import grid as g
from .constitutive import EnergyModel, model_from_dict, model_to_dict
from .varstep import State, StepConfig, StepFailure, StepReport, solve_step

FORMAT_VERSION = 1
MAGIC = b"POLYTHERM-CHECKPOINT"
ORDERING = "xi = F(row-major 9), zeta(row-major 9), w; vectors/tensors component-major, grid C-order"

HeatSupply = Union[float, np.ndarray, Callable[[int, float], Union[float, np.ndarray]]]


class CheckpointError(IOError):
    pass


@dataclass
class Trajectory:
    """Iterates of one run.

    ``states[k]`` is the iterate at step ``first_step + k``; ``reports`` cover
    every step from 1 and ``heat[k]`` is the supply used for the step into
    ``states[k + 1]``. A trajectory with ``first_step > 0`` is a restart tail
    (see :func:`tail`).
    """

    grid: g.GridSpec
    model: EnergyModel
    cfg: StepConfig
    states: list[State] = field(default_factory=list)
    reports: list[StepReport] = field(default_factory=list)
    heat: list[np.ndarray] = field(default_factory=list)
    failure: str | None = None
    first_step: int = 0

    @property
    def h(self) -> float:
        return self.cfg.h

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def T(self) -> float:
        return self.states[-1].t

    @property
    def nsteps(self) -> int:
        return self.first_step + len(self.states) - 1

    def increments(self) -> np.ndarray:
        """||U^j - U^{j-1}||^2 per step."""
        return np.array([
            g.inner(self.grid, b.U - a.U, b.U - a.U) for a, b in zip(self.states[:-1], self.states[1:])
        ])

    def telescoped(self) -> np.ndarray:
        """Running sum of ||U^j - U^{j-1}||^2, with a leading zero."""
        return np.concatenate([[0.0], np.cumsum(self.increments())])


def step_count(T: float, h: float) -> int:
    """N with T = N h; raises if T is not an integer multiple of h."""
    if T < 0 or h <= 0:
        raise ValueError("need T >= 0 and h > 0")
    N = round(T / h)
    if abs(N * h - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"T = {T} is not an integer multiple of h = {h}")
    return int(N)


def _heat(r: HeatSupply, j: int, t: float, grid: g.GridSpec) -> np.ndarray:
    val = r(j, t) if callable(r) else r
    return np.array(np.broadcast_to(np.asarray(val, dtype=float), grid.n))


def extend(traj: Trajectory, r: HeatSupply, nsteps: int, raise_on_failure: bool = True) -> Trajectory:
    """Append ``nsteps`` steps to ``traj`` in place; r is sampled at the start of each step."""
    U = traj.states[-1]
    j0 = traj.nsteps
    for k in range(nsteps):
        j = j0 + k + 1
        rj = _heat(r, j, U.t, traj.grid)
        try:
            U_new, rep = solve_step(U, rj, traj.cfg, traj.model)
        except (StepFailure, ValueError) as exc:
            traj.failure = f"step {j}: {exc}"
            if raise_on_failure:
                raise
            return traj
        # keep the time grid exact: t_j = j h
        U = replace(U_new, t=j * traj.cfg.h)
        traj.states.append(U)
        traj.reports.append(rep)
        traj.heat.append(rj)
    return traj


def run(init: State, r: HeatSupply, T: float, cfg: StepConfig, model: EnergyModel,
        raise_on_failure: bool = True) -> Trajectory:
    """March from ``init`` (taken at t = 0) to time T = N h."""
    N = step_count(T, cfg.h)
    traj = Trajectory(init.grid, model, cfg, [replace(init, t=0.0)])
    return extend(traj, r, N, raise_on_failure)


# ---------------------------------------------------------------------------
# interpolants


def tail(traj: Trajectory) -> Trajectory:
    """Restart tail: the last state only, with the full report history."""
    return Trajectory(traj.grid, traj.model, traj.cfg, [traj.states[-1]], list(traj.reports), [],
                      traj.failure, traj.nsteps)


def _locate(traj: Trajectory, t: float) -> tuple[int, float]:
    if traj.first_step:
        raise ValueError("interpolants need the full trajectory, not a restart tail")
    h, T = traj.h, traj.T
    if not (0.0 <= t <= T + 1e-12 * max(1.0, T)):
        raise ValueError(f"t = {t} outside [0, {T}]")
    j = min(max(math.ceil(t / h - 1e-12), 1), traj.nsteps) if traj.nsteps else 0
    return j, (t - (j - 1) * h) / h


def interp_linear(traj: Trajectory, t: float) -> np.ndarray:
    """Piecewise-linear interpolant of U = (v, xi, eta), shape (23, ...)."""
    j, s = _locate(traj, t)
    if j == 0:
        return traj.states[0].U
    a, b = traj.states[j - 1].U, traj.states[j].U
    if s == 0.0:
        return a
    if s == 1.0:
        return b
    return a + s * (b - a)


def interp_constant(traj: Trajectory, t: float) -> np.ndarray:
    """Piecewise-constant interpolant: U^j on ((j-1)h, jh], U^0 at t = 0."""
    if t == 0.0:
        _locate(traj, t)
        return traj.states[0].U
    j, _ = _locate(traj, t)
    return traj.states[j].U


# ---------------------------------------------------------------------------
# checkpoints
#
# layout: MAGIC line, "version N" line, header-length line, JSON header,
# little-endian float64 blocks (per state: u, v, xi, eta, then per step: r),
# then "sha256 <hex>\n" over everything before it.


def _header(traj: Trajectory) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "ordering": ORDERING,
        "grid": traj.grid.to_dict(),
        "model": model_to_dict(traj.model),
        "step_config": traj.cfg.to_dict(),
        "times": [s.t for s in traj.states],
        "reports": [r.to_dict() for r in traj.reports],
        "failure": traj.failure,
        "first_step": traj.first_step,
    }


def checkpoint_bytes(traj: Trajectory) -> bytes:
    head = json.dumps(_header(traj), sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC + b"\n")
    buf.write(f"version {FORMAT_VERSION}\n".encode())
    buf.write(f"header {len(head)}\n".encode())
    buf.write(head + b"\n")
    for s in traj.states:
        for a in (s.u, s.v, s.xi, s.eta):
            buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    for r in traj.heat:
        buf.write(np.ascontiguousarray(r, dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + b"sha256 " + hashlib.sha256(body).hexdigest().encode() + b"\n"


def checkpoint_save(traj: Trajectory, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(traj))


def checkpoint_load(path) -> Trajectory:
    data = Path(path).read_bytes()
    cut = data.rfind(b"sha256 ")
    if cut < 0 or not data.endswith(b"\n"):
        raise CheckpointError(f"{path}: missing checksum trailer")
    body, digest = data[:cut], data[cut + 7:-1].decode(errors="replace")
    if hashlib.sha256(body).hexdigest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (file corrupted)")
    f = io.BytesIO(body)
    if f.readline().rstrip(b"\n") != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version = f.readline().decode().split()
    if version != ["version", str(FORMAT_VERSION)]:
        raise CheckpointError(f"{path}: unsupported format {' '.join(version)}")
    nhead = int(f.readline().decode().split()[1])
    head = json.loads(f.read(nhead))
    f.read(1)
    grid = g.GridSpec.from_dict(head["grid"])
    model = model_from_dict(head["model"])
    cfg = StepConfig(**head["step_config"])
    npts = grid.npoints

    def block(ncomp):
        raw = f.read(8 * ncomp * npts)
        if len(raw) != 8 * ncomp * npts:
            raise CheckpointError(f"{path}: truncated field data")
        shape = ((ncomp,) if ncomp > 1 else ()) + grid.n
        return np.frombuffer(raw, dtype="<f8").astype(float).reshape(shape)

    states = []
    for t in head["times"]:
        u, v, xi, eta = block(3), block(3), block(19), block(1)
        states.append(State(grid, u, v, xi, eta, t))
    heat = [block(1) for _ in range(len(states) - 1)]
    if f.read():
        raise CheckpointError(f"{path}: trailing data before checksum")
    reports = [StepReport.from_dict(d) for d in head["reports"]]
    return Trajectory(grid, model, cfg, states, reports, heat, head["failure"], head["first_step"])
