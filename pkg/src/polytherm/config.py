"""Run configuration: an INI-style file with named sections.

Every key is optional except ``[grid] n``, ``[time] T`` and ``[time] h``;
defaults are listed in ``SCHEMA``. Unknown sections or keys are errors.
Example::

    [grid]
    n = 16            # one value for all axes, or three
    L = 1 1 1

    [model]
    name = paper      # paper | quadratic | saddle
    delta = 0.1

    [initial]
    preset = smooth-wave
    amplitude = 0.02

    [time]
    T = 0.2
    h = 1e-3
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .constitutive import EnergyModel, make_model
from .grid import GridSpec
from .march import step_count
from .varstep import StepConfig


class ConfigError(ValueError):
    def __init__(self, msg, line=None):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


def _floats(s):
    return [float(x) for x in s.replace(",", " ").split()]


def _triple(cast):
    def conv(s):
        vals = [cast(float(x)) if cast is int else cast(x) for x in s.replace(",", " ").split()]
        if len(vals) == 1:
            vals *= 3
        if len(vals) != 3:
            raise ValueError("expected one or three values")
        return tuple(vals)
    return conv


# section -> key -> (converter, default); default None means required
SCHEMA = {
    "grid": {"n": (_triple(int), None), "L": (_triple(float), (1.0, 1.0, 1.0))},
    "model": {
        "name": (str, "paper"),
        "beta_zeta": (float, 1.0), "beta_w": (float, 1.0), "beta_eta": (float, 1.0),
        "delta": (float, 0.1),
        "p": (float, 4.0), "q": (float, 2.0), "rho": (float, 2.0), "ell": (float, 2.0),
    },
    "initial": {
        "preset": (str, "smooth-wave"),
        "amplitude": (float, 0.02), "velocity": (float, 0.0), "k": (int, 1),
        "eta0": (float, 1.0), "eta_amplitude": (float, 0.0), "offset": (float, 1e-2),
    },
    "heat": {
        "preset": (str, "zero"), "value": (float, 0.0), "amplitude": (float, 0.0),
        "width": (float, 0.1), "center": (_triple(float), (0.5, 0.5, 0.5)),
    },
    "time": {"T": (float, None), "h": (float, None)},
    "solver": {
        "newton_tol": (float, 1e-9), "newton_max": (int, 50), "cg_tol": (float, 1e-10),
        "cg_max": (int, 500), "backtrack_factor": (float, 0.5), "armijo": (float, 1e-4),
        "backtrack_max": (int, 40),
    },
    "output": {"dir": (str, "out"), "checkpoint": (str, "final")},
    "diagnostics": {
        "kappa": (float, 10.0), "lemma_c": (str, "sharp"), "M": (float, 3.0),
        "probe_samples": (int, 2000), "seed": (int, 0),
    },
    "study": {
        "levels": (_floats, [4e-3, 2e-3, 1e-3]), "grids": (_floats, [8, 16, 32]),
        "reference_factor": (int, 8), "threshold": (float, 0.8), "piola_threshold": (float, 1.8),
    },
}
REQUIRED_SECTIONS = ("grid", "time")


@dataclass
class RunConfig:
    grid: GridSpec
    model_name: str
    model_params: dict
    initial: dict
    heat: dict
    T: float
    step: StepConfig
    out_dir: Path
    checkpoint: str
    diagnostics: dict
    study: dict
    source: dict = field(default_factory=dict)

    def make_model(self) -> EnergyModel:
        return make_model(self.model_name, **self.model_params)

    @property
    def nsteps(self) -> int:
        return step_count(self.T, self.step.h)

    def lemma_constant(self, model: EnergyModel) -> float:
        """c used by the dissipation verdict: 'sharp' = min(1, c_e)/2, 'full' = min(1, c_e), or a number."""
        choice = self.diagnostics["lemma_c"]
        base = min(1.0, model.c_e)
        if choice == "sharp":
            return base / 2
        if choice == "full":
            return base
        return float(choice)


def _line_index(text: str) -> dict:
    """(section, key) -> line number, and (section, None) -> header line."""
    idx, sec = {}, None
    for k, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            sec = line[1:-1].strip()
            idx[(sec, None)] = k
        elif "=" in line and sec is not None:
            idx[(sec, line.split("=", 1)[0].strip())] = k
    return idx


def parse_config_text(text: str) -> RunConfig:
    lines = _line_index(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None,
                                   default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("cannot parse line (expected 'key = value')", lineno) from None

    vals = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, None)))
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", lines.get((sec, key)))
            conv = SCHEMA[sec][key][0]
            try:
                vals[(sec, key)] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}", lines.get((sec, key))) from None
    for sec in REQUIRED_SECTIONS:
        if not cp.has_section(sec):
            raise ConfigError(f"missing required section [{sec}]")
    out = {}
    for sec, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            if (sec, key) in vals:
                out[(sec, key)] = vals[(sec, key)]
            elif default is None:
                raise ConfigError(f"missing required key {key!r} in [{sec}]")
            else:
                out[(sec, key)] = default

    def where(sec, key):
        return lines.get((sec, key))

    def bad(sec, key, msg):
        raise ConfigError(f"[{sec}] {key}: {msg}", where(sec, key))

    try:
        grid = GridSpec(out[("grid", "n")], out[("grid", "L")])
    except ValueError as exc:
        raise ConfigError(f"[grid]: {exc}", where("grid", "n")) from None

    name = out[("model", "name")]
    if name == "paper":
        if out[("model", "p")] != 4.0:
            bad("model", "p", "the example energy fixes p = 4 through its |F|^4 term")
        if out[("model", "q")] < 2:
            bad("model", "q", "exponent q must satisfy q >= 2")
        if not out[("model", "rho")] > 1:
            bad("model", "rho", "exponent rho must satisfy rho > 1")
        if not out[("model", "ell")] > 1:
            bad("model", "ell", "exponent ell must satisfy ell > 1")
        for k in ("beta_zeta", "beta_w", "beta_eta", "delta"):
            if not out[("model", k)] > 0:
                bad("model", k, "must be positive")
        params = {k: out[("model", k)] for k in ("beta_zeta", "beta_w", "beta_eta", "delta", "q", "rho", "ell")}
    elif name in ("quadratic", "saddle"):
        if not out[("model", "delta")] > 0:
            bad("model", "delta", "must be positive")
        params = {"delta": out[("model", "delta")]}
    else:
        bad("model", "name", "unknown model (paper, quadratic or saddle)")

    T, h = out[("time", "T")], out[("time", "h")]
    if not h > 0:
        bad("time", "h", "time step must be positive")
    if T < 0:
        bad("time", "T", "final time must be nonnegative")
    try:
        step_count(T, h)
    except ValueError as exc:
        raise ConfigError(f"[time] T: {exc}", where("time", "T")) from None

    skeys = SCHEMA["solver"]
    try:
        step = StepConfig(h=h, **{k: out[("solver", k)] for k in skeys})
    except ValueError as exc:
        raise ConfigError(f"[solver]: {exc}", where("solver", next(iter(skeys)))) from None

    if not out[("diagnostics", "kappa")] > 0:
        bad("diagnostics", "kappa", "must be positive")
    if not out[("diagnostics", "M")] > 0:
        bad("diagnostics", "M", "must be positive")
    lc = out[("diagnostics", "lemma_c")]
    if lc not in ("sharp", "full"):
        try:
            if not float(lc) > 0:
                raise ValueError
        except ValueError:
            bad("diagnostics", "lemma_c", "use 'sharp', 'full' or a positive number")

    if out[("output", "checkpoint")] not in ("final", "full"):
        bad("output", "checkpoint", "use 'final' (last state and all reports) or 'full'")

    initial = {k: out[("initial", k)] for k in SCHEMA["initial"]}
    if initial["preset"] not in ("equilibrium", "smooth-wave", "offset-drift"):
        bad("initial", "preset", "unknown preset (equilibrium, smooth-wave or offset-drift)")
    heat = {k: out[("heat", k)] for k in SCHEMA["heat"]}
    if heat["preset"] not in ("zero", "constant", "bump"):
        bad("heat", "preset", "unknown preset (zero, constant or bump)")
    study = {k: out[("study", k)] for k in SCHEMA["study"]}
    if any(x <= 0 for x in study["levels"]):
        bad("study", "levels", "time steps must be positive")
    if study["reference_factor"] < 1:
        bad("study", "reference_factor", "must be at least 1")

    return RunConfig(
        grid=grid, model_name=name, model_params=params, initial=initial, heat=heat,
        T=T, step=step, out_dir=Path(out[("output", "dir")]),
        checkpoint=out[("output", "checkpoint")],
        diagnostics={k: out[("diagnostics", k)] for k in SCHEMA["diagnostics"]},
        study=study, source={f"{s}.{k}": v for (s, k), v in out.items()},
    )


def parse_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text())
