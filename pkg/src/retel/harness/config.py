"""Experiment configuration: a flat ``key = value`` file with comma lists."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..likelihood import Method

EXPERIMENTS = ("uniformity", "coverage", "kl", "lambda_convergence", "logratio_curve", "wilks", "small_area")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TauRule:
    """``log_n`` or a positive constant."""

    constant: float | None = None

    def value(self, n: int) -> float:
        return math.log(n) if self.constant is None else self.constant

    @property
    def label(self) -> str:
        return "log_n" if self.constant is None else f"{self.constant:g}"

    @classmethod
    def parse(cls, text: str) -> "TauRule":
        t = text.strip().lower().replace(" ", "")
        if t in ("log_n", "logn", "log(n)"):
            return cls(None)
        if t.startswith("constant"):
            t = t[len("constant") :]
        try:
            c = float(t)
        except ValueError:
            raise ConfigError(f"tau_rule entry {text!r} is neither log_n nor a number") from None
        if not (c > 0 and math.isfinite(c)):
            raise ConfigError(f"tau constant must be positive, got {text!r}")
        return cls(c)


# full-scale defaults per experiment
_DEFAULTS = {
    "uniformity": dict(reps=2000, n_values=(5, 20, 50, 100), s_values=(1.0, 5.0), l_values=(0.0,),
                       tau_rule=(TauRule(1.0), TauRule()), methods=("ETEL", "AETEL", "RETEL_f", "RETEL_r")),
    "coverage": dict(reps=2000, n_values=(5, 20, 50, 100), s_values=(0.5, 1.0, 5.0), l_values=(0.0, 2.0),
                     tau_rule=(TauRule(),), methods=("ETEL", "AETEL", "RETEL_f", "RETEL_r")),
    "kl": dict(reps=1000, n_values=(2, 4, 6, 8, 10), tau_rule=(TauRule(),), methods=("ETEL", "RETEL_f"),
               chains=2, steps=5000),
    "lambda_convergence": dict(reps=1, theta_values=(1.0, 3.0), m_max=12, tau_rule=(TauRule(1.0),), methods=("WETEL",)),
    "logratio_curve": dict(reps=1, tau_rule=(TauRule(1.0), TauRule(5.0), TauRule(25.0)), grid_points=601,
                           methods=("RETEL_f", "RETEL_r")),
    "wilks": dict(reps=2000, n_values=(200,), tau_rule=(TauRule(),), methods=("ETEL", "RETEL_f", "RETEL_r")),
    "small_area": dict(reps=1, tau_rule=(TauRule(),), methods=("EL", "ETEL", "RETEL_f", "RETEL_r"),
                       chains=4, steps=250000),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    reps: int = 1
    n_values: tuple = ()
    s_values: tuple = (1.0,)
    l_values: tuple = (0.0,)
    tau_rule: tuple = (TauRule(),)
    seed: int = 0
    threads: int = 1
    methods: tuple = ()
    out_path: str | None = None
    # experiment-specific knobs
    chains: int = 2
    steps: int = 5000
    grid_points: int = 2001
    theta_values: tuple = ()
    m_max: int = 12
    data_path: str | None = None
    emit_density: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
        for name in ("reps", "threads", "chains", "steps", "grid_points", "m_max"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v > 0):
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for n in self.n_values:
            if not (isinstance(n, int) and n >= 1):
                raise ConfigError(f"n_values entries must be positive integers, got {n!r}")
        for s in self.s_values:
            if not (s > 0 and math.isfinite(s)):
                raise ConfigError(f"s_values entries must be positive, got {s!r}")
        for v in (*self.l_values, *self.theta_values):
            if not math.isfinite(v):
                raise ConfigError("location values must be finite")
        if self.chains < 2 and self.experiment in ("kl", "small_area"):
            raise ConfigError("at least 2 chains are needed for the PSRF")
        if self.grid_points < 3:
            raise ConfigError("grid_points must be at least 3")
        if not self.tau_rule:
            raise ConfigError("tau_rule must list at least one rule")
        for m in self.methods:
            Method.parse(m)

    @classmethod
    def default(cls, experiment: str, **overrides) -> "ExperimentConfig":
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}")
        return cls(experiment=experiment, **{**_DEFAULTS[experiment], **overrides})

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    @property
    def method_list(self) -> list:
        return [Method.parse(m) for m in self.methods]


def _ints(v):
    return tuple(int(x) for x in v)


def _floats(v):
    return tuple(float(x) for x in v)


def _bool(v):
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


_PARSERS = {
    "experiment": lambda v: v.strip(),
    "reps": int,
    "n_values": lambda v: _ints(_split(v)),
    "s_values": lambda v: _floats(_split(v)),
    "l_values": lambda v: _floats(_split(v)),
    "tau_rule": lambda v: tuple(TauRule.parse(x) for x in _split(v)),
    "seed": int,
    "threads": int,
    "methods": lambda v: tuple(Method.parse(x).value for x in _split(v)),
    "out_path": lambda v: v.strip() or None,
    "chains": int,
    "steps": int,
    "grid_points": int,
    "theta_values": lambda v: _floats(_split(v)),
    "m_max": int,
    "data_path": lambda v: v.strip() or None,
    "emit_density": _bool,
}

assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)}


def _split(v: str):
    parts = [p.strip() for p in v.split(",")]
    if any(p == "" for p in parts):
        raise ValueError("empty list entry")
    return parts


def parse_config(text: str, experiment: str | None = None) -> ExperimentConfig:
    """Parse config text; values not given fall back to the experiment defaults.

    ``#`` starts a comment. ``experiment`` may come from the file or the
    caller; if both are given they must agree.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            raw[key] = _PARSERS[key](val)
        except ConfigError as e:
            raise ConfigError(f"line {lineno}: {e}") from None
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {val!r} ({e})") from None
    exp = raw.pop("experiment", None)
    if experiment is not None and exp is not None and exp != experiment:
        raise ConfigError(f"config is for {exp!r}, not {experiment!r}")
    exp = exp or experiment
    if exp is None:
        raise ConfigError("no experiment named")
    return ExperimentConfig.default(exp, **raw)


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text, experiment)
