"""Experiment configuration: flat dotted keys stored as TOML."""
from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import json
import math

import numpy as np
import tomli
import tomli_w

from .kernels import InteractionKernel, Potential

__all__ = ["DEFAULTS", "ExperimentConfig", "Finding", "ConfigError", "validate"]


class ConfigError(ValueError):
    pass


# every recognised key with its default; types are taken from the defaults
DEFAULTS = {
    "kernel.family": "log",
    "kernel.n": 1,
    "kernel.s": 0.5,
    "potential.family": "gaussian",
    "potential.alpha": 2.0,
    "potential.grid": [],
    "potential.values": [],
    "gamma": 1.0,
    "beta.override": -1.0,
    "run.seed": 0,
    "run.out_dir": "out",
    "run.threads": 1,
    "equilibrium.grid_size": 800,
    "equilibrium.domain": 0.0,
    "equilibrium.damping": 0.5,
    "equilibrium.tol": 1e-10,
    "equilibrium.max_iter": 2000,
    "sample.sampler": "auto",
    "sample.N": 1024,
    "sample.replicas": 100,
    "sample.frames": 1,
    "sample.burn_in": -1,
    "sample.thin": -1,
    "sample.keep": "auto",
    "stats.kind": "none",
    "stats.E": [0.0],
    "stats.window": [-5.0, 5.0],
    "stats.level": 0.01,
    "stats.thresholds": [-1.0, 0.0, 1.0],
    "stats.unfold": False,
    "stats.upsilon": [1.0],
    "stats.ks_max": 0.10,
    "stats.bins": 40,
}

_CHOICES = {
    "kernel.family": ("log", "riesz"),
    "potential.family": ("power", "gaussian", "tabulated"),
    "sample.sampler": ("auto", "mcmc", "tridiag", "iid"),
    "sample.keep": ("auto", "all", "bulk", "edge", "max"),
    "stats.kind": ("none", "bulk", "edge", "gumbel", "ratio", "wegner"),
}


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key, value):
    ref = DEFAULTS[key]
    if isinstance(ref, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if isinstance(ref, int):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) and not (
                isinstance(value, float) and value.is_integer()):
            raise ConfigError(f"{key} must be an integer")
        return int(value)
    if isinstance(ref, float):
        if isinstance(value, bool) or not isinstance(value, (int, float, np.number)):
            raise ConfigError(f"{key} must be a number")
        return float(value)
    if isinstance(ref, list):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key} must be a list of numbers")
        return [float(v) for v in value]
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string")
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """All run parameters as a flat ``{dotted.key: value}`` mapping.

    Unknown keys are rejected; missing keys take :data:`DEFAULTS`.
    """

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        full = dict(DEFAULTS)
        for k, v in self.values.items():
            if k not in DEFAULTS:
                raise ConfigError(f"unknown configuration key {k!r}")
            full[k] = _coerce(k, v)
        object.__setattr__(self, "values", full)

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values

    def __hash__(self):
        return hash(self.digest())

    def updated(self, **kw) -> "ExperimentConfig":
        """Copy with keys replaced; pass dotted keys through a dict: ``updated(**{"run.seed": 3})``."""
        v = dict(self.values)
        v.update({k: x for k, x in kw.items() if x is not None})
        return ExperimentConfig(v)

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        return cls(_flatten(tomli.loads(text)))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls(_flatten(tomli.load(fh)))

    def to_toml(self) -> str:
        lines = []
        for k in sorted(self.values):
            rhs = tomli_w.dumps({"v": self.values[k]}).strip()[len("v = "):]
            lines.append(f"{k} = {rhs}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_toml())

    def digest(self, keys=None) -> str:
        """SHA-256 of the canonical JSON of ``keys`` (all keys by default)."""
        sub = self.values if keys is None else {k: self.values[k] for k in keys}
        blob = json.dumps(sub, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    # model objects ---------------------------------------------------------

    def kernel(self) -> InteractionKernel:
        fam = self["kernel.family"]
        return InteractionKernel(fam, self["kernel.n"], self["kernel.s"] if fam == "riesz" else None)

    def potential(self) -> Potential:
        fam = self["potential.family"]
        n = self["kernel.n"]
        if fam == "tabulated":
            return Potential(fam, n=n, grid=tuple(self["potential.grid"]), values=tuple(self["potential.values"]))
        return Potential(fam, n=n, alpha=self["potential.alpha"])

    @property
    def beta_override(self):
        b = self["beta.override"]
        return None if b < 0 else b


@dataclass(frozen=True)
class Finding:
    level: str  # "error" or "warning"
    key: str
    message: str

    def __str__(self):
        return f"{self.level}: {self.key}: {self.message}"


def validate(config: ExperimentConfig) -> list[Finding]:
    """Check every precondition that can be checked before running."""
    out = []

    def err(k, m):
        out.append(Finding("error", k, m))

    def warn(k, m):
        out.append(Finding("warning", k, m))

    v = config.values
    for k, ch in _CHOICES.items():
        if v[k] not in ch:
            err(k, f"must be one of {', '.join(ch)}")
    if out:
        return out
    n = v["kernel.n"]
    if n not in (1, 2):
        err("kernel.n", "only dimensions 1 and 2 are supported")
        return out
    if v["kernel.family"] == "riesz" and not 0 < v["kernel.s"] < n:
        err("kernel.s", f"s must be < n and > 0 (s={v['kernel.s']}, n={n})")
    fam = v["potential.family"]
    if fam == "power" and not v["potential.alpha"] > 0:
        err("potential.alpha", "potential.alpha must be > 0")
    if fam == "tabulated":
        try:
            pot = config.potential()
        except ValueError as exc:
            err("potential.grid", str(exc))
        else:
            g, vals = pot.table_arrays()
            edge = min(vals[0] if n == 1 else np.inf, vals[-1])
            if math.exp(-edge) > 1e-8:
                warn("potential.grid", f"table truncates the tail of exp(-V) (exp(-V) = {math.exp(-edge):.2g} at the boundary)")
            if v["kernel.family"] == "log":
                ends = [g[-1]] + ([g[0]] if n == 1 else [])
                vend = [vals[-1]] + ([vals[0]] if n == 1 else [])
                growth = min(ve / math.log1p(abs(x)) if x != 0 else np.inf for x, ve in zip(ends, vend))
                if growth < 10.0:
                    warn("potential.values",
                         "slow growth: V - kappa*log(1+|x|) must stay bounded below and "
                         "|x|**kappa exp(-V) integrable for every kappa >= 0")
    if v["gamma"] < 0:
        err("gamma", "gamma must be >= 0")
    if out and any(f.level == "error" for f in out):
        return out

    N = v["sample.N"]
    if N < 1:
        err("sample.N", "N must be >= 1")
    R = v["sample.replicas"]
    if R < 1:
        err("sample.replicas", "need at least one replica")
    if v["sample.frames"] < 1:
        err("sample.frames", "need at least one frame")
    if not 0 < v["equilibrium.damping"] <= 1:
        err("equilibrium.damping", "damping must lie in (0, 1]")
    if v["equilibrium.grid_size"] < 10:
        err("equilibrium.grid_size", "grid too coarse")
    gauss1d = n == 1 and config.potential().is_power and v["potential.alpha"] == 2.0
    if v["sample.sampler"] == "tridiag":
        if not (gauss1d and v["kernel.family"] == "log"):
            err("sample.sampler", "the tridiagonal sampler needs the 1D log gas in x**2")
        beta = config.beta_override if config.beta_override is not None else v["gamma"] / max(N, 1)
        if not beta > 0:
            err("sample.sampler", "the tridiagonal sampler needs beta > 0")
    kind = v["stats.kind"]
    if kind in ("bulk", "edge", "gumbel") and R * v["sample.frames"] < 30:
        err("sample.replicas", "statistics need at least 30 replica samples")
    if kind == "bulk":
        if len(v["stats.E"]) != n:
            err("stats.E", f"E must have {n} coordinates")
        if R * v["sample.frames"] < 100:
            err("sample.replicas", "pair correlations need at least 100 replica samples")
        if n != 1:
            err("stats.kind", "bulk statistics are implemented for n = 1")
    if kind == "edge":
        if not config.potential().is_power:
            err("potential.family", "edge frames need a power potential")
        if N <= math.e:
            err("sample.N", "edge frames need N > e")
        if len(v["stats.upsilon"]) != n:
            err("stats.upsilon", f"upsilon must have {n} coordinates")
    if kind == "gumbel":
        if not gauss1d:
            err("potential.family", "the Gumbel statistic needs n = 1 and V = x**2")
        if N <= math.e:
            err("sample.N", "the Gumbel statistic needs N > e")
    if kind == "ratio" and R < 30:
        err("sample.replicas", "the partition ratio needs at least 30 replicas")
    return out
