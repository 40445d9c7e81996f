"""Flat ``key=value`` configuration with dotted sections.

Lines are ``section.name = value``; ``#`` starts a comment. Lists are comma
separated. Every key must be declared in :data:`SCHEMA`; unknown keys and
badly typed values raise :class:`ConfigError`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Grid
from .model import (
    CONSTANT_TWO,
    TABULATED,
    Kernel,
    Nonlinearity,
    PeriodicControl,
    PeriodicSeries,
    PowerLaw,
    derive_params,
)


class ConfigError(ValueError):
    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key: (parser, help)
SCHEMA = {
    "model.tau": (float, "growth prefactor"),
    "model.nu": (float, "growth exponent"),
    "model.beta": (float, "fragmentation prefactor"),
    "model.gamma": (float, "fragmentation exponent"),
    "model.mu": (float, "death rate"),
    "kernel.kind": (str, f"{CONSTANT_TWO} or {TABULATED}"),
    "kernel.nodes": (_floats, "tabulated kernel nodes on [0, 1]"),
    "kernel.values": (_floats, "tabulated kernel values"),
    "grid.n": (int, "cell count"),
    "grid.stretch": (float, "multiplier on the default x_max"),
    "grid.tail": (float, "eigenvector tail mass allowed beyond x_max"),
    "eigen.tol": (float, "eigenvalue drift tolerance"),
    "f.family": (str, "feedback family of f"),
    "f.a": (float, "parameter a of f"),
    "f.b": (float, "parameter b of f"),
    "f.s": (float, "parameter s of f"),
    "f.c": (float, "parameter c of f"),
    "g.family": (str, "feedback family of g"),
    "g.a": (float, "parameter a of g"),
    "g.b": (float, "parameter b of g"),
    "g.s": (float, "parameter s of g"),
    "g.c": (float, "parameter c of g"),
    "closure.p": (float, "moment exponent in f"),
    "closure.q": (float, "moment exponent in g"),
    "prion.lam": (float, "monomer source"),
    "prion.delta": (float, "monomer degradation"),
    "control.period": (float, "period of V and R"),
    "control.V.a0": (float, "mean of V"),
    "control.V.cos": (_floats, "cosine coefficients of V"),
    "control.V.sin": (_floats, "sine coefficients of V"),
    "control.R.a0": (float, "mean of R"),
    "control.R.cos": (_floats, "cosine coefficients of R"),
    "control.R.sin": (_floats, "sine coefficients of R"),
    "time.t_end": (float, "final time"),
    "time.dt": (float, "time step"),
    "time.sample_dt": (float, "sampling interval"),
    "ode.system": (str, "reduced system id"),
    "ode.y0": (_floats, "initial state"),
    "ode.stride": (int, "store every n-th step"),
    "pde.scenario": (str, "closure kind"),
    "pde.initial": (str, "eigen, lognormal, block or random"),
    "pde.W0": (float, "dilation of an eigen initial datum"),
    "pde.Q0": (float, "amplitude of an eigen initial datum"),
    "pde.median": (float, "log-normal median"),
    "pde.sigma": (float, "log-normal width"),
    "pde.mass": (float, "initial number of individuals"),
    "pde.lo": (float, "uniform block left end"),
    "pde.hi": (float, "uniform block right end"),
    "pde.monomer0": (float, "initial monomer quantity (prion)"),
    "pde.snapshots": (_floats, "snapshot times"),
    "pde.manifold": (_bool, "track eps_p and rho with a companion"),
    "pde.entropy": (str, "track the relative entropy with this H"),
    "cycle.burn_in": (float, "time discarded before the section analysis"),
    "cycle.level": (float, "section level (default: equilibrium W)"),
    "hopf.samples": (int, "psi samples on [0, p1]"),
}

MODEL_KEYS = ("model.tau", "model.nu", "model.beta", "model.gamma")


@dataclass
class Config:
    values: dict
    source: str = "<memory>"

    def __contains__(self, key):
        return key in self.values

    def get(self, key, default=None):
        return self.values.get(key, default)

    def __getitem__(self, key):
        return self.values[key]

    def require(self, *keys):
        missing = [k for k in keys if k not in self.values]
        if missing:
            raise ConfigError(f"{self.source}: missing keys: {', '.join(missing)}", missing)

    def echo(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(self.values.items())}

    # builders -------------------------------------------------------------

    def powerlaw(self) -> PowerLaw:
        self.require(*MODEL_KEYS)
        return derive_params(self["model.tau"], self["model.nu"], self["model.beta"],
                             self["model.gamma"], self.get("model.mu", 0.0))

    def kernel(self) -> Kernel:
        kind = self.get("kernel.kind", CONSTANT_TWO)
        if kind == CONSTANT_TWO:
            return Kernel.constant_two()
        if kind == TABULATED:
            self.require("kernel.nodes", "kernel.values")
            return Kernel.tabulated(self["kernel.nodes"], self["kernel.values"])
        raise ConfigError(f"kernel.kind must be {CONSTANT_TWO} or {TABULATED}, got {kind!r}")

    def grid(self, powerlaw, kernel, n: int | None = None) -> Grid:
        return Grid.for_powerlaw(powerlaw, kernel, n=n or self.get("grid.n", 2000),
                                 tail=self.get("grid.tail", 1e-10),
                                 stretch=self.get("grid.stretch", 1.0))

    def nonlinearity(self, name: str) -> Nonlinearity:
        self.require(f"{name}.family")
        params = {k.split(".", 1)[1]: v for k, v in self.values.items()
                  if k.startswith(name + ".") and k != f"{name}.family"}
        return Nonlinearity(self[f"{name}.family"], params)

    def series(self, name: str) -> PeriodicSeries:
        period = self.get("control.period", 1.0)
        a0 = self.get(f"control.{name}.a0", 1.0 if name == "V" else 0.0)
        cos = self.get(f"control.{name}.cos", ())
        sin = self.get(f"control.{name}.sin", ())
        n = max(len(cos), len(sin))
        cos = tuple(cos) + (0.0,) * (n - len(cos))
        sin = tuple(sin) + (0.0,) * (n - len(sin))
        return PeriodicSeries.fourier(a0, zip(cos, sin), period)

    def control(self) -> PeriodicControl:
        return PeriodicControl(self.series("V"), self.series("R"))

    def rng(self, seed: int) -> np.random.Generator:
        return np.random.default_rng(seed)


def parse_text(text: str, source: str = "<memory>") -> Config:
    values = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key=value")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in values:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            errors.append(f"line {lineno}: bad value for {key}: {exc}")
    if errors:
        raise ConfigError(f"{source}: " + "; ".join(errors))
    return Config(values, source)


def load(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_text(text, str(path))
