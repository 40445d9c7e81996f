"""Coefficients, fragmentation kernels, nonlinearities and periodic controls.

Everything here is immutable after construction. The structural assumptions
on the nonlinear feedbacks are exposed as executable checks returning an
:class:`AssumptionReport` rather than raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq


class ModelError(ValueError):
    """Base class for invalid model inputs."""


class ConstraintError(ModelError):
    """A structural constraint on the coefficients is violated."""


class DomainError(ModelError):
    """An argument lies outside the domain of an operation."""


class AssumptionError(DomainError):
    """A structural assumption needed by an analysis does not hold."""


# ---------------------------------------------------------------------------
# power-law coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerLaw:
    """Power-law coefficients tau(x) = tau x^nu, beta(x) = beta x^gamma, mu(x) = mu."""

    tau: float
    nu: float
    beta: float
    gamma: float
    mu: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ConstraintError(f"tau must be > 0, got {self.tau}")
        if not self.beta > 0:
            raise ConstraintError(f"beta must be > 0, got {self.beta}")
        if not self.gamma > 0:
            raise ConstraintError(f"gamma must be > 0, got {self.gamma}")
        if not self.mu >= 0:
            raise ConstraintError(f"mu must be >= 0, got {self.mu}")
        if not self.gamma + 1.0 - self.nu > 0:
            raise ConstraintError(
                "existence condition gamma + 1 - nu > 0 violated "
                f"(gamma={self.gamma}, nu={self.nu})"
            )

    @property
    def k(self) -> float:
        """Dilation parameter 1/(gamma + 1 - nu)."""
        return 1.0 / (self.gamma + 1.0 - self.nu)

    def growth(self, x):
        return self.tau * np.asarray(x, dtype=float) ** self.nu

    def fragmentation_rate(self, x):
        return self.beta * np.asarray(x, dtype=float) ** self.gamma

    def replace(self, **changes) -> "PowerLaw":
        values = dict(tau=self.tau, nu=self.nu, beta=self.beta, gamma=self.gamma, mu=self.mu)
        values.update(changes)
        return PowerLaw(**values)


def derive_params(tau, nu, beta, gamma, mu=0.0) -> PowerLaw:
    """Validate the coefficients and attach the dilation parameter."""
    return PowerLaw(float(tau), float(nu), float(beta), float(gamma), float(mu))


# ---------------------------------------------------------------------------
# fragmentation kernel
# ---------------------------------------------------------------------------

CONSTANT_TWO = "constant-two"
TABULATED = "bounded-tabulated"


@dataclass(frozen=True, eq=False)
class Kernel:
    """Self-similar fragmentation kernel kappa on [0, 1].

    Use :meth:`constant_two` or :meth:`tabulated`; the tabulated constructor
    rescales the values so that the first moment of the piecewise-linear
    interpolant is exactly one.
    """

    kind: str
    nodes: np.ndarray | None = None
    values: np.ndarray | None = None
    symmetric: bool = True
    kappa_lo: float = 2.0
    kappa_hi: float = 2.0

    @classmethod
    def constant_two(cls) -> "Kernel":
        return cls(CONSTANT_TWO)

    @classmethod
    def tabulated(cls, nodes, values, sym_tol=1e-12) -> "Kernel":
        z = np.asarray(nodes, dtype=float)
        v = np.asarray(values, dtype=float)
        if z.ndim != 1 or z.shape != v.shape or z.size < 2:
            raise DomainError("kernel nodes and values must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(z) <= 0) or z[0] != 0.0 or z[-1] != 1.0:
            raise DomainError("kernel nodes must increase strictly from 0 to 1")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise DomainError("bounded kernel requires 0 < kappa_lo <= kappa(z) on [0, 1]")
        first = _pl_moment(z, v, 1.0)
        v = v / first
        mirrored = np.interp(1.0 - z, z, v)
        symmetric = bool(np.allclose(mirrored, v, rtol=sym_tol, atol=0.0))
        z.setflags(write=False)
        v.setflags(write=False)
        return cls(TABULATED, z, v, symmetric, float(v.min()), float(v.max()))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == CONSTANT_TWO:
            return np.full_like(z, 2.0)
        return np.interp(z, self.nodes, self.values)

    @property
    def n0(self) -> float:
        """Mean number of fragments."""
        return kernel_moment(self, 0.0)


def _pl_moment(z, v, alpha):
    # exact integral of z^alpha times the piecewise-linear interpolant
    z0, z1 = z[:-1], z[1:]
    slope = (v[1:] - v[:-1]) / (z1 - z0)
    icpt = v[:-1] - slope * z0
    a1, a2 = alpha + 1.0, alpha + 2.0
    total = icpt * (z1**a1 - z0**a1) / a1 + slope * (z1**a2 - z0**a2) / a2
    return float(total.sum())


def kernel_moment(kernel: Kernel, alpha: float) -> float:
    """c_alpha = int_0^1 z^alpha kappa(z) dz."""
    if alpha < 0:
        raise DomainError(f"kernel moment order must be >= 0, got {alpha}")
    if kernel.kind == CONSTANT_TWO:
        return 2.0 / (alpha + 1.0)
    return _pl_moment(kernel.nodes, kernel.values, float(alpha))


# ---------------------------------------------------------------------------
# nonlinear feedback functions
# ---------------------------------------------------------------------------


def _xp(x):
    return math if isinstance(x, (float, int)) else np


_FAMILIES = {
    # name: (required params, value, derivative)
    "exp-decay": (("a",), lambda m, x, a: a * m.exp(-x), lambda m, x, a: -a * m.exp(-x)),
    "shifted-gaussian-quartic": (
        (),
        lambda m, x: 1.0 + math.exp(-1.0) - m.exp(-(x**4)),
        lambda m, x: 4.0 * x**3 * m.exp(-(x**4)),
    ),
    "linear": (("c",), lambda m, x, c: c * x, lambda m, x, c: c + 0.0 * x),
    "prion-sigmoid": (
        ("a", "b", "s"),
        lambda m, x, a, b, s: a * (b - m.exp(-(x**2) / s)),
        lambda m, x, a, b, s: a * (2.0 * x / s) * m.exp(-(x**2) / s),
    ),
    "constant": (("c",), lambda m, x, c: c + 0.0 * x, lambda m, x, c: 0.0 * x),
}

FAMILIES = tuple(_FAMILIES)


@dataclass(frozen=True)
class Nonlinearity:
    """A named closed-form feedback function with its exact derivative.

    >>> f = Nonlinearity("exp-decay", {"a": 2.0})
    >>> round(f(0.0), 12), round(f.derivative(0.0), 12)
    (2.0, -2.0)
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise DomainError(f"unknown nonlinearity family {self.family!r}; known: {FAMILIES}")
        required = _FAMILIES[self.family][0]
        missing = [name for name in required if name not in self.params]
        extra = [name for name in self.params if name not in required]
        if missing or extra:
            raise DomainError(
                f"{self.family}: missing parameters {missing}, unexpected parameters {extra}"
            )
        object.__setattr__(self, "params", {k: float(self.params[k]) for k in required})

    def _args(self):
        return [self.params[k] for k in _FAMILIES[self.family][0]]

    def __call__(self, x):
        if not isinstance(x, (float, int)):
            x = np.asarray(x, dtype=float)
        return _FAMILIES[self.family][1](_xp(x), x, *self._args())

    def derivative(self, x):
        if not isinstance(x, (float, int)):
            x = np.asarray(x, dtype=float)
        return _FAMILIES[self.family][2](_xp(x), x, *self._args())

    def inverse(self, y: float, hi: float = 1.0) -> float:
        """Inverse of an increasing nonlinearity on [0, inf)."""
        if self.family == "linear":
            return y / self.params["c"]
        lo = 0.0
        if self(lo) > y:
            raise DomainError(f"{self.family}: value {y} below f(0)")
        while self(hi) < y:
            hi *= 2.0
            if hi > 1e12:
                raise DomainError(f"{self.family}: value {y} not attained")
        return brentq(lambda s: self(s) - y, lo, hi, xtol=1e-15, rtol=1e-15)

    def describe(self) -> str:
        args = ",".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.family}({args})"


# ---------------------------------------------------------------------------
# periodic controls
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PeriodicSeries:
    """T-periodic function: truncated Fourier series or piecewise-constant table."""

    period: float
    kind: str  # "fourier" | "piecewise"
    coeffs: tuple = ()  # fourier: (a0, (a1, b1), (a2, b2), ...)
    breaks: tuple = ()  # piecewise: left ends of the pieces in [0, T)
    levels: tuple = ()

    @classmethod
    def constant(cls, c: float, period: float = 1.0) -> "PeriodicSeries":
        return cls(float(period), "fourier", (float(c),))

    @classmethod
    def fourier(cls, a0, harmonics=(), period=1.0) -> "PeriodicSeries":
        harmonics = tuple((float(a), float(b)) for a, b in harmonics)
        return cls(float(period), "fourier", (float(a0),) + harmonics)

    @classmethod
    def piecewise(cls, breaks, levels, period=1.0) -> "PeriodicSeries":
        breaks = tuple(float(b) for b in breaks)
        if len(breaks) != len(levels) or not breaks or breaks[0] != 0.0:
            raise DomainError("piecewise control needs matching breaks/levels starting at 0")
        if any(b1 <= b0 for b0, b1 in zip(breaks, breaks[1:])) or breaks[-1] >= period:
            raise DomainError("piecewise breaks must increase strictly inside [0, T)")
        return cls(float(period), "piecewise", (), breaks, tuple(float(v) for v in levels))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "fourier":
            out = np.full_like(t, self.coeffs[0])
            w = 2.0 * np.pi / self.period
            for n, (a, b) in enumerate(self.coeffs[1:], start=1):
                out = out + a * np.cos(n * w * t) + b * np.sin(n * w * t)
        else:
            phase = np.mod(t, self.period)
            idx = np.searchsorted(self.breaks, phase, side="right") - 1
            out = np.asarray(self.levels)[idx]
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        """The bar-average (1/T) int_0^T of the series."""
        if self.kind == "fourier":
            return self.coeffs[0]
        widths = np.diff(np.append(self.breaks, self.period))
        return float(np.dot(widths, self.levels) / self.period)

    def lower_bound(self) -> float:
        if self.kind == "fourier":
            return self.coeffs[0] - sum(abs(a) + abs(b) for a, b in self.coeffs[1:])
        return min(self.levels)

    def minimum(self, samples: int = 4096) -> float:
        if self.kind == "piecewise":
            return min(self.levels)
        t = np.linspace(0.0, self.period, samples, endpoint=False)
        return float(np.min(self(t)))

    def maximum(self, samples: int = 4096) -> float:
        if self.kind == "piecewise":
            return max(self.levels)
        t = np.linspace(0.0, self.period, samples, endpoint=False)
        return float(np.max(self(t)))

    def is_constant(self) -> bool:
        if self.kind == "fourier":
            return all(a == 0 and b == 0 for a, b in self.coeffs[1:])
        return len(set(self.levels)) == 1


@dataclass(frozen=True, eq=False)
class PeriodicControl:
    """Growth multiplier V(t) > 0 and death multiplier R(t) >= 0, both T-periodic."""

    V: PeriodicSeries
    R: PeriodicSeries

    def __post_init__(self):
        if not math.isclose(self.V.period, self.R.period):
            raise DomainError("V and R must share the same period")
        if self.V.lower_bound() <= 0 and self.V.minimum() <= 0:
            raise DomainError("growth control V(t) must stay positive")
        if self.R.lower_bound() < 0 and self.R.minimum() < 0:
            raise DomainError("death control R(t) must stay nonnegative")

    @classmethod
    def constant(cls, V=1.0, R=0.0, period=1.0) -> "PeriodicControl":
        return cls(PeriodicSeries.constant(V, period), PeriodicSeries.constant(R, period))

    @property
    def period(self) -> float:
        return self.V.period


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------


@dataclass
class AssumptionReport:
    name: str
    passed: bool
    values: dict = field(default_factory=dict)
    messages: list = field(default_factory=list)


def find_roots(fun, lo, hi, samples=20001, merge_tol=1e-6):
    """Sign-change roots of ``fun`` on [lo, hi] refined by Brent's method.

    Returns ``(roots, degenerate)`` where ``degenerate`` flags an interval on
    which ``fun`` vanishes identically on consecutive samples.
    """
    xs = np.linspace(lo, hi, samples)
    ys = np.array([fun(float(x)) for x in xs])
    # zero relative to the neighbouring samples, so poles elsewhere do not inflate it
    near = np.abs(ys)
    near = np.maximum(np.r_[near[1:], near[-1]], np.r_[near[0], near[:-1]])
    zero = np.abs(ys) <= 1e-12 * (1.0 + near)
    degenerate = bool(np.any(zero[1:] & zero[:-1]))
    roots = [float(x) for x in xs[zero]]
    sign = np.sign(np.where(zero, 0.0, ys))
    for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
        roots.append(brentq(fun, xs[i], xs[i + 1], xtol=1e-14, rtol=1e-15))
    roots.sort()
    merged = []
    for r in roots:
        if not merged or r - merged[-1] > merge_tol:
            merged.append(r)
    return merged, degenerate


def check_assumption_f(f: Nonlinearity, mu: float, X: float = 50.0) -> AssumptionReport:
    """Finite root set of f = mu on [0, X] and limsup_{I -> inf} f(I) < mu.

    The limsup is replaced by the maximum of f over [X/2, X].
    """
    if not X > 0:
        raise DomainError("search interval end X must be positive")
    roots, degenerate = find_roots(lambda s: f(s) - mu, 0.0, X)
    proxy = float(np.max(f(np.linspace(X / 2, X, 2001))))
    report = AssumptionReport("f", True, {"roots": roots, "limsup_proxy": proxy, "mu": mu})
    if degenerate:
        report.passed = False
        report.messages.append("root set of f = mu is not finite")
    if not proxy < mu:
        report.passed = False
        report.messages.append(f"limsup proxy {proxy:.6g} is not below mu = {mu:.6g}")
    return report


def check_assumption_fg(f: Nonlinearity, g: Nonlinearity, p: float, q: float, k: float,
                        X: float = 50.0, w_max: float | None = None) -> AssumptionReport:
    """Conditions f(0) > g(0) = 0, f(inf) < g(inf) = inf and a unique equilibrium with psi' < 1."""
    from .analysis import psi_drift_death, psi_drift_death_derivative

    report = AssumptionReport("fg", True)
    f0, g0 = float(f(0.0)), float(g(0.0))
    fX, gX = float(f(X)), float(g(X))
    report.values.update(f0=f0, g0=g0, f_inf_proxy=fX, g_inf_proxy=gX)
    if not (f0 > g0 and g0 == 0.0):
        report.passed = False
        report.messages.append("f(0) > g(0) = 0 fails")
    if not fX < gX:
        report.passed = False
        report.messages.append("f(inf) < g(inf) fails on the search interval")
    w_max = w_max if w_max is not None else max(fX, f0) * 2.0
    fun = lambda w: psi_drift_death(w, f, g, p, q, k) - w
    roots, degenerate = find_roots(fun, 1e-9, w_max, samples=4001)
    report.values["equilibria"] = roots
    if degenerate or len(roots) != 1:
        report.passed = False
        report.messages.append(f"expected a unique fixed point of psi, found {len(roots)}")
    else:
        slope = psi_drift_death_derivative(roots[0], f, g, p, q, k)
        report.values["psi_prime"] = slope
        if not slope < 1:
            report.passed = False
            report.messages.append(f"psi'(W_inf) = {slope:.6g} is not < 1")
    return report


def check_assumption_prion(f: Nonlinearity, lam: float, delta: float, mu: float,
                           k: float) -> AssumptionReport:
    """Unique crossing x0 of f with delta mu / (lam - mu^(k+1) x) and 0 < f'(x0) < g'(x0)."""
    report = AssumptionReport("prion", True)
    x_end = lam / mu ** (k + 1)
    g = lambda x: delta * mu / (lam - mu ** (k + 1) * x)
    gp = lambda x: delta * mu ** (k + 2) / (lam - mu ** (k + 1) * x) ** 2
    roots, degenerate = find_roots(lambda x: f(x) - g(x), 0.0, x_end * (1 - 1e-9), samples=20001)
    report.values["roots"] = roots
    if degenerate or len(roots) != 1:
        report.passed = False
        report.messages.append(f"expected a unique x0 with f = g, found {len(roots)}")
        return report
    x0 = roots[0]
    fp, gpv = float(f.derivative(x0)), gp(x0)
    report.values.update(x0=x0, f_prime=fp, g_prime=gpv)
    if not 0 < fp < gpv:
        report.passed = False
        report.messages.append(f"0 < f'(x0) < g'(x0) fails: f'={fp:.6g}, g'={gpv:.6g}")
    cond = mu <= (k + 1.0 / mu) * delta
    report.values["mu_le_k_plus_inv_mu_delta"] = cond
    if not cond:
        report.messages.append("mu <= (k + 1/mu) delta does not hold; psi(0) < 0 is not guaranteed")
    return report
