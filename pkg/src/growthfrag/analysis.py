"""Equilibria, Lyapunov functionals, local stability, Hopf scans, cycles and Floquet rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, newton

from .model import (
    AssumptionError,
    DomainError,
    ModelError,
    Nonlinearity,
    PeriodicControl,
    PowerLaw,
    find_roots,
)
from .pde import NumericalError, rescaled_profile, write_csv
from .reduced import ReducedParams, Trajectory, make_rhs


class ConsistencyError(RuntimeError):
    """Closed-form Jacobian disagrees with its finite-difference counterpart."""


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------


def _flat(prefix, value, out):
    if isinstance(value, dict):
        for k, v in value.items():
            _flat(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(value, (list, tuple, np.ndarray)) and not isinstance(value, str):
        arr = np.asarray(value)
        if arr.dtype == object or arr.ndim > 1:
            for i, v in enumerate(value):
                _flat(f"{prefix}[{i}]", v, out)
        else:
            out[prefix] = ";".join(_fmt(v) for v in arr.ravel())
    else:
        out[prefix] = _fmt(value)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (complex, np.complexfloating)):
        return f"{float(v.real)!r}{float(v.imag):+.17g}j"
    if isinstance(v, (int, float, np.integer, np.floating)):
        return repr(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v))
    return str(v)


class Report:
    """Mixin: flat ``key=value`` summary and two-column CSV export."""

    _skip: tuple = ()

    def as_flat(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name in self._skip:
                continue
            _flat(f.name, getattr(self, f.name), out)
        return out

    def summary(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.as_flat().items()) + "\n"

    def to_csv(self, path):
        write_csv(path, ("key", "value"), self.as_flat().items())


# ---------------------------------------------------------------------------
# steady states
# ---------------------------------------------------------------------------


@dataclass
class SteadyStateReport(Report):
    system: str
    equilibria: list = field(default_factory=list)  # dicts of component values
    residuals: list = field(default_factory=list)
    unique: bool = False
    roots: list = field(default_factory=list)  # I_inf, W_inf or Q_inf candidates
    messages: list = field(default_factory=list)

    @property
    def found(self) -> bool:
        return bool(self.equilibria)


def psi_drift_death(w, f: Nonlinearity, g: Nonlinearity, p, q, k):
    """psi(W) = f(W^(k(p-q)) g^-1(W))."""
    return float(f(w ** (k * (p - q)) * g.inverse(w)))


def psi_drift_death_derivative(w, f: Nonlinearity, g: Nonlinearity, p, q, k):
    gi = g.inverse(w)
    e = k * (p - q)
    inner = e * w ** (e - 1) * gi + w**e / float(g.derivative(gi))
    return inner * float(f.derivative(w**e * gi))


def prion_balance(f: Nonlinearity, lam, delta, mu, k):
    """x -> f(x) - delta mu / (lam - mu^(k+1) x) on [0, lam / mu^(k+1))."""
    return lambda x: float(f(x)) - delta * mu / (lam - mu ** (k + 1) * x)


def steady_states(system: str, params: ReducedParams, X: float = 50.0,
                  w_max: float | None = None) -> SteadyStateReport:
    """Positive equilibria of a reduced system.

    ``X`` bounds the search for the drift closure, ``w_max`` that for the
    drift-death closure.
    """
    params.validate(system)
    rep = SteadyStateReport(system)
    k, mu = params.k, params.mu
    fun = make_rhs(system, params)
    states = []
    if system in ("WZ", "WZ-perturbed", "WQ-drift"):
        roots, degenerate = find_roots(lambda s: float(params.f(s)) - mu, 0.0, X)
        rep.roots = [r for r in roots if r > 0]
        if degenerate:
            rep.messages.append("f = mu on an interval: equilibria are not isolated")
        scale = mu ** (k * params.p) * params.mp
        states = [[1.0, I / scale] for I in rep.roots]
        rep.unique = len(states) == 1 and not degenerate
        if not states:
            rep.messages.append(f"no root of f = mu on [0, {X}]")
    elif system in ("WQ", "WQ-perturbed"):
        f, g, p, q = params.f, params.g, params.p, params.q
        hi = w_max if w_max is not None else 2.0 * max(float(f(0.0)), float(f(X)))
        roots, degenerate = find_roots(lambda w: psi_drift_death(w, f, g, p, q, k) - w,
                                       1e-9, hi, samples=4001)
        rep.roots = roots
        states = [[w, w ** (-k * q) * g.inverse(w)] for w in roots]
        rep.unique = len(states) == 1 and not degenerate
        if not states:
            rep.messages.append(f"no fixed point of psi on (0, {hi}]")
    elif system == "VWQ":
        lam, delta, f = params.lam, params.delta, params.f
        end = lam / mu ** (k + 1)
        roots, degenerate = find_roots(prion_balance(f, lam, delta, mu, k), 0.0,
                                       end * (1 - 1e-9), samples=20001)
        rep.roots = roots
        states = [[(lam - mu ** (k + 1) * Q) / delta, mu, Q] for Q in roots if Q > 0]
        rep.unique = len(states) == 1 and not degenerate
        if not states:
            rep.messages.append(f"no root of the balance on [0, {end})")
    else:
        raise ModelError(f"steady states are not tabulated for {system}")
    names = {"VWQ": ("V", "W", "Q"), "WQ": ("W", "Q"), "WQ-perturbed": ("W", "Q"),
             "WQ-drift": ("W", "Q")}.get(system, ("W", "Z"))
    for s in states:
        res = float(np.max(np.abs(fun(0.0, np.array(s)))))
        rep.equilibria.append(dict(zip(names, s)))
        rep.residuals.append(res)
        if res >= 1e-10:
            rep.messages.append(f"equilibrium {s} has residual {res:.3e}")
    return rep


# ---------------------------------------------------------------------------
# Lyapunov functional for the WZ system
# ---------------------------------------------------------------------------


def lemma_f(x):
    """(4 - 2 sqrt(4 + x^2) + x^2) / (2 + (x/2) sqrt(4 + x^2) + x^2/2)."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(4.0 + x * x)
    out = (4.0 - 2.0 * r + x * x) / (2.0 + 0.5 * x * r + 0.5 * x * x)
    return float(out) if out.ndim == 0 else out


def omega(alpha: float) -> float:
    """Sharp constant in (a + b)^2 + (a + alpha b)^2 >= omega (a^2 + b^2).

    It is the smallest eigenvalue of [[2, 1 + alpha], [1 + alpha, 1 + alpha^2]].
    For alpha >= -1 it coincides with ``lemma_f(alpha - 1)``.
    """
    tr = 3.0 + alpha * alpha
    det = (1.0 - alpha) ** 2
    return float((tr - math.sqrt(max(tr * tr - 4.0 * det, 0.0))) / 2.0)


def g_alpha(beta, alpha):
    return ((beta + 1.0) ** 2 + (beta + alpha) ** 2) / (beta * beta + 1.0)


def beta_alpha(alpha):
    """Critical point of g_alpha; the minimizer when alpha >= -1."""
    return -0.5 * (alpha - 1.0 + math.sqrt(4.0 + (alpha - 1.0) ** 2))


def alphas_pm(p: float):
    if p == 1:
        raise DomainError("p = 1 has a scalar Z-equation; no two-square Lyapunov split")
    s = math.sqrt(p)
    return 1.0 / (s + 1.0), 1.0 / (s - 1.0)


@dataclass
class LyapunovValues:
    L: float
    D: float
    dLdt: float
    two_squares: float
    G: float
    F: float
    omega: float


def lyapunov_F(Z: float, params: ReducedParams) -> float:
    """F(Z) = int_1^Z (mu - f_p(z)) dz / z."""
    if Z < 1e-8:
        raise DomainError("F(Z) is evaluated for Z >= 1e-8 only")
    mu = params.mu
    val, _ = quad(lambda z: (mu - params.f_p(z)) / z, 1.0, Z, epsabs=1e-13, epsrel=1e-13, limit=200)
    return float(val)


def lyapunov(W: float, Z: float, params: ReducedParams, F: float | None = None) -> LyapunovValues:
    """L = 2 k mu G(W) + (alpha_+^2 + alpha_-^2) F(Z) and its dissipation for the WZ system.

    ``dLdt`` is the chain rule through the rhs; ``two_squares`` is minus the
    sum of squares it should equal; ``D`` is the coercive lower bound.
    """
    if not (W > 0 and Z > 0):
        raise DomainError("Lyapunov functional needs W, Z > 0")
    ap, am = alphas_pm(params.p)
    k, mu, p = params.k, params.mu, params.p
    G = W - 1.0 - math.log(W)
    Fz = lyapunov_F(Z, params) if F is None else F
    L = 2.0 * k * mu * G + (ap * ap + am * am) * Fz
    dW, dZ = make_rhs("WZ", params)(0.0, np.array([W, Z]))
    c = mu - float(params.f_p(Z))
    dLdt = 2.0 * k * mu * (1.0 - 1.0 / W) * dW + (ap * ap + am * am) * c / Z * dZ
    a = mu * (W - 1.0)
    sq = -((a + ap * math.sqrt(p) * c) ** 2) - (a + am * math.sqrt(p) * c) ** 2
    om = omega(am / ap)
    D = om * (a * a + ap * ap * p * c * c)
    return LyapunovValues(L, D, dLdt, sq, G, Fz, om)


def lyapunov_along(traj: Trajectory, params: ReducedParams) -> np.ndarray:
    """L at every sample of a WZ trajectory (F accumulated piecewise)."""
    W, Z = traj["W"], traj["Z"]
    F = np.empty_like(Z)
    F[0] = lyapunov_F(float(Z[0]), params)
    mu = params.mu
    for i in range(1, len(Z)):
        piece, _ = quad(lambda z: (mu - params.f_p(z)) / z, float(Z[i - 1]), float(Z[i]),
                        epsabs=1e-14, epsrel=1e-13)
        F[i] = F[i - 1] + piece
    ap, am = alphas_pm(params.p)
    return 2.0 * params.k * mu * (W - 1.0 - np.log(W)) + (ap * ap + am * am) * F


# ---------------------------------------------------------------------------
# local stability
# ---------------------------------------------------------------------------


@dataclass
class StabilityReport(Report):
    system: str
    equilibrium: dict
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    T: float
    D: float
    M: float | None = None
    classification: str = ""
    conditions: dict = field(default_factory=dict)
    fd_error: float = 0.0


def finite_difference_jacobian(fun, y, rel=1e-6):
    y = np.asarray(y, dtype=float)
    n = y.size
    J = np.empty((n, n))
    for j in range(n):
        h = rel * (abs(y[j]) if y[j] != 0 else 1.0)
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (fun(0.0, y + e) - fun(0.0, y - e)) / (2 * h)
    return J


def classify_2x2(T: float, D: float, tol: float = 1e-12) -> str:
    """Phase-portrait type of a planar equilibrium from trace and determinant."""
    scale = max(1.0, T * T, abs(D))
    if D < -tol * scale:
        return "saddle"
    if abs(D) <= tol * scale:
        return "degenerate (zero eigenvalue)"
    if abs(T) <= tol * scale:
        return "Hopf-marginal"
    disc = T * T - 4.0 * D
    side = "stable" if T < 0 else "unstable"
    if abs(disc) <= tol * scale:
        return f"{side} degenerate node"
    return f"{side} {'focus' if disc < 0 else 'node'}"


def routh_hurwitz(T: float, M: float, D: float) -> bool:
    """All roots of l^3 - T l^2 + M l - D in the open left half-plane."""
    return T < 0 and D < 0 and M * T - D < 0


def classify_3x3(eigs: np.ndarray, stable: bool) -> str:
    complex_pair = bool(np.any(np.abs(eigs.imag) > 1e-12 * max(1.0, np.max(np.abs(eigs)))))
    if stable:
        return "stable focus" if complex_pair else "stable node"
    re = eigs.real
    if np.any(np.abs(re) <= 1e-12):
        return "Hopf-marginal"
    if np.all(re > 0):
        return "unstable focus" if complex_pair else "unstable node"
    if complex_pair and np.all(re[np.abs(eigs.imag) > 0] > 0):
        return "unstable focus"
    return "saddle"


def jacobian_wz(W, Z, params: ReducedParams) -> np.ndarray:
    """Closed-form WZ Jacobian at an equilibrium (W = 1, f_p(Z) = mu)."""
    k, mu, p = params.k, params.mu, params.p
    fpp = float(params.f_p_prime(Z))
    return np.array([[-mu / k, fpp / k], [-(p - 1.0) * mu * Z, p * Z * fpp]])


def jacobian_wq(W, Q, params: ReducedParams) -> np.ndarray:
    k, p, q, f, g = params.k, params.p, params.q, params.f, params.g
    fp = float(f.derivative(W ** (k * p) * Q))
    gp = float(g.derivative(W ** (k * q) * Q))
    return np.array([
        [p * W ** (k * p) * Q * fp - W / k, W ** (k * p + 1) * fp / k],
        [Q - k * q * W ** (k * q - 1) * Q * Q * gp, -(W ** (k * q)) * Q * gp],
    ])


@dataclass
class PrionCoefficients:
    """Equilibrium quantities of the prion closure entering T, M, D."""

    V: float
    Q: float
    f: float
    fp: float
    k: float
    mu: float
    delta: float

    def jacobian(self, p) -> np.ndarray:
        V, Q, f, fp, k, mu, d = self.V, self.Q, self.f, self.fp, self.k, self.mu, self.delta
        return np.array([
            [-d - mu**k * Q * f, -k * mu ** (k - 1) * V * Q * (f + p * Q * fp), -(mu**k) * V * (f + Q * fp)],
            [mu / k * f, p * V * Q * fp - mu / k, mu / k * V * fp],
            [0.0, Q, 0.0],
        ])

    def T(self, p):
        return -self.delta - self.mu**self.k * self.Q * self.f - self.mu / self.k + p * self.V * self.Q * self.fp

    def M(self, p):
        V, Q, f, fp, k, mu, d = self.V, self.Q, self.f, self.fp, self.k, self.mu, self.delta
        return (-d * p * V * Q * fp + d * mu / k + mu ** (k + 1) * Q * f / k
                + mu**k * V * Q * f * f - mu * V * Q * fp / k)

    def D(self, p=None):
        V, Q, f, fp, k, mu, d = self.V, self.Q, self.f, self.fp, self.k, self.mu, self.delta
        return mu / k * V * Q * (d * fp - mu**k * f * f)

    def dT(self):
        return self.V * self.Q * self.fp

    def dM(self):
        return -self.delta * self.V * self.Q * self.fp

    def psi(self, p):
        return self.M(p) * self.T(p) - self.D()

    def dpsi(self, p):
        return self.dM() * self.T(p) + self.M(p) * self.dT()

    def p1(self):
        return (self.delta + self.mu / self.k + self.mu**self.k * self.Q * self.f) / (self.V * self.Q * self.fp)


def prion_coefficients(params: ReducedParams, equilibrium: dict | None = None) -> PrionCoefficients:
    if equilibrium is None:
        rep = steady_states("VWQ", params)
        if not rep.unique:
            raise AssumptionError("prion closure needs a unique positive equilibrium")
        equilibrium = rep.equilibria[0]
    Q = equilibrium["Q"]
    return PrionCoefficients(equilibrium["V"], Q, float(params.f(Q)), float(params.f.derivative(Q)),
                             params.k, params.mu, params.delta)


def local_stability(system: str, equilibrium: dict, params: ReducedParams,
                    fd_tol: float = 1e-5) -> StabilityReport:
    """Closed-form Jacobian, its finite-difference check and the classification."""
    fun = make_rhs(system, params)
    y = np.array(list(equilibrium.values()), dtype=float)
    res = float(np.max(np.abs(fun(0.0, y))))
    if res >= 1e-8:
        raise DomainError(f"not an equilibrium: residual {res:.3e}")
    conditions = {}
    M = None
    if system in ("WZ", "WZ-perturbed"):
        J = jacobian_wz(*y, params)
    elif system in ("WQ", "WQ-perturbed"):
        J = jacobian_wq(*y, params)
        k, p, q, f, g = params.k, params.p, params.q, params.f, params.g
        W, Q = y
        fp = float(f.derivative(W ** (k * p) * Q))
        gp = float(g.derivative(W ** (k * q) * Q))
        T_cf = Q * (p * W ** (k * p) * fp - W ** (k * q) * gp) - W / k
        D_cf = (W / k * Q * (W ** (k * q) * gp - W ** (k * p) * fp)
                + (q - p) * W ** (k * (p + q)) * Q * Q * fp * gp)
        dpsi = psi_drift_death_derivative(W, f, g, p, q, k)
        D_psi = W ** (k * q + 1) * Q * gp * (1.0 - dpsi) / k
        conditions.update(T_closed_form=T_cf, D_closed_form=D_cf, D_via_psi=D_psi,
                          psi_prime=dpsi, instability_condition=T_cf > 0)
    elif system == "VWQ":
        pc = prion_coefficients(params, equilibrium)
        J = pc.jacobian(params.p)
        M = pc.M(params.p)
        conditions.update(psi=pc.psi(params.p), p1=pc.p1())
    else:
        raise ModelError(f"no closed-form Jacobian for {system}")
    J_fd = finite_difference_jacobian(fun, y)
    err = float(np.max(np.abs(J - J_fd)) / max(1.0, np.max(np.abs(J))))
    if err > fd_tol:
        raise ConsistencyError(f"{system}: closed-form Jacobian off by {err:.3e} from finite differences")
    eigs = np.linalg.eigvals(J)
    eigs = eigs[np.lexsort((eigs.imag, eigs.real))]
    T, D = float(np.trace(J)), float(np.linalg.det(J))
    if J.shape == (2, 2):
        label = classify_2x2(T, D)
    else:
        stable = routh_hurwitz(conditions.get("T", T), M, D)
        conditions["routh_hurwitz_stable"] = stable
        label = classify_3x3(eigs, stable)
    return StabilityReport(system, dict(equilibrium), J, eigs, T, D, M, label, conditions, err)


def entropy_dissipation_ratio(params: ReducedParams, radius: float = 0.1, samples: int = 400,
                              seed: int = 0) -> float:
    """min D/L over random points of a ball around (1, Z_inf), excluding the centre."""
    rep = steady_states("WZ", params)
    Zinf = rep.equilibria[0]["Z"]
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(samples):
        r = radius * math.sqrt(rng.uniform(1e-4, 1.0))
        th = rng.uniform(0, 2 * math.pi)
        W, Z = 1.0 + r * math.cos(th), Zinf * (1.0 + r * math.sin(th))
        lv = lyapunov(W, Z, params)
        L_rel = lv.L - lyapunov(1.0, Zinf, params).L
        best = min(best, lv.D / L_rel)
    return best


# ---------------------------------------------------------------------------
# Hopf scan for the prion closure
# ---------------------------------------------------------------------------


@dataclass
class HopfReport(Report):
    p0: float
    p1: float
    psi0: float
    psi_p1: float
    D: float
    dT: float
    dM: float
    psi_second: float
    concave: bool
    a_prime: float
    b_at_p0: float
    c_at_p0: float
    assumption_holds: bool
    p_grid: np.ndarray
    psi_samples: np.ndarray
    messages: list = field(default_factory=list)


def hopf_scan(params: ReducedParams, samples: int = 101, xtol: float = 1e-12) -> HopfReport:
    """Locate the Hopf point p0 of the prion closure and certify transversality.

    The equilibrium does not depend on p; only the Jacobian does.
    """
    pc = prion_coefficients(params)
    k, mu, delta = pc.k, pc.mu, pc.delta
    p1 = pc.p1()
    psi0, psi1 = pc.psi(0.0), pc.psi(p1)
    psi2 = 2.0 * pc.dM() * pc.dT()
    cond = mu <= (k + 1.0 / mu) * delta
    messages = []
    if not cond:
        messages.append("mu <= (k + 1/mu) delta fails: psi(0) < 0 is not guaranteed")
    if not psi0 < 0:
        raise AssumptionError(f"psi(0) = {psi0:.6g} is not negative; no Hopf crossing in (0, p1)")
    if not psi1 > 0:
        raise AssumptionError(f"psi(p1) = {psi1:.6g} is not positive")
    p0 = brentq(pc.psi, 0.0, p1, xtol=xtol, rtol=1e-15)
    T0, M0, D0 = pc.T(p0), pc.M(p0), pc.D()
    # at p0 the cubic factors as (l^2 + b^2)(l - c): T = c, M = b^2, D = c b^2
    c, b2 = T0, M0
    a_prime = pc.dpsi(p0) / (2.0 * (b2 + c * c))
    grid = np.linspace(0.0, p1, samples)
    return HopfReport(p0, p1, psi0, psi1, D0, pc.dT(), pc.dM(), psi2, psi2 < 0, a_prime,
                      math.sqrt(max(b2, 0.0)), c, cond, grid, np.array([pc.psi(p) for p in grid]),
                      messages)


# ---------------------------------------------------------------------------
# limit cycles
# ---------------------------------------------------------------------------


@dataclass
class CycleReport(Report):
    detected: bool
    period: float
    period_drift: float
    amplitude_drift: float
    amplitude: dict
    crossings: int
    section: str
    messages: list = field(default_factory=list)
    crossing_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    return_points: np.ndarray = field(default_factory=lambda: np.empty(0))

    _skip = ("crossing_times", "return_points")


def detect_limit_cycle(traj: Trajectory, level: float, component: str = "W", burn_in: float = 0.0,
                       band: float = 0.01, min_crossings: int = 5, period_tol: float = 0.01,
                       amplitude_tol: float = 0.02, companion: str | None = None) -> CycleReport:
    """Poincare section ``component = level`` crossed upwards, with a hysteresis band.

    ``band`` is a fraction of the post burn-in amplitude of ``component``.
    The return map records ``companion`` (default: the next component) at
    each crossing.
    """
    keep = traj.t >= burn_in
    t = traj.t[keep]
    x = traj[component][keep]
    section = f"{component}={level!r} upward"
    if companion is None:
        names = traj.names
        companion = names[(names.index(component) + 1) % len(names)]
    other = traj[companion][keep]
    span = float(np.max(x) - np.min(x)) if x.size else 0.0
    empty = CycleReport(False, math.nan, math.nan, math.nan, {}, 0, section)
    if x.size < 3 or span <= 1e-9 * max(1.0, abs(level)):
        empty.messages.append("no oscillation after burn-in")
        return empty
    lo = level - band * span
    armed = x[0] < lo
    times, returns = [], []
    for i in range(1, x.size):
        if x[i] < lo:
            armed = True
        elif armed and x[i - 1] < level <= x[i]:
            s = (level - x[i - 1]) / (x[i] - x[i - 1])
            times.append(t[i - 1] + s * (t[i] - t[i - 1]))
            returns.append(other[i - 1] + s * (other[i] - other[i - 1]))
            armed = False
    times, returns = np.array(times), np.array(returns)
    report = CycleReport(False, math.nan, math.nan, math.nan, {}, len(times), section,
                         crossing_times=times, return_points=returns)
    if len(times) < min_crossings:
        report.messages.append(f"only {len(times)} section crossings after burn-in (need {min_crossings})")
        return report
    intervals = np.diff(times)[-3:]
    period = float(intervals.mean())
    report.period = period
    report.period_drift = float((intervals.max() - intervals.min()) / period)
    amps = {name: [] for name in traj.names}
    for a, b in zip(times[-4:-1], times[-3:]):
        sel = (t >= a) & (t <= b)
        for name in traj.names:
            seg = traj[name][keep][sel]
            amps[name].append(float(seg.max() - seg.min()))
    report.amplitude = {name: float(np.mean(v)) for name, v in amps.items()}
    main = np.array(amps[component])
    report.amplitude_drift = float((main.max() - main.min()) / main.mean())
    report.detected = bool(period > 0 and report.period_drift < period_tol
                           and report.amplitude_drift < amplitude_tol)
    if not report.detected:
        report.messages.append("section returns have not settled")
    return report


# ---------------------------------------------------------------------------
# Floquet versus Perron
# ---------------------------------------------------------------------------


@dataclass
class FloquetReport(Report):
    lambda_F: float
    lambda_bar: float  # Lambda(mean V, mean R)
    lambda_mean: float  # mean over a period of Lambda(V(t), R(t))
    W0: float
    shooting_residual: float
    iterations: int
    t: np.ndarray
    W: np.ndarray
    lambda0: float
    powerlaw: PowerLaw
    control: PeriodicControl

    _skip = ("t", "W", "powerlaw", "control")

    def growth_exponent(self) -> np.ndarray:
        """int_0^t (Lambda(W, R) - Lambda_F) on the orbit grid."""
        rate = _lambda_w(self.W, self.powerlaw, self.lambda0) - self.powerlaw.mu * self.control.R(self.t)
        inc = 0.5 * (rate[1:] + rate[:-1]) * np.diff(self.t)
        return np.concatenate(([0.0], np.cumsum(inc))) - self.lambda_F * self.t

    def profile(self, i: int, U, grid):
        """Floquet eigenvector U(W(t_i); .) exp(int (Lambda - Lambda_F)) on ``grid`` (nu = 1)."""
        if self.powerlaw.nu != 1:
            raise DomainError("the Floquet profile is materialized for nu = 1 only")
        g = self.growth_exponent()[i]
        return rescaled_profile(U, grid, float(self.W[i]), self.powerlaw.k) * math.exp(g)


def perron_lambda0(powerlaw: PowerLaw) -> float:
    """Lambda(1, 0) where a closed form exists."""
    if powerlaw.nu == 1:
        return powerlaw.tau
    if powerlaw.nu == 0 and powerlaw.gamma == 1:
        return math.sqrt(powerlaw.tau * powerlaw.beta)
    raise DomainError("Lambda(1, 0) has no closed form here; pass lambda0")


def _lambda_w(W, powerlaw: PowerLaw, lam0: float):
    return np.asarray(W) ** (powerlaw.k * powerlaw.gamma) * lam0


def floquet_compare(powerlaw: PowerLaw, control: PeriodicControl, lambda0: float | None = None,
                    steps: int = 4000, tol: float = 1e-13, max_iter: int = 500) -> FloquetReport:
    """Periodic W of dW/dt = (Lambda(W, 0)/k)(V - W) and the Floquet rate (1/T) int Lambda(W, R).

    The fixed point of the period map (classical RK4 with ``steps`` steps) is
    found by the secant method, falling back to Brent's method on
    P(W) - W over [min V, max V] when the secant iteration fails.
    """
    if powerlaw.nu != 1 and not (powerlaw.nu == 0 and powerlaw.gamma == 1):
        raise DomainError("Floquet comparison needs nu = 1, or nu = 0 with gamma = 1")
    if control.V.minimum() <= 0:
        raise DomainError("control V must be strictly positive")
    lam0 = perron_lambda0(powerlaw) if lambda0 is None else float(lambda0)
    T = control.period
    k = powerlaw.k
    dt = T / steps
    expo = k * powerlaw.gamma
    rate = lam0 / k
    # V at every RK4 stage time
    vs = [float(v) for v in control.V(np.linspace(0.0, T, 2 * steps + 1))]

    def orbit(w0, keep=False):
        w = float(w0)
        out = [w] if keep else None
        for i in range(steps):
            v0, vm, v1 = vs[2 * i], vs[2 * i + 1], vs[2 * i + 2]
            k1 = rate * w**expo * (v0 - w)
            y = w + 0.5 * dt * k1
            k2 = rate * y**expo * (vm - y)
            y = w + 0.5 * dt * k2
            k3 = rate * y**expo * (vm - y)
            y = w + dt * k3
            k4 = rate * y**expo * (v1 - y)
            w += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if keep:
                out.append(w)
        return np.array(out) if keep else w

    def gap(w0):
        return orbit(w0) - w0

    w0 = control.V.mean()
    it = 0
    try:
        w = float(newton(gap, w0, x1=orbit(w0), tol=tol * max(1.0, w0), maxiter=50))
        it = 1
    except (RuntimeError, ValueError, OverflowError):
        w = None
    if w is None or not w > 0:
        lo, hi = control.V.minimum(), control.V.maximum()
        w = lo if lo == hi else brentq(gap, lo, hi, xtol=1e-15, maxiter=max_iter)
    Wt = orbit(w, keep=True)
    resid = abs(float(Wt[-1]) - w)
    if resid > 1e-8 * max(1.0, w):
        raise NumericalError(f"periodic orbit not found: residual {resid:.3e} at W0={w}")
    t = np.linspace(0.0, T, steps + 1)
    rate_F = _lambda_w(Wt, powerlaw, lam0) - powerlaw.mu * control.R(t)
    lam_F = _periodic_mean(rate_F)
    tt = np.linspace(0.0, T, steps + 1)
    lam_mean = _periodic_mean(_lambda_w(control.V(tt), powerlaw, lam0) - powerlaw.mu * control.R(tt))
    lam_bar = float(_lambda_w(control.V.mean(), powerlaw, lam0) - powerlaw.mu * control.R.mean())
    return FloquetReport(lam_F, lam_bar, lam_mean, w, resid, it, t, Wt, lam0, powerlaw, control)


def _periodic_mean(values) -> float:
    # trapezoid over one period sampled with both ends; exact-order for periodic integrands
    v = np.asarray(values, dtype=float)
    return float(np.mean(v[:-1] + v[1:]) / 2.0)
