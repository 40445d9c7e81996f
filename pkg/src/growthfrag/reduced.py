"""Finite-dimensional systems obtained by restricting the PDE to the eigenmanifold.

System ids and their state components:

==============  ===========  ==================================================
id              components   dynamics
==============  ===========  ==================================================
W-ODE           W            dW/dt = (tau W / k)(V2 - V1 W)
WZ              W, Z         pure drift closure written in Z = W^(kp) Q
WZ-perturbed    W, Z         same with f_p((1 + eps_p) Z)
WQ-drift        W, Q         pure drift closure in (W, Q)
WQ              W, Q         drift and death closure
WQ-perturbed    W, Q         same with moment mismatches eps_p, eps_q
VWQ             V, W, Q      prion closure with monomer quantity V
UP              U, P         zeroth/first moments for nu = 0, gamma = 1
==============  ===========  ==================================================

The nonlinear systems use the time normalization tau = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson

from .model import DomainError, ModelError, Nonlinearity, PeriodicControl, PowerLaw
from .pde import NumericalError, write_csv

COMPONENTS = {
    "W-ODE": ("W",),
    "WZ": ("W", "Z"),
    "WZ-perturbed": ("W", "Z"),
    "WQ-drift": ("W", "Q"),
    "WQ": ("W", "Q"),
    "WQ-perturbed": ("W", "Q"),
    "VWQ": ("V", "W", "Q"),
    "UP": ("U", "P"),
}
SYSTEMS = tuple(COMPONENTS)

_REQUIRED = {
    "W-ODE": (),
    "WZ": ("f", "p", "mp"),
    "WZ-perturbed": ("f", "p", "mp"),
    "WQ-drift": ("f", "p", "mp"),
    "WQ": ("f", "g", "p", "q"),
    "WQ-perturbed": ("f", "g", "p", "q"),
    "VWQ": ("f", "p", "lam", "delta"),
    "UP": ("control",),
}


def _zero(t):
    return 0.0


def _one(t):
    return 1.0


@dataclass(frozen=True, eq=False)
class ReducedParams:
    """Parameters shared by the reduced systems.

    ``mp`` and ``mq`` are the moments M_p, M_q of the unit-mass Perron
    profile. ``eps_p``/``eps_q`` are callables of time entering the
    perturbed systems; ``V1``/``V2`` are the controls of the W-ODE.
    """

    powerlaw: PowerLaw
    f: Nonlinearity | None = None
    g: Nonlinearity | None = None
    p: float | None = None
    q: float | None = None
    lam: float | None = None
    delta: float | None = None
    mp: float | None = None
    mq: float | None = None
    control: PeriodicControl | None = None
    V1: Callable = _one
    V2: Callable = _one
    eps_p: Callable = _zero
    eps_q: Callable = _zero

    @property
    def k(self) -> float:
        return self.powerlaw.k

    @property
    def mu(self) -> float:
        return self.powerlaw.mu

    def f_p(self, I):
        """f(I mu^(kp) M_p)."""
        return self.f(I * self.mu ** (self.k * self.p) * self.mp)

    def f_p_prime(self, I):
        s = self.mu ** (self.k * self.p) * self.mp
        return s * self.f.derivative(I * s)

    def validate(self, system: str):
        if system not in COMPONENTS:
            raise ModelError(f"unknown reduced system {system!r}; known: {SYSTEMS}")
        missing = [name for name in _REQUIRED[system] if getattr(self, name) is None]
        if missing:
            raise ModelError(f"system {system} needs parameters {missing}")
        if system not in ("W-ODE", "UP") and self.powerlaw.tau != 1.0:
            raise ModelError(f"system {system} is written for tau = 1")
        if system == "UP" and not (self.powerlaw.nu == 0 and self.powerlaw.gamma == 1):
            raise ModelError("the closed moment system needs nu = 0 and gamma = 1")


def make_rhs(system: str, params: ReducedParams) -> Callable:
    """Return ``fun(t, y) -> dy/dt`` for the named system."""
    params.validate(system)
    P = params
    k, mu = P.k, P.mu

    if system == "W-ODE":
        c = P.powerlaw.tau / k

        def fun(t, y):
            W = y[0]
            return np.array([c * W * (P.V2(t) - P.V1(t) * W)])

    elif system in ("WZ", "WZ-perturbed"):
        p = P.p
        eps = P.eps_p if system == "WZ-perturbed" else None

        def fun(t, y):
            W, Z = y
            fz = P.f_p((1.0 + eps(t)) * Z) if eps is not None else P.f_p(Z)
            return np.array([
                -W * (mu - fz) / k - mu / k * W * (W - 1.0),
                -p * Z * (mu - fz) - (p - 1.0) * mu * Z * (W - 1.0),
            ])

    elif system == "WQ-drift":
        kp = k * P.p

        def fun(t, y):
            W, Q = y
            return np.array([W / k * (P.f_p(W**kp * Q) - mu * W), mu * Q * (W - 1.0)])

    elif system in ("WQ", "WQ-perturbed"):
        kp, kq = k * P.p, k * P.q
        ep = P.eps_p if system == "WQ-perturbed" else None
        eq = P.eps_q if system == "WQ-perturbed" else None

        def fun(t, y):
            W, Q = y
            if ep is None:
                fi, gi = P.f(W**kp * Q), P.g(W**kq * Q)
            else:
                fi = P.f((1.0 + ep(t)) * W**kp * Q)
                gi = P.g((1.0 + eq(t)) * W**kq * Q)
            return np.array([W / k * (fi - W), Q * (W - gi)])

    elif system == "VWQ":
        kp, lam, delta = k * P.p, P.lam, P.delta

        def fun(t, y):
            V, W, Q = y
            fi = P.f((W / mu) ** kp * Q)
            return np.array([
                lam - V * (delta + fi * W**k * Q),
                W / k * (fi * V - W),
                Q * (W - mu),
            ])

    else:  # UP
        tau, beta, ctrl = P.powerlaw.tau, P.powerlaw.beta, P.control

        def fun(t, y):
            U, Pm = y
            r = mu * ctrl.R(t)
            return np.array([-r * U + beta * Pm, tau * ctrl.V(t) * U - r * Pm])

    return fun


def rhs(system: str, t: float, y, params: ReducedParams) -> np.ndarray:
    """Right-hand side of ``system`` at (t, y)."""
    return make_rhs(system, params)(t, np.asarray(y, dtype=float))


@dataclass
class ReducedState:
    system: str
    t: float
    y: np.ndarray

    def __getitem__(self, name):
        return self.y[COMPONENTS[self.system].index(name)]


@dataclass(eq=False)
class Trajectory:
    system: str
    t: np.ndarray
    y: np.ndarray  # shape (samples, components)

    @property
    def names(self):
        if self.system in COMPONENTS:
            return COMPONENTS[self.system]
        if self.system == "W-h":
            return ("W", "h")
        return tuple(f"y{i}" for i in range(self.y.shape[1]))

    def __getitem__(self, name) -> np.ndarray:
        return self.y[:, self.names.index(name)]

    def final(self) -> ReducedState:
        return ReducedState(self.system, float(self.t[-1]), self.y[-1].copy())

    def to_csv(self, path: str | Path, stride: int = 1):
        rows = ([t, *y] for t, y in zip(self.t[::stride], self.y[::stride]))
        write_csv(path, ("t",) + tuple(self.names), rows, comment=f"system={self.system}")


def _rk4(fun, t, y, dt):
    k1 = fun(t, y)
    k2 = fun(t + dt / 2, y + dt / 2 * k1)
    k3 = fun(t + dt / 2, y + dt / 2 * k2)
    k4 = fun(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), k1


def integrate(fun, y0, t_end: float, dt: float = 1e-3, *, t0: float = 0.0, stride: int = 1,
              system: str = "custom", positive: bool = True, max_rhs: float = 1e3,
              max_halvings: int = 12) -> Trajectory:
    """Classical RK4 with fixed step ``dt``.

    A step whose initial slope exceeds ``max_rhs (1 + |y|)`` in sup-norm is
    replaced by two half steps, recursively. Every ``stride``-th step is stored.
    Raises :class:`NumericalError` (carrying the last valid state) on
    non-finite values or, with ``positive``, on leaving the open orthant.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    y = np.array(y0, dtype=float)
    if positive and np.any(y <= 0):
        raise DomainError("initial state must be positive")
    n_steps = int(round((t_end - t0) / dt))
    ts, ys = [t0], [y.copy()]

    def advance(t, y, h, depth):
        new, k1 = _rk4(fun, t, y, h)
        if depth < max_halvings and np.max(np.abs(k1)) > max_rhs * (1.0 + np.max(np.abs(y))):
            mid = advance(t, y, h / 2, depth + 1)
            return advance(t + h / 2, mid, h / 2, depth + 1)
        return new

    for i in range(1, n_steps + 1):
        t = t0 + (i - 1) * dt
        new = advance(t, y, dt, 0)
        if not np.all(np.isfinite(new)) or (positive and np.any(new <= 0)):
            err = NumericalError(f"{system}: state left the positive orthant at t={t + dt:.6g}")
            err.last_state = ReducedState(system, t, y)
            raise err
        y = new
        if i % stride == 0 or i == n_steps:
            ts.append(t0 + i * dt)
            ys.append(y.copy())
    return Trajectory(system, np.array(ts), np.array(ys))


def simulate(system: str, params: ReducedParams, y0, t_end: float, dt: float = 1e-3,
             stride: int = 1, **kwargs) -> Trajectory:
    """Integrate a named reduced system."""
    if len(y0) != len(COMPONENTS.get(system, ())):
        raise ModelError(f"{system} expects components {COMPONENTS.get(system)}")
    positive = system != "UP" or kwargs.pop("positive", True)
    return integrate(make_rhs(system, params), y0, t_end, dt, stride=stride, system=system,
                     positive=positive, **kwargs)


def wq_to_wz(W, Q, p, k):
    """Change of variables Z = W^(kp) Q."""
    return W, W ** (k * p) * Q


def pushforward_wq_drift(W, Q, params: ReducedParams):
    """(dW/dt, dZ/dt) obtained from the WQ-drift rhs by the chain rule for Z = W^(kp) Q."""
    kp = params.k * params.p
    dW, dQ = make_rhs("WQ-drift", params)(0.0, np.array([W, Q]))
    dZ = kp * W ** (kp - 1) * Q * dW + W**kp * dQ
    return np.array([dW, dZ])


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def bernoulli_W(W0: float, V1: Callable, V2: Callable, t, powerlaw: PowerLaw) -> np.ndarray:
    """Closed-form W on the increasing time grid ``t`` (starting at 0).

    Running integrals use composite Simpson on ``t``.
    """
    if not W0 > 0:
        raise DomainError("W0 must be positive")
    t = np.asarray(t, dtype=float)
    c = powerlaw.tau / powerlaw.k
    v1 = np.broadcast_to(np.asarray(V1(t), dtype=float), t.shape)
    v2 = np.broadcast_to(np.asarray(V2(t), dtype=float), t.shape)
    e2 = np.exp(c * cumulative_simpson(v2, x=t, initial=0.0))
    denom = 1.0 + W0 * c * cumulative_simpson(v1 * e2, x=t, initial=0.0)
    if np.any(denom <= 0):
        raise NumericalError("Bernoulli denominator became nonpositive")
    return W0 * e2 / denom


@dataclass
class MomentSeries:
    t: np.ndarray
    values: np.ndarray  # moments along the W trajectory
    rhs: np.ndarray  # right-hand side of their evolution law


def moments_reduced(t, W, V: Callable, R: Callable, alpha: float, moments: Callable,
                    powerlaw: PowerLaw, lam0: float) -> MomentSeries:
    """Moments M_alpha[U] W^(k alpha) exp(int Lambda(W, R)) along a W trajectory.

    ``moments(a)`` returns M_a of the unit-mass Perron profile and ``lam0``
    is Lambda(1, 0). The returned ``rhs`` is
    alpha Lambda a_alpha V M_(alpha+nu-1) + (1 - alpha) Lambda b_alpha M_(alpha+gamma) - mu R M_alpha.
    """
    t, W = np.asarray(t, dtype=float), np.asarray(W, dtype=float)
    pl = powerlaw
    k, nu, gam, mu = pl.k, pl.nu, pl.gamma, pl.mu
    rv = np.broadcast_to(np.asarray(R(t), dtype=float), t.shape)
    vv = np.broadcast_to(np.asarray(V(t), dtype=float), t.shape)
    growth = np.exp(cumulative_simpson(W ** (k * gam) * lam0 - mu * rv, x=t, initial=0.0))

    def series(a):
        return moments(a) * W ** (k * a) * growth

    m = series(alpha)
    out = -mu * rv * m
    if alpha != 0:
        a_coef = moments(alpha) / moments(alpha + nu - 1)
        out = out + alpha * lam0 * a_coef * vv * series(alpha + nu - 1)
    if alpha != 1:
        b_coef = moments(alpha) / moments(alpha + gam)
        out = out + (1 - alpha) * lam0 * b_coef * series(alpha + gam)
    return MomentSeries(t, m, out)


def dilation_factor(t, W, h, R1: Callable, R2: Callable, mu: float) -> np.ndarray:
    """exp(mu int_0^t (W(s) R1(h(s)) - R2(s)) ds) on the grid ``t``."""
    t = np.asarray(t, dtype=float)
    r1 = np.broadcast_to(np.asarray(R1(np.asarray(h)), dtype=float), t.shape)
    r2 = np.broadcast_to(np.asarray(R2(t), dtype=float), t.shape)
    return np.exp(mu * cumulative_simpson(np.asarray(W) * r1 - r2, x=t, initial=0.0))


def dilation_map(V1: Callable, V2: Callable, t_end: float, powerlaw: PowerLaw, W0: float = 1.0,
                 dt: float = 1e-3) -> Trajectory:
    """Integrate dW/dt = (tau W / k)(V2 - V1 W), dh/dt = W with h(0) = 0."""
    c = powerlaw.tau / powerlaw.k

    def fun(t, y):
        W = y[0]
        return np.array([c * W * (V2(t) - V1(t) * W), W])

    return integrate(fun, [W0, 0.0], t_end, dt, system="W-h", positive=False)


def first_crossings(values, level: float) -> int:
    """Number of sign changes of ``values - level``."""
    s = np.sign(np.asarray(values) - level)
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1]))
