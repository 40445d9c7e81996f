"""Finite-volume solver for growth-fragmentation equations with nonlinear closures.

Discretization
--------------
Cells of width ``h`` with midpoint nodes ``x_i``. Transport is donor-cell
upwind with face flux ``tau x_i^nu u_i`` leaving cell ``i`` (zero inflow at
x = 0, no flux through x_max). With this flux the discrete first moment obeys
``dM_1/dt = tau M_nu`` exactly. The fragmentation gain matrix is corrected
column by column so that every fragmentation event conserves mass exactly and
produces ``c_0`` fragments on average. Time stepping is explicit Euler;
feedback moments are evaluated at the start of each step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .grid import Grid
from .model import (
    DomainError,
    Kernel,
    ModelError,
    Nonlinearity,
    PeriodicControl,
    PowerLaw,
    kernel_moment,
)

CFL = 0.9
NEG_TOL = 1e-14

LINEAR = "linear-with-controls"
DRIFT = "nonlinear-drift"
DRIFT_DEATH = "nonlinear-drift-death"
PRION = "prion"
SCENARIO_KINDS = (LINEAR, DRIFT, DRIFT_DEATH, PRION)

DIAGNOSTIC_COLUMNS = ("t", "M0", "M1", "Mp", "Mq", "norm_H", "eps_p", "dist_E", "rho", "gre")


class NumericalError(RuntimeError):
    """Positivity loss, non-finite values or non-convergence."""


class CFLError(NumericalError):
    def __init__(self, dt, admissible):
        super().__init__(f"time step {dt:.6g} exceeds the admissible step {admissible:.6g}")
        self.dt = dt
        self.admissible = admissible


# ---------------------------------------------------------------------------
# operator
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Operator:
    """Discrete ``-d/dx(tau x^nu .) + F`` on a grid; death enters as a diagonal shift."""

    grid: Grid
    powerlaw: PowerLaw
    kernel: Kernel
    speed: np.ndarray  # outflow rate of each cell, tau x_i^nu / h (0 in the last cell)
    gain: np.ndarray  # gain[j, i] * u_i is the birth rate in cell j from cell i
    loss: np.ndarray  # beta(x_i)
    number_exact: np.ndarray  # columns whose fragment count equals c_0 exactly

    def transport(self, u):
        flux = self.speed * u
        out = -flux
        out[1:] += flux[:-1]
        return out

    def fragmentation(self, u):
        return self.gain @ u - self.loss * u

    def apply(self, u, velocity=1.0, death=0.0):
        return velocity * self.transport(u) + self.gain @ u - (self.loss + death) * u

    def apply_adjoint(self, phi, velocity=1.0, death=0.0):
        out = np.zeros_like(phi)
        out[:-1] = self.speed[:-1] * (phi[1:] - phi[:-1])
        return velocity * out + self.gain.T @ phi - (self.loss + death) * phi

    def matrix(self, velocity=1.0, death=0.0) -> np.ndarray:
        n = self.grid.n
        A = self.gain.copy()
        idx = np.arange(n)
        A[idx, idx] -= velocity * self.speed + self.loss + death
        A[idx[1:], idx[:-1]] += velocity * self.speed[:-1]
        return A

    def max_rate(self, velocity=1.0, death=0.0) -> float:
        return float(np.max(velocity * self.speed + self.loss + death))


def build_operator(grid: Grid, powerlaw: PowerLaw, kernel: Kernel) -> Operator:
    """Assemble transport speeds and the conservative fragmentation matrix."""
    x, h, n = grid.nodes, grid.h, grid.n
    speed = powerlaw.tau * x**powerlaw.nu / h
    speed[-1] = 0.0
    beta = powerlaw.fragmentation_rate(x)
    c0 = kernel_moment(kernel, 0.0)
    gain = np.zeros((n, n))
    exact = np.zeros(n, dtype=bool)
    # cell 0 has a single (half) daughter cell: mass conservation alone fixes it
    gain[0, 0] = beta[0]
    for i in range(1, n):
        xs = x[: i + 1]
        w = np.ones(i + 1)
        w[i] = 0.5
        base = beta[i] / x[i] * kernel(xs / x[i]) * w * h
        s0, s1, s2 = base.sum(), (base * xs).sum(), (base * xs * xs).sum()
        det = s0 * s2 - s1 * s1
        a = (c0 * beta[i] * s2 - x[i] * beta[i] * s1) / det
        b = (x[i] * beta[i] * s0 - c0 * beta[i] * s1) / det
        col = base * (a + b * xs)
        if np.all(col >= 0):
            exact[i] = True
        else:
            col = base * (x[i] * beta[i] / s1)
        gain[: i + 1, i] = col
    return Operator(grid, powerlaw, kernel, speed, gain, beta, exact)


# ---------------------------------------------------------------------------
# scenarios and states
# ---------------------------------------------------------------------------


@dataclass
class SizeState:
    t: float
    u: np.ndarray
    monomer: float | None = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.size and np.min(u) < -NEG_TOL * max(np.max(np.abs(u)), 1e-300):
            raise NumericalError(f"negative density {np.min(u):.3e} at t={self.t}")
        self.u = np.where(u < 0, 0.0, u)


@dataclass(eq=False)
class Scenario:
    """A closure of the growth-fragmentation equation on a fixed grid.

    ``mp_ref``/``mq_ref``/``m1_ref`` are the moments of the unit-mass Perron
    profile used to normalize the feedback arguments in the drift-death and
    prion closures.
    """

    kind: str
    powerlaw: PowerLaw
    kernel: Kernel
    grid: Grid
    control: PeriodicControl | None = None
    f: Nonlinearity | None = None
    g: Nonlinearity | None = None
    p: float | None = None
    q: float | None = None
    lam: float | None = None
    delta: float | None = None
    mp_ref: float | None = None
    mq_ref: float | None = None
    m1_ref: float | None = None
    r: float | None = None

    def __post_init__(self):
        need = {
            LINEAR: ("control",),
            DRIFT: ("f", "p"),
            DRIFT_DEATH: ("f", "g", "p", "q", "mp_ref", "mq_ref"),
            PRION: ("f", "p", "lam", "delta", "mp_ref", "m1_ref"),
        }
        if self.kind not in need:
            raise ModelError(f"unknown scenario kind {self.kind!r}; known: {SCENARIO_KINDS}")
        missing = [name for name in need[self.kind] if getattr(self, name) is None]
        if missing:
            raise ModelError(f"scenario {self.kind} is missing {missing}")
        if self.r is None:
            self.r = max(3.0, 2.0 * (self.p or 0.0) + 1.0)
        if self.r < 1:
            raise DomainError("weight exponent r must be >= 1")

    @cached_property
    def operator(self) -> Operator:
        return build_operator(self.grid, self.powerlaw, self.kernel)


@dataclass
class Feedback:
    velocity: float
    death: float
    monomer_rate: float = 0.0


def feedback(scenario: Scenario, state: SizeState) -> Feedback:
    """Velocity multiplier, death rate and monomer rate at the current state."""
    grid, mu = scenario.grid, scenario.powerlaw.mu
    kind = scenario.kind
    if kind == LINEAR:
        c = scenario.control
        return Feedback(float(c.V(state.t)), mu * float(c.R(state.t)))
    if kind == DRIFT:
        return Feedback(float(scenario.f(grid.moment(state.u, scenario.p))), mu)
    if kind == DRIFT_DEATH:
        ip = grid.moment(state.u, scenario.p) / scenario.mp_ref
        iq = grid.moment(state.u, scenario.q) / scenario.mq_ref
        return Feedback(float(scenario.f(ip)), float(scenario.g(iq)))
    # prion
    k = scenario.powerlaw.k
    arg = mu ** (-k * scenario.p) * scenario.m1_ref / scenario.mp_ref * grid.moment(state.u, scenario.p)
    fv = float(scenario.f(arg))
    v = state.monomer
    rate = scenario.lam - v * (scenario.delta + fv * grid.moment(state.u, 1.0))
    return Feedback(v * fv, mu, rate)


def admissible_dt(scenario: Scenario, fb: Feedback) -> float:
    """Largest explicit step keeping dt * (outflow + fragmentation + death) <= CFL."""
    return CFL / scenario.operator.max_rate(fb.velocity, fb.death)


def step(state: SizeState, scenario: Scenario, dt: float, fb: Feedback | None = None) -> SizeState:
    """One explicit Euler step with feedbacks frozen at the current state."""
    fb = fb or feedback(scenario, state)
    limit = admissible_dt(scenario, fb)
    if dt > limit * (1 + 1e-12):
        raise CFLError(dt, limit)
    u = state.u + dt * scenario.operator.apply(state.u, fb.velocity, fb.death)
    if not np.all(np.isfinite(u)):
        raise NumericalError(f"non-finite density after step at t={state.t}")
    monomer = None
    if scenario.kind == PRION:
        monomer = max(state.monomer + dt * fb.monomer_rate, 0.0)
    return SizeState(state.t + dt, u, monomer)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def observables(u, grid: Grid, alphas=(0.0, 1.0), r: float = 3.0) -> dict:
    """Moments M_alpha[u] and the weighted norm (int u^2 (x + x^r) dx)^(1/2)."""
    if r < 1:
        raise DomainError("weight exponent r must be >= 1")
    x = grid.nodes
    out = {f"M{a:g}": grid.moment(u, a) for a in alphas}
    out["norm_H"] = math.sqrt(grid.integrate(u * u * (x + x**r)))
    return out


def gre(u, v, phi, H: Callable, grid: Grid) -> float:
    """General relative entropy int phi v H(u/v) dx; cells with u = v = 0 contribute 0."""
    u, v, phi = (np.asarray(a, dtype=float) for a in (u, v, phi))
    live = v > 0
    if np.any((~live) & (u > 0)):
        raise DomainError("reference density v must be positive where u > 0")
    vals = np.zeros_like(u)
    vals[live] = phi[live] * v[live] * H(u[live] / v[live])
    return grid.integrate(vals)


ENTROPIES = {
    "quadratic": lambda s: (s - 1.0) ** 2,
    "identity": lambda s: s,
    "boltzmann": lambda s: s * np.log(np.where(s > 0, s, 1.0)) - s + 1.0,
}


def rescaled_profile(U, grid: Grid, W: float, k: float) -> np.ndarray:
    """Samples of W^(-k) U(W^(-k) x) by monotone cubic interpolation (zero beyond the grid)."""
    x = grid.nodes
    s = W ** (-k)
    knots = np.concatenate(([0.0], x, [grid.x_max]))
    vals = np.concatenate(([U[0]], U, [U[-1]]))
    interp = PchipInterpolator(knots, vals, extrapolate=False)
    out = s * interp(s * x)
    return np.nan_to_num(out, nan=0.0)


def manifold_diagnostics(u, grid: Grid, eigenpair, W: float, Q: float, p: float,
                         powerlaw: PowerLaw, distance: bool = True) -> dict:
    """Moment mismatch eps_p and distance to the eigenmanifold for nu = 1.

    ``W`` is the dilation (velocity) parameter of the companion profile and
    ``Q`` its amplitude, so that the on-manifold prediction is Q U(W; .).
    """
    if powerlaw.nu != 1:
        raise DomainError("manifold diagnostics need nu = 1")
    k = powerlaw.k
    mp_ref = grid.moment(eigenpair.U, p)
    eps = grid.moment(u, p) / (Q * W ** (k * p) * mp_ref) - 1.0
    rho = grid.integrate(u * eigenpair.phi)
    out = {"eps_p": eps, "rho": rho, "dist_E": float("nan"), "W_best": float("nan")}
    if not distance:
        return out
    if rho <= 0:
        raise DomainError("degenerate input: int u phi <= 0")
    target = u / rho
    phi = eigenpair.phi

    def cost(w):
        member = rescaled_profile(eigenpair.U, grid, w, k) / w**k
        return grid.integrate(np.abs(target - member) * phi)

    w_best, d = golden_section(cost, W / 4.0, 4.0 * W)
    out.update(dist_E=d, W_best=w_best)
    return out


def golden_section(fun, a, b, tol=1e-7, max_iter=200):
    ratio = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - ratio * (b - a), a + ratio * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (abs(c) + abs(d)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - ratio * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + ratio * (b - a)
            fd = fun(d)
    return (c, fc) if fc < fd else (d, fd)


def fit_decay_rate(t, values, burn_in: float = 0.0) -> float:
    """Least-squares rate a in |values| ~ C exp(-a t) over t >= burn_in."""
    t = np.asarray(t, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    keep = (t >= burn_in) & (v > 0) & np.isfinite(v)
    if keep.sum() < 2:
        raise NumericalError("not enough samples to fit a decay rate")
    slope, _ = np.polyfit(t[keep], np.log(v[keep]), 1)
    return float(-slope)


# ---------------------------------------------------------------------------
# companions tracked along a run
# ---------------------------------------------------------------------------


@dataclass
class Companion:
    """On-manifold companion (W, Q) advanced with the PDE's own feedbacks (nu = 1).

    dW/dt = (tau W / k)(v - W),  dQ/dt = Q (tau W - d),
    with v the velocity multiplier and d the death rate seen by the PDE.
    """

    W: float
    Q: float
    h: float = 0.0

    def advance(self, dt, fb: Feedback, powerlaw: PowerLaw):
        tau, k = powerlaw.tau, powerlaw.k
        dW = tau * self.W / k * (fb.velocity - self.W)
        dQ = self.Q * (tau * self.W - fb.death)
        self.h += dt * self.W
        self.W += dt * dW
        self.Q += dt * dQ


@dataclass
class GREReference:
    """Perron reference for the entropy of a linear run with constant coefficients."""

    eigenpair: object
    H: Callable
    rho0: float = float("nan")
    log_growth: float = 0.0

    def start(self, u0, grid):
        self.rho0 = grid.integrate(u0 * self.eigenpair.phi)
        self.log_growth = 0.0

    def advance(self, dt, fb: Feedback):
        self.log_growth += math.log1p(dt * (self.eigenpair.lam - fb.death))

    def value(self, u, grid):
        ref = self.rho0 * self.eigenpair.U
        return gre(u * math.exp(-self.log_growth), ref, self.eigenpair.phi, self.H, grid)


@dataclass
class Diagnostics:
    columns: tuple = DIAGNOSTIC_COLUMNS
    rows: list = field(default_factory=list)

    def append(self, row: dict):
        if self.rows and row["t"] <= self.rows[-1]["t"]:
            raise NumericalError("diagnostic timestamps must increase strictly")
        self.rows.append({c: float(row.get(c, float("nan"))) for c in self.columns})

    def series(self, name) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    def to_csv(self, path):
        write_csv(path, self.columns, [[row[c] for c in self.columns] for row in self.rows])


@dataclass
class RunResult:
    state: SizeState
    diagnostics: Diagnostics
    snapshots: list
    steps: int
    companion: Companion | None = None


def run(scenario: Scenario, u0, t_end: float, *, sample_dt: float = 0.1, dt: float | None = None,
        safety: float = 0.5, monomer0: float | None = None, eigenpair=None,
        companion: Companion | None = None, gre_reference: GREReference | None = None,
        distance: bool = False, snapshot_times=(), observer: Callable | None = None) -> RunResult:
    """Integrate up to ``t_end``, sampling diagnostics every ``sample_dt``.

    The step is fixed: ``dt`` if given, otherwise ``safety`` times the
    admissible step at t = 0, shrunk so that it divides ``sample_dt``.
    Raises :class:`CFLError` if a later state makes the step inadmissible.
    """
    grid, pl = scenario.grid, scenario.powerlaw
    state = SizeState(0.0, np.array(u0, dtype=float), monomer0)
    if scenario.kind == PRION and monomer0 is None:
        raise ModelError("prion runs need an initial monomer quantity")
    fb = feedback(scenario, state)
    if dt is None:
        dt = safety * admissible_dt(scenario, fb)
    per_sample = max(1, math.ceil(sample_dt / dt - 1e-9))
    dt = sample_dt / per_sample
    n_samples = int(round(t_end / sample_dt))
    diag = Diagnostics()
    snapshots = []
    pending = sorted(snapshot_times)
    if gre_reference is not None:
        if scenario.kind != LINEAR or not scenario.control.V.is_constant() or scenario.control.V.mean() != 1.0 \
                or not scenario.control.R.is_constant():
            raise ModelError("entropy tracking needs a linear run with V = 1 and constant R")
        gre_reference.start(state.u, grid)

    def record():
        row = {"t": state.t}
        row.update(_moment_row(state.u, scenario))
        if eigenpair is not None:
            row["rho"] = grid.integrate(state.u * eigenpair.phi)
        if companion is not None and eigenpair is not None:
            md = manifold_diagnostics(state.u, grid, eigenpair, companion.W, companion.Q,
                                      scenario.p if scenario.p is not None else 1.0, pl, distance)
            row.update(eps_p=md["eps_p"], dist_E=md["dist_E"])
        if gre_reference is not None:
            row["gre"] = gre_reference.value(state.u, grid)
        if observer is not None:
            observer(state, row)
        diag.append(row)
        while pending and pending[0] <= state.t + 1e-12:
            snapshots.append(SizeState(state.t, state.u.copy(), state.monomer))
            pending.pop(0)

    record()
    steps = 0
    for s in range(n_samples):
        for j in range(per_sample):
            fb = feedback(scenario, state)
            new = step(state, scenario, dt, fb)
            if companion is not None:
                companion.advance(dt, fb, pl)
            if gre_reference is not None:
                gre_reference.advance(dt, fb)
            new.t = (s * per_sample + j + 1) * dt
            state = new
            steps += 1
        record()
    return RunResult(state, diag, snapshots, steps, companion)


def _moment_row(u, scenario: Scenario) -> dict:
    grid = scenario.grid
    row = {"M0": grid.moment(u, 0.0), "M1": grid.moment(u, 1.0)}
    if scenario.p is not None:
        row["Mp"] = grid.moment(u, scenario.p)
    if scenario.q is not None:
        row["Mq"] = grid.moment(u, scenario.q)
    x = grid.nodes
    row["norm_H"] = math.sqrt(grid.integrate(u * u * (x + x**scenario.r)))
    return row


# ---------------------------------------------------------------------------
# initial conditions and export
# ---------------------------------------------------------------------------


def lognormal_bump(grid: Grid, median: float = 1.0, sigma: float = 0.5, mass: float = 1.0):
    x = grid.nodes
    u = np.exp(-((np.log(x) - math.log(median)) ** 2) / (2 * sigma**2)) / x
    return mass * u / grid.integrate(u)


def uniform_block(grid: Grid, lo: float, hi: float, mass: float = 1.0):
    x = grid.nodes
    u = ((x >= lo) & (x <= hi)).astype(float)
    if not u.any():
        raise DomainError("uniform block does not intersect the grid")
    return mass * u / grid.integrate(u)


def fmt(value) -> str:
    """Round-trip text for a CSV cell; booleans as true/false, None as empty."""
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return repr(float(value))


def write_csv(path, header, rows, comment: str | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def export_snapshot(state: SizeState, grid: Grid, path):
    write_csv(path, ("x", "u"), zip(grid.nodes, state.u), comment=f"t={state.t!r}")
