"""Perron eigenelements of the discrete growth-fragmentation operator.

The dominant eigenvalue is found by power iteration on the resolvent
``(sigma I - A)^-1``, i.e. on the implicit Euler step of the semigroup. The
shift ``sigma`` starts above a Collatz-Wielandt bound so the resolvent is a
nonnegative matrix, then moves towards the eigenvalue to accelerate
convergence. The adjoint reuses the same LU factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import gamma as gamma_fn

from .grid import Grid
from .model import CONSTANT_TWO, DomainError, Kernel, PowerLaw
from .pde import NumericalError, Operator, build_operator, rescaled_profile, write_csv


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class UnsupportedConfiguration(DomainError):
    """Closed form requested outside its range of validity."""


@dataclass(eq=False)
class EigenPair:
    """Perron triple on a grid with ``int U = 1`` and ``int phi U = 1``."""

    lam: float
    U: np.ndarray
    phi: np.ndarray
    residual: float
    grid: Grid
    adjoint_lam: float = float("nan")
    iterations: int = 0

    def moment(self, alpha: float) -> float:
        return self.grid.moment(self.U, alpha)

    def to_csv(self, path):
        write_csv(path, ("x", "U", "phi"), zip(self.grid.nodes, self.U, self.phi),
                  comment=f"lambda={self.lam!r} residual={self.residual!r}")


def _dominant(A: np.ndarray, h: float, tol: float, max_outer: int, max_inner: int,
              trans: int = 0, lu=None, sigma=None):
    n = A.shape[0]
    if sigma is None:
        theta = 1.0 + np.arange(n, dtype=float)
        weighted = (A.T @ theta if trans else theta @ A) / theta
        bound = float(np.max(weighted))
        sigma = bound + max(1.0, 0.1 * abs(bound))
    v = np.full(n, 1.0 / (n * h))
    lam_old = math.inf
    eye = np.eye(n)
    for outer in range(1, max_outer + 1):
        factors = lu if (lu is not None and outer == 1) else lu_factor(sigma * eye - A)
        for _ in range(max_inner):
            w = lu_solve(factors, v, trans=trans)
            if np.any(w < -1e-12 * np.max(np.abs(w))):
                raise ConvergenceError("resolvent lost positivity; shift fell below the eigenvalue")
            rho = w.sum() / v.sum()
            w = np.abs(w) / (w.sum() * h)
            change = np.abs(w - v).sum() * h
            v = w
            if change < 1e-13:
                break
        lam = sigma - 1.0 / rho
        if abs(lam - lam_old) < tol * max(1.0, abs(lam)):
            return lam, v, outer, factors, sigma
        lam_old = lam
        sigma = lam + max(0.05 * (sigma - lam), 1e-6 * max(1.0, abs(lam)))
    raise ConvergenceError("eigenvalue drift above tolerance", abs(lam - lam_old), max_outer)


def solve_perron(powerlaw: PowerLaw, kernel: Kernel, grid: Grid, tol: float = 1e-8,
                 max_iter: int = 60, residual_tol: float = 1e-6,
                 operator: Operator | None = None) -> EigenPair:
    """Direct and adjoint Perron eigenelements for V = 1, R = 0.

    Parameters
    ----------
    tol : float
        Relative drift of the eigenvalue between outer iterations.
    residual_tol : float
        Bound on ``|A U - lam U|_1 / |lam U|_1``; exceeded bound raises
        :class:`ConvergenceError`.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    op = operator or build_operator(grid, powerlaw, kernel)
    A = op.matrix()
    h = grid.h
    lam, U, iters, lu, sigma = _dominant(A, h, tol, max_iter, 200)
    res = float(np.abs(A @ U - lam * U).sum() / max(abs(lam), 1e-300) / U.sum())
    if not res <= residual_tol:
        raise ConvergenceError("eigenvector residual above tolerance", res, iters)
    lam_adj, phi = solve_adjoint(op, U, tol, max_iter, _cache=(A, lu, sigma))
    if abs(lam_adj - lam) > 10 * tol * max(1.0, abs(lam)):
        raise ConvergenceError(f"direct {lam} and adjoint {lam_adj} eigenvalues disagree",
                               abs(lam_adj - lam), iters)
    return EigenPair(float(lam), U, phi, res, grid, float(lam_adj), iters)


def solve_adjoint(operator: Operator, U, tol: float = 1e-8, max_iter: int = 60, _cache=None):
    """Adjoint eigenvector normalized by ``int phi U = 1``; returns (lam, phi)."""
    if _cache is None:
        A, lu, sigma = operator.matrix(), None, None
    else:
        A, lu, sigma = _cache
    grid = operator.grid
    lam, phi, *_ = _dominant(A, grid.h, tol, max_iter, 200, trans=1, lu=lu, sigma=sigma)
    phi = phi / grid.integrate(phi * U)
    return float(lam), phi


# ---------------------------------------------------------------------------
# closed forms and self-similar laws
# ---------------------------------------------------------------------------


def _explicit_rate(powerlaw: PowerLaw, kernel: Kernel | None) -> float:
    if powerlaw.nu != 1 or (kernel is not None and kernel.kind != CONSTANT_TWO):
        raise UnsupportedConfiguration("explicit eigenvector needs nu = 1 and kappa = 2")
    return powerlaw.beta / (powerlaw.tau * powerlaw.gamma)


def closed_form_constant(powerlaw: PowerLaw, kernel: Kernel | None = None) -> float:
    """Analytic C with int_0^inf C exp(-a x^gamma) dx = 1."""
    a = _explicit_rate(powerlaw, kernel)
    g = powerlaw.gamma
    return g * a ** (1.0 / g) / gamma_fn(1.0 / g)


def closed_form_U(powerlaw: PowerLaw, grid: Grid, kernel: Kernel | None = None,
                  normalize: str = "quadrature"):
    """U(x) = C exp(-(beta / (tau gamma)) x^gamma) for nu = 1 and kappa = 2.

    ``normalize="quadrature"`` fixes C by the grid quadrature of U,
    ``"analytic"`` uses the exact constant.
    """
    a = _explicit_rate(powerlaw, kernel)
    shape = np.exp(-a * grid.nodes**powerlaw.gamma)
    if normalize == "analytic":
        return closed_form_constant(powerlaw, kernel) * shape
    return shape / grid.integrate(shape)


def closed_form_moment(powerlaw: PowerLaw, alpha: float, kernel: Kernel | None = None) -> float:
    """M_alpha of the explicit eigenvector."""
    a = _explicit_rate(powerlaw, kernel)
    g = powerlaw.gamma
    return gamma_fn((alpha + 1.0) / g) / gamma_fn(1.0 / g) * a ** (-alpha / g)


def lambda_vr(lambda0: float, V: float, R: float, powerlaw: PowerLaw) -> float:
    """Lambda(V, R) = V^(k gamma) Lambda(1, 0) - R mu."""
    if not V > 0:
        raise DomainError(f"velocity multiplier must be positive, got {V}")
    if R < 0:
        raise DomainError(f"death multiplier must be nonnegative, got {R}")
    return V ** (powerlaw.k * powerlaw.gamma) * lambda0 - R * powerlaw.mu


def rescale_eigenvector(U, V: float, k: float, grid: Grid, mass_tol: float = 1e-3):
    """Samples of V^(-k) U(V^(-k) x), the profile for velocity multiplier V."""
    if not V > 0:
        raise DomainError(f"velocity multiplier must be positive, got {V}")
    out = rescaled_profile(np.asarray(U, dtype=float), grid, V, k)
    lost = abs(grid.integrate(out) - grid.integrate(U))
    if lost > mass_tol * grid.integrate(U):
        raise DomainError(f"rescaled profile leaves the grid: mass defect {lost:.3e}")
    return out


def moment_scaling(eigenpair: EigenPair, V: float, k: float, alpha: float) -> float:
    """Predicted M_alpha of the rescaled profile, V^(k alpha) M_alpha[U]."""
    return V ** (k * alpha) * eigenpair.moment(alpha)
