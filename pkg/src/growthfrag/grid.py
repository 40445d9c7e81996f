"""Uniform size grid shared by the eigen solver and the PDE solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainccinv

from .model import CONSTANT_TWO, DomainError, Kernel, PowerLaw

DEFAULT_TAIL = 1e-10


@dataclass(frozen=True, eq=False)
class Grid:
    """Cells [i h, (i+1) h] on [0, x_max] with midpoint nodes."""

    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 2 or not self.x_max > 0:
            raise DomainError(f"grid needs n >= 2 and x_max > 0, got n={self.n}, x_max={self.x_max}")

    @property
    def h(self) -> float:
        return self.x_max / self.n

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    @property
    def widths(self) -> np.ndarray:
        return np.full(self.n, self.h)

    @property
    def kind(self) -> str:
        return "uniform"

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.h)

    def moment(self, u, alpha: float) -> float:
        return float(np.dot(self.nodes**alpha, u) * self.h)

    @classmethod
    def for_powerlaw(cls, powerlaw: PowerLaw, kernel: Kernel, n: int = 2000,
                     tail: float = DEFAULT_TAIL, stretch: float = 1.0) -> "Grid":
        """Grid whose right end leaves less than ``tail`` eigenvector mass outside.

        The closed-form profile exp(-(beta/(tau gamma)) x^gamma) is used when it
        applies (nu = 1, kappa = 2); otherwise x_max = 20 (tau/beta)^(1/gamma).
        ``stretch`` enlarges x_max for runs whose profile dilates.
        """
        return cls(stretch * default_x_max(powerlaw, kernel, tail), int(n))


def default_x_max(powerlaw: PowerLaw, kernel: Kernel, tail: float = DEFAULT_TAIL) -> float:
    if powerlaw.nu == 1 and kernel.kind == CONSTANT_TWO:
        a = powerlaw.beta / (powerlaw.tau * powerlaw.gamma)
        s = gammainccinv(1.0 / powerlaw.gamma, tail)
        return float((s / a) ** (1.0 / powerlaw.gamma))
    return 20.0 * (powerlaw.tau / powerlaw.beta) ** (1.0 / powerlaw.gamma)
