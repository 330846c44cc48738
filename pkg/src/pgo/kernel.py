"""SIG robust kernel, its IRLS weight and a non-convexity diagnostic.

    rho(r; mu) = 1/2 * c^2 r^2 / (c^2 + (r^2)^mu),   0 <= mu <= 1

mu = 0 is a scaled quadratic, mu = 1 is Geman-McClure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_C = 3.0


@dataclass(frozen=True)
class KernelParams:
    c: float = DEFAULT_C
    mu: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}")


def _r2mu(r, mu):
    # (r^2)^mu with 0^0 = 1, the mu -> 0 limit for every r > 0
    r2 = np.asarray(r, dtype=float) ** 2
    mu = np.asarray(mu, dtype=float)
    return np.where(mu == 0.0, 1.0, np.power(r2, mu))


def rho(r, mu=0.0, c: float = DEFAULT_C):
    """Kernel cost; vectorized over ``r`` and ``mu``. Signed ``r`` uses |r|."""
    r = np.abs(np.asarray(r, dtype=float))
    c2 = c * c
    out = 0.5 * c2 * r * r / (c2 + _r2mu(r, mu))
    return out if out.ndim else float(out)


def weight(r, mu=0.0, c: float = DEFAULT_C):
    """IRLS weight rho'(r)/r; at r = 0 the analytic limit is returned."""
    r = np.abs(np.asarray(r, dtype=float))
    mu = np.asarray(mu, dtype=float)
    c2 = c * c
    p = _r2mu(r, mu)
    out = c2 * (c2 + (1.0 - mu) * p) / (c2 + p) ** 2
    return out if out.ndim else float(out)


def nonconvexity(mu: float, c: float = DEFAULT_C, r_max: float = 10.0, n_samples: int = 1024) -> float:
    """Largest negative curvature of rho over [0, r_max], clipped at zero.

    The second derivative is taken by central differences with step
    ``r_max / (100 * n_samples)``. This is a diagnostic measure only.
    """
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    if n_samples < 16:
        raise ValueError("n_samples must be at least 16")
    h = r_max / (100.0 * n_samples)
    r = np.linspace(0.0, r_max, n_samples)
    d2 = (rho(r + h, mu, c) - 2.0 * rho(r, mu, c) + rho(r - h, mu, c)) / (h * h)
    return float(max(0.0, -np.min(d2)))
