"""Graduated non-convexity over loop-closure factors with adaptive mu schedules.

Each outer round computes the Mahalanobis distance of every loop factor,
maps it to an interpolation parameter alpha, advances that factor's mu along
its shape function and re-solves. Once every mu reaches 1 the factors are
classified against chi-square quantiles and ``mu_init`` is set for a
possible follow-up pass.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from . import kernel
from .graph import PoseGraph, loop_mahalanobis
from .solver import SolverConfig, optimize
from .spline import DEFAULT_FAMILY, ShapeFamily

log = logging.getLogger(__name__)


class InvalidProbability(ValueError):
    pass


class NoPrior(ValueError):
    pass


# --------------------------------------------------------------------------
# chi-square quantiles


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_fraction(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_p_series(a, x)
    return 1.0 - _gamma_q_fraction(a, x)


def chi2_cdf(x: float, dof: int) -> float:
    return gamma_p(0.5 * dof, 0.5 * x)


def _chi2_pdf(x: float, dof: int) -> float:
    k = 0.5 * dof
    return math.exp((k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k))


@lru_cache(maxsize=256)
def chi2_quantile(p: float, dof: int) -> float:
    """x with chi2_cdf(x, dof) == p, by safeguarded Newton iteration."""
    if not 0.0 < p < 1.0 or math.isnan(p):
        raise InvalidProbability(f"probability must lie in (0, 1), got {p}")
    if dof < 1:
        raise ValueError(f"dof must be >= 1, got {dof}")
    lo, hi = 0.0, max(1.0, float(dof))
    while chi2_cdf(hi, dof) < p:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = chi2_cdf(x, dof) - p
        if f > 0:
            hi = x
        else:
            lo = x
        pdf = _chi2_pdf(x, dof) if x > 0 else 0.0
        step_ok = pdf > 0
        if step_ok:
            x_new = x - f / pdf
            step_ok = lo < x_new < hi
        if not step_ok:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) < 1e-13 * max(1.0, x) or hi - lo < 1e-13 * max(1.0, hi):
            return x_new
        x = x_new
    return x


# --------------------------------------------------------------------------
# configuration and per-factor state


class ScheduleKind(enum.Enum):
    ADAPTIVE = "adaptive"
    FIXED_ALPHA = "fixed-alpha"
    BASELINE = "baseline"


class Classification(enum.IntEnum):
    INLIER = 0
    AMBIGUOUS = 1
    OUTLIER = 2


@dataclass(frozen=True)
class GncConfig:
    c: float = kernel.DEFAULT_C
    n_max: int = 10
    max_outer_rounds: int = 30
    chi2_lo_p: float = 0.25
    chi2_hi_p: float = 0.9
    schedule: ScheduleKind = ScheduleKind.ADAPTIVE
    fixed_alpha: float = 0.5
    family: ShapeFamily = DEFAULT_FAMILY
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        if not 0.0 < self.chi2_lo_p < self.chi2_hi_p < 1.0:
            raise ValueError("need 0 < chi2_lo_p < chi2_hi_p < 1")
        if self.n_max < 2:
            raise ValueError("n_max must be at least 2")
        if self.max_outer_rounds < 1:
            raise ValueError("max_outer_rounds must be positive")
        if not 0.0 <= self.fixed_alpha <= 1.0:
            raise ValueError("fixed_alpha must lie in [0, 1]")

    def thresholds(self, dof: int):
        return chi2_quantile(self.chi2_lo_p, dof), chi2_quantile(self.chi2_hi_p, dof)


@dataclass(frozen=True)
class FactorGncState:
    mu: float = 0.0
    mu_init: float = 0.0
    step: int = 0
    alpha: float = 0.0
    m: float = 0.0
    classification: Classification = Classification.INLIER


def compute_alpha(m, dof: int, cfg: GncConfig = GncConfig()):
    """Piecewise-linear alpha: 0 below chi2(lo), 1 at or above chi2(hi)."""
    lo, hi = cfg.thresholds(dof)
    m = np.asarray(m, dtype=float)
    a = np.where(m < lo, 0.0, np.where(m >= hi, 1.0, (m - lo) / (hi - lo)))
    return a if a.ndim else float(a)


def classify(m, dof: int, cfg: GncConfig = GncConfig()):
    lo, hi = cfg.thresholds(dof)
    m = np.asarray(m, dtype=float)
    c = np.where(m < lo, Classification.INLIER, np.where(m >= hi, Classification.OUTLIER, Classification.AMBIGUOUS))
    if c.ndim:
        return c.astype(int)
    return Classification(int(c))


def _schedule_mu(cfg: GncConfig, alpha, step, mu_init):
    t = np.minimum(np.asarray(step, dtype=float) / cfg.n_max, 1.0)
    if cfg.schedule is ScheduleKind.BASELINE:
        return t * t
    return cfg.family.mu(alpha, t, mu_init)


def _alpha_for(cfg: GncConfig, m, dof, previous):
    if cfg.schedule is ScheduleKind.ADAPTIVE:
        return compute_alpha(m, dof, cfg)
    if cfg.schedule is ScheduleKind.FIXED_ALPHA:
        return np.full_like(np.asarray(m, dtype=float), cfg.fixed_alpha)
    return np.asarray(previous, dtype=float)


def graduate(state: FactorGncState, cfg: GncConfig, m: float, dof: int) -> FactorGncState:
    """Advance one factor by one graduation step."""
    alpha = float(_alpha_for(cfg, np.array([m]), dof, np.array([state.alpha]))[0])
    step = state.step + 1
    target = float(_schedule_mu(cfg, np.array([alpha]), np.array([step]), np.array([state.mu_init]))[0])
    mu = max(state.mu, state.mu_init, target)
    return replace(state, mu=mu, step=step, alpha=alpha, m=float(m), classification=classify(m, dof, cfg))


# --------------------------------------------------------------------------
# outer loop


@dataclass
class RoundRecord:
    pass_index: int
    round: int
    mu: np.ndarray
    alpha: np.ndarray
    cost: float
    inner_iterations: int
    converged: bool
    n_outliers: int

    @property
    def mu_mean(self) -> float:
        return float(np.mean(self.mu)) if len(self.mu) else 1.0


@dataclass
class GncResult:
    poses: np.ndarray
    classification: np.ndarray  # Classification codes, graph loop order
    m: np.ndarray  # final Mahalanobis distances
    mu: np.ndarray
    mu_init: np.ndarray
    history: list = field(default_factory=list)
    wall_time: float = 0.0
    diverged: bool = False
    thresholds: tuple = (0.0, 0.0)

    @property
    def inner_iterations(self) -> int:
        return sum(r.inner_iterations for r in self.history)

    @property
    def outer_rounds(self) -> int:
        return len(self.history)

    def states(self) -> list:
        return [
            FactorGncState(float(mu), float(mi), 0, 0.0, float(m), Classification(int(c)))
            for mu, mi, m, c in zip(self.mu, self.mu_init, self.m, self.classification)
        ]


def run_gnc(graph: PoseGraph, cfg: GncConfig = GncConfig(), initial: Optional[np.ndarray] = None) -> GncResult:
    """Batch GNC over the graph's loop factors.

    Round 0 solves at ``mu_init`` (all zero: the convex surrogate). Each
    following round graduates every loop factor once and re-solves, until all
    mu equal 1 and the inner solve converged. Final classifications set
    ``mu_init``; if any changed during the last round, one more pass runs.
    """
    if not graph.has_prior:
        raise NoPrior("graph needs at least one prior factor to fix the gauge")
    t0 = time.perf_counter()
    x = np.array(graph.pose_array if initial is None else initial, dtype=float)
    n_loops = len(graph.loop_indices)
    dof = graph.tangent_dim
    thresholds = cfg.thresholds(dof)
    history = []

    if n_loops == 0:
        res = optimize(graph, None, x, cfg.solver, cfg.c)
        history.append(RoundRecord(0, 0, np.zeros(0), np.zeros(0), res.cost, res.iterations, res.converged, 0))
        empty = np.zeros(0)
        return GncResult(res.poses, np.zeros(0, dtype=int), empty, empty, empty, history,
                         time.perf_counter() - t0, not res.converged, thresholds)

    mu_init = np.zeros(n_loops)
    alpha = np.zeros(n_loops)
    diverged = False
    pass_index = 0
    while True:
        mu = mu_init.copy()
        step = np.zeros(n_loops, dtype=int)
        res = optimize(graph, mu, x, cfg.solver, cfg.c)
        x = res.poses
        m = loop_mahalanobis(graph, x)
        history.append(RoundRecord(pass_index, 0, mu.copy(), alpha.copy(), res.cost, res.iterations,
                                   res.converged, int(np.sum(m >= thresholds[1]))))
        done = bool(np.all(mu >= 1.0) and res.converged)
        rnd = 0
        while not done and rnd < cfg.max_outer_rounds:
            rnd += 1
            cls_before = classify(m, dof, cfg)
            alpha = _alpha_for(cfg, m, dof, alpha)
            step += 1
            mu = np.maximum(mu, np.maximum(mu_init, _schedule_mu(cfg, alpha, step, mu_init)))
            res = optimize(graph, mu, x, cfg.solver, cfg.c)
            x = res.poses
            m = loop_mahalanobis(graph, x)
            history.append(RoundRecord(pass_index, rnd, mu.copy(), alpha.copy(), res.cost, res.iterations,
                                       res.converged, int(np.sum(m >= thresholds[1]))))
            done = bool(np.all(mu >= 1.0) and res.converged)
        if not done:
            diverged = True
            log.warning("GNC hit max_outer_rounds=%d without converging", cfg.max_outer_rounds)
        cls = classify(m, dof, cfg)
        changed = rnd > 0 and bool(np.any(cls != cls_before))
        mu_init = np.where(cls == Classification.OUTLIER, 1.0, np.where(cls == Classification.INLIER, 0.0, mu))
        if changed and pass_index == 0 and not diverged:
            log.debug("classification changed in the final round; running one more pass")
            pass_index += 1
            continue
        break

    return GncResult(x, cls, m, mu, mu_init, history, time.perf_counter() - t0, diverged, thresholds)
