"""Outlier injection and synthetic pose-graph generation with truth labels.

Both transforms are deterministic given their seed: they draw from a single
``numpy.random.default_rng(seed)`` stream in a fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import geometry as geo
from .graph import (
    Factor,
    FactorKind,
    LoopLabel,
    PoseGraph,
    dead_reckoning,
    label_all_true,
    sqrt_information_from,
)


class NotEnoughCandidatePairs(RuntimeError):
    pass


RATE_BASES = ("of_true", "of_total")
LOOP_INFO_POLICIES = ("copy", "odometry")


@dataclass(frozen=True)
class CorruptionConfig:
    outlier_rate: float = 0.1
    seed: int = 0
    min_index_gap: int = 50
    min_gt_distance: Optional[float] = None  # default: 5x mean odometry step
    loop_info: str = "copy"
    rate_basis: str = "of_true"
    max_attempts_per_loop: int = 2000

    def __post_init__(self):
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ValueError(f"outlier_rate must lie in [0, 1], got {self.outlier_rate}")
        if self.rate_basis not in RATE_BASES:
            raise ValueError(f"rate_basis must be one of {RATE_BASES}")
        if self.loop_info not in LOOP_INFO_POLICIES:
            raise ValueError(f"loop_info must be one of {LOOP_INFO_POLICIES}")
        if self.rate_basis == "of_total" and self.outlier_rate >= 1.0:
            raise ValueError("an of_total outlier rate must be below 1")


def n_false_loops(n_true: int, rate: float, basis: str = "of_true") -> int:
    if basis == "of_true":
        return int(round(rate * n_true))
    return int(round(rate * n_true / (1.0 - rate)))


def mean_odometry_step(graph: PoseGraph) -> float:
    steps = [
        np.linalg.norm(f.measurement.to_array()[: graph.dimension])
        for f in graph.factors
        if f.kind is FactorKind.ODOMETRY
    ]
    return float(np.mean(steps)) if steps else 1.0


def _sample_tangent(rng, L: np.ndarray) -> np.ndarray:
    # noise with covariance (L^T L)^-1 = L^-1 L^-T
    eps = rng.standard_normal(L.shape[0])
    return np.linalg.solve(L, eps)


def inject_false_loops(graph: PoseGraph, cfg: CorruptionConfig) -> PoseGraph:
    """Append labeled false loop closures between distant node pairs.

    Each false measurement is the identity pose perturbed by noise drawn from
    the copied information matrix: two distant poses mistaken for one place.
    """
    graph = label_all_true(graph)
    loops = graph.loop_factors
    n_true = sum(1 for f in loops if f.truth_label is LoopLabel.TRUE_LOOP)
    n_false = n_false_loops(n_true, cfg.outlier_rate, cfg.rate_basis)
    if n_false == 0:
        return graph

    n = len(graph.poses)
    pos = graph.pose_array[:, : graph.dimension]
    min_dist = cfg.min_gt_distance if cfg.min_gt_distance is not None else 5.0 * mean_odometry_step(graph)
    odometry = [f for f in graph.factors if f.kind is FactorKind.ODOMETRY]
    if cfg.loop_info == "copy" and loops:
        info_pool = [f.sqrt_information for f in loops]
    elif odometry:
        info_pool = [f.sqrt_information for f in odometry]
    else:
        raise NotEnoughCandidatePairs("no factor to copy an information matrix from")

    rng = np.random.default_rng(cfg.seed)
    cls = geo.pose_class(graph.dimension)
    taken = set()
    added = []
    attempts = 0
    budget = cfg.max_attempts_per_loop * n_false
    while len(added) < n_false:
        attempts += 1
        if attempts > budget:
            raise NotEnoughCandidatePairs(
                f"placed {len(added)} of {n_false} false loops (gap >= {cfg.min_index_gap}, "
                f"distance >= {min_dist:.3g})"
            )
        i, j = sorted(int(v) for v in rng.integers(0, n, size=2))
        if j - i < max(cfg.min_index_gap, 2) or (i, j) in taken:
            continue
        if np.linalg.norm(pos[i] - pos[j]) < min_dist:
            continue
        taken.add((i, j))
        L = info_pool[int(rng.integers(0, len(info_pool)))]
        z = geo.exp(_sample_tangent(rng, L))
        added.append(Factor(FactorKind.LOOP, i, j, cls.from_array(z.to_array()), L, LoopLabel.FALSE_LOOP))
    return graph.with_factors(graph.factors + tuple(added))


# --------------------------------------------------------------------------
# generation from ground truth

SE2_ODOMETRY_SIGMA = (0.05, 0.05, 0.01)
SE2_CORRUPTION_SIGMA = (1.0, 1.0, 0.5)
SE3_ODOMETRY_SIGMA = (0.05, 0.05, 0.05, 0.01, 0.01, 0.01)
SE3_CORRUPTION_SIGMA = (1.0, 1.0, 1.0, 0.5, 0.5, 0.5)


@dataclass(frozen=True)
class GenerationConfig:
    seed: int = 0
    odometry_sigma: Optional[Sequence[float]] = None
    loop_sigma: Optional[Sequence[float]] = None
    proximity_radius: float = 1.5
    loop_density: float = 1.0  # fraction of candidate pairs kept
    min_index_gap: int = 2
    corrupted_fraction: float = 0.2
    corruption_sigma: Optional[Sequence[float]] = None

    def __post_init__(self):
        for name in ("odometry_sigma", "loop_sigma", "corruption_sigma"):
            v = getattr(self, name)
            if v is not None and np.any(np.asarray(v, dtype=float) <= 0):
                raise ValueError(f"{name} entries must be positive")
        if not 0.0 <= self.corrupted_fraction <= 1.0:
            raise ValueError("corrupted_fraction must lie in [0, 1]")
        if not 0.0 < self.loop_density <= 1.0:
            raise ValueError("loop_density must lie in (0, 1]")
        if self.proximity_radius <= 0:
            raise ValueError("proximity_radius must be positive")
        if self.min_index_gap < 2:
            raise ValueError("loop closures need min_index_gap >= 2")

    def sigmas(self, dimension: int):
        se2 = dimension == 2
        odo = np.asarray(self.odometry_sigma or (SE2_ODOMETRY_SIGMA if se2 else SE3_ODOMETRY_SIGMA), dtype=float)
        loop = np.asarray(self.loop_sigma or odo, dtype=float)
        bad = np.asarray(self.corruption_sigma or (SE2_CORRUPTION_SIGMA if se2 else SE3_CORRUPTION_SIGMA), dtype=float)
        d = 3 if se2 else 6
        for v in (odo, loop, bad):
            if v.shape != (d,):
                raise ValueError(f"noise sigmas need {d} entries for SE({dimension})")
        return odo, loop, bad


def generate_from_ground_truth(gt_poses: Sequence, cfg: GenerationConfig) -> PoseGraph:
    """Noisy odometry and loop closures from ground-truth poses, all labeled.

    Loop candidates are node pairs at least ``min_index_gap`` apart whose
    positions lie within ``proximity_radius``; a ``loop_density`` fraction is
    kept and a ``corrupted_fraction`` of those gets extra large noise and the
    false-loop label. Vertices hold the dead-reckoning initial estimate.
    """
    gt = list(gt_poses)
    if len(gt) < 2:
        raise ValueError("need at least two ground-truth poses")
    dim = gt[0].dim
    cls = geo.pose_class(dim)
    odo_sig, loop_sig, bad_sig = cfg.sigmas(dim)
    rng = np.random.default_rng(cfg.seed)
    X = geo.poses_to_array(gt)
    compose, _, between, exp = geo.group_ops(X.shape[1])[:4]
    L_odo = sqrt_information_from(np.diag(1.0 / odo_sig ** 2))
    L_loop = sqrt_information_from(np.diag(1.0 / loop_sig ** 2))

    factors = []
    n = len(gt)
    noise = rng.standard_normal((n - 1, len(odo_sig))) * odo_sig
    z = compose(between(X[:-1], X[1:]), exp(noise))
    for k in range(n - 1):
        factors.append(Factor(FactorKind.ODOMETRY, k, k + 1, cls.from_array(z[k]), L_odo))

    pos = X[:, :dim]
    pairs = []
    for j in range(n):
        i = np.arange(0, j - cfg.min_index_gap + 1)
        if len(i) == 0:
            continue
        near = i[np.linalg.norm(pos[i] - pos[j], axis=1) <= cfg.proximity_radius]
        pairs.extend((int(a), j) for a in near)
    if cfg.loop_density < 1.0 and pairs:
        keep = rng.random(len(pairs)) < cfg.loop_density
        pairs = [p for p, k in zip(pairs, keep) if k]
    n_loops = len(pairs)
    n_bad = int(round(cfg.corrupted_fraction * n_loops))
    bad = np.zeros(n_loops, dtype=bool)
    if n_bad:
        bad[rng.choice(n_loops, size=n_bad, replace=False)] = True
    if n_loops:
        a = np.array([p[0] for p in pairs])
        b = np.array([p[1] for p in pairs])
        noise = rng.standard_normal((n_loops, len(loop_sig))) * loop_sig
        extra = rng.standard_normal((n_loops, len(bad_sig))) * bad_sig
        noise = noise + np.where(bad[:, None], extra, 0.0)
        zl = compose(between(X[a], X[b]), exp(noise))
        for k in range(n_loops):
            label = LoopLabel.FALSE_LOOP if bad[k] else LoopLabel.TRUE_LOOP
            factors.append(Factor(FactorKind.LOOP, int(a[k]), int(b[k]), cls.from_array(zl[k]), L_loop, label))

    graph = PoseGraph(tuple(gt), tuple(factors), dim)
    return graph.with_poses(dead_reckoning(graph))
