"""Trajectory error (ATE, RPE) and loop-closure classification metrics.

ATE is the RMSE of positions after a least-squares rigid alignment (no
scale). RPE compares relative motions over a fixed index offset.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .gnc import Classification
from .graph import LoopLabel


class LengthMismatch(ValueError):
    pass


class DegenerateGeometry(UserWarning):
    """Positions are (nearly) collinear; the alignment fell back to translation only."""


@dataclass(frozen=True)
class TrajectoryMetrics:
    ate_rmse: float
    rpe_trans_rmse: float
    rpe_rot_rmse: float


@dataclass(frozen=True)
class ClassificationMetrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0


def _positions(traj) -> np.ndarray:
    """(n, dim) positions from a pose array or a list of poses."""
    if isinstance(traj, np.ndarray):
        X = traj
    else:
        X = geo.poses_to_array(list(traj))
    return X[:, :2] if X.shape[1] == 3 else X[:, :3]


def _as_array(traj) -> np.ndarray:
    return traj if isinstance(traj, np.ndarray) else geo.poses_to_array(list(traj))


def align(est, gt):
    """Rigid transform (R, t) minimizing sum |R est_k + t - gt_k|^2.

    Closed-form SVD solution with the reflection correction. When the
    centered positions have rank below two in 3-D (collinear within 1e-9),
    the rotation is unobservable and only the translation is fitted; a
    ``DegenerateGeometry`` warning says so.
    """
    P, Q = _positions(est), _positions(gt)
    if P.shape != Q.shape:
        raise LengthMismatch(f"trajectories have {len(P)} and {len(Q)} poses")
    if len(P) < 3:
        raise ValueError("alignment needs at least three poses")
    return _fit_rigid(P, Q)


def _fit_rigid(P, Q):
    dim = P.shape[1]
    mp, mq = P.mean(axis=0), Q.mean(axis=0)
    A, B = P - mp, Q - mq
    sv = np.linalg.svd(A, compute_uv=False)
    if dim == 3 and sv[1] <= 1e-9 * max(sv[0], 1.0):
        warnings.warn("collinear positions: translation-only alignment", DegenerateGeometry, stacklevel=3)
        return np.eye(dim), mq - mp
    U, _, Vt = np.linalg.svd(B.T @ A)
    S = np.eye(dim)
    S[-1, -1] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    R = U @ S @ Vt
    return R, mq - R @ mp


def ate(est, gt) -> float:
    """Position RMSE after rigid alignment of ``est`` onto ``gt``."""
    P, Q = _positions(est), _positions(gt)
    if P.shape != Q.shape:
        raise LengthMismatch(f"trajectories have {len(P)} and {len(Q)} poses")
    R, t = _fit_rigid(P, Q) if len(P) >= 3 else (np.eye(P.shape[1]), Q.mean(axis=0) - P.mean(axis=0))
    d = P @ R.T + t - Q
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def rpe(est, gt, delta: int = 1):
    """(translation RMSE, rotation RMSE) of relative motions ``delta`` apart."""
    E, G = _as_array(est), _as_array(gt)
    if E.shape != G.shape:
        raise LengthMismatch(f"trajectories have shapes {E.shape} and {G.shape}")
    if delta < 1:
        raise ValueError("delta must be at least 1")
    if len(E) <= delta:
        return 0.0, 0.0
    _, _, between = geo.group_ops(E.shape[1])[:3]
    rel_e = between(E[:-delta], E[delta:])
    rel_g = between(G[:-delta], G[delta:])
    err = between(rel_g, rel_e)
    if E.shape[1] == 3:
        trans = np.linalg.norm(err[:, :2], axis=1)
        rot = np.abs(geo.wrap_angle(err[:, 2]))
    else:
        trans = np.linalg.norm(err[:, :3], axis=1)
        rot = 2.0 * np.arctan2(np.linalg.norm(err[:, 4:], axis=1), np.abs(err[:, 3]))
    return float(np.sqrt(np.mean(trans ** 2))), float(np.sqrt(np.mean(rot ** 2)))


def trajectory_metrics(est, gt, delta: int = 1) -> TrajectoryMetrics:
    t, r = rpe(est, gt, delta)
    return TrajectoryMetrics(ate(est, gt), t, r)


def precision_recall(labels, classifications) -> ClassificationMetrics:
    """Counts with TrueLoop as the positive class and accepted = not Outlier."""
    labels = list(labels)
    cls = np.asarray(classifications, dtype=int)
    if len(labels) != len(cls):
        raise LengthMismatch(f"{len(labels)} labels vs {len(cls)} classifications")
    truth = np.array([lab is LoopLabel.TRUE_LOOP or lab == "true" for lab in labels], dtype=bool)
    accepted = cls != int(Classification.OUTLIER)
    return ClassificationMetrics(
        tp=int(np.sum(truth & accepted)),
        fp=int(np.sum(~truth & accepted)),
        tn=int(np.sum(~truth & ~accepted)),
        fn=int(np.sum(truth & ~accepted)),
    )
