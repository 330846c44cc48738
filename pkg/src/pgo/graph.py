"""Pose-graph data model and g2o text I/O.

Supported records::

    VERTEX_SE2 id x y theta
    EDGE_SE2 i j dx dy dtheta I11 I12 I13 I22 I23 I33
    VERTEX_SE3:QUAT id x y z qx qy qz qw
    EDGE_SE3:QUAT i j dx dy dz qx qy qz qw <21 upper-triangular info entries>
    EDGE_SE2_PRIOR i x y theta <6 info entries>
    EDGE_SE3_PRIOR i x y z qx qy qz qw <21 info entries>
    FIX i

Edges with ``|i - j| == 1`` are odometry, everything else is a loop closure.
Ground-truth loop labels travel in a sidecar file of ``LOOP_LABEL i j true|false``
rows, one per loop factor in file order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import geometry as geo
from .geometry import Pose, Pose2, Pose3

MAX_INFO_CONDITION = 1e12
FIX_INFORMATION = 1e6


class GraphError(ValueError):
    """Base class for malformed graphs and g2o input."""


class MalformedLine(GraphError):
    def __init__(self, line_no: int, msg: str = "wrong token count"):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


class NonPositiveDefiniteInformation(GraphError):
    def __init__(self, line_no: int, msg: str = "information matrix is not positive definite"):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


class MixedDimensions(GraphError):
    pass


class LabelMismatch(GraphError):
    pass


class FactorKind(enum.Enum):
    PRIOR = "prior"
    ODOMETRY = "odometry"
    LOOP = "loop"


class LoopLabel(enum.Enum):
    TRUE_LOOP = "true"
    FALSE_LOOP = "false"


@dataclass(frozen=True, eq=False)
class Factor:
    kind: FactorKind
    i: int
    j: int
    measurement: Pose
    sqrt_information: np.ndarray
    truth_label: Optional[LoopLabel] = None

    def __post_init__(self):
        L = np.array(self.sqrt_information, dtype=float)
        L.setflags(write=False)
        object.__setattr__(self, "sqrt_information", L)
        if self.truth_label is not None and self.kind is not FactorKind.LOOP:
            raise GraphError("truth labels are only allowed on loop factors")

    @property
    def information(self) -> np.ndarray:
        return self.sqrt_information.T @ self.sqrt_information

    def with_label(self, label: Optional[LoopLabel]) -> "Factor":
        return replace(self, truth_label=label)


def sqrt_information_from(info: np.ndarray) -> np.ndarray:
    """Upper-triangular R with R^T R = info; raises LinAlgError if not SPD."""
    info = np.asarray(info, dtype=float)
    info = 0.5 * (info + info.T)
    C = np.linalg.cholesky(info)
    return C.T


@dataclass
class FactorTable:
    """Stacked arrays for one group of factors (used by the solver)."""

    index: np.ndarray  # positions in graph.factors
    i: np.ndarray
    j: np.ndarray
    z: np.ndarray
    sqrt_info: np.ndarray
    is_loop: np.ndarray

    def __len__(self):
        return len(self.index)


@dataclass(frozen=True, eq=False)
class PoseGraph:
    poses: tuple
    factors: tuple
    dimension: int

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        object.__setattr__(self, "factors", tuple(self.factors))
        if self.dimension not in (2, 3):
            raise GraphError(f"dimension must be 2 or 3, got {self.dimension}")
        cls = geo.pose_class(self.dimension)
        n = len(self.poses)
        for p in self.poses:
            if not isinstance(p, cls):
                raise MixedDimensions("pose type does not match graph dimension")
        for f in self.factors:
            if not isinstance(f.measurement, cls):
                raise MixedDimensions("factor measurement does not match graph dimension")
            if not (0 <= f.i < n) or (f.kind is not FactorKind.PRIOR and not (0 <= f.j < n)):
                raise GraphError(f"factor {f.i}->{f.j} references a missing node (have {n})")

    @property
    def tangent_dim(self) -> int:
        return 3 if self.dimension == 2 else 6

    @property
    def pose_width(self) -> int:
        return 3 if self.dimension == 2 else 7

    def __len__(self):
        return len(self.poses)

    @cached_property
    def pose_array(self) -> np.ndarray:
        if not self.poses:
            return np.zeros((0, self.pose_width))
        return geo.poses_to_array(self.poses)

    @cached_property
    def loop_indices(self) -> np.ndarray:
        return np.array([k for k, f in enumerate(self.factors) if f.kind is FactorKind.LOOP], dtype=int)

    @property
    def loop_factors(self) -> list:
        return [self.factors[k] for k in self.loop_indices]

    @property
    def has_prior(self) -> bool:
        return any(f.kind is FactorKind.PRIOR for f in self.factors)

    def _table(self, kinds) -> FactorTable:
        idx = [k for k, f in enumerate(self.factors) if f.kind in kinds]
        d, w = self.tangent_dim, self.pose_width
        fs = [self.factors[k] for k in idx]
        return FactorTable(
            index=np.array(idx, dtype=int),
            i=np.array([f.i for f in fs], dtype=int),
            j=np.array([f.j for f in fs], dtype=int),
            z=np.array([f.measurement.to_array() for f in fs], dtype=float).reshape(-1, w),
            sqrt_info=np.array([f.sqrt_information for f in fs], dtype=float).reshape(-1, d, d),
            is_loop=np.array([f.kind is FactorKind.LOOP for f in fs], dtype=bool),
        )

    @cached_property
    def between_table(self) -> FactorTable:
        return self._table((FactorKind.ODOMETRY, FactorKind.LOOP))

    @cached_property
    def prior_table(self) -> FactorTable:
        return self._table((FactorKind.PRIOR,))

    def with_poses(self, poses) -> "PoseGraph":
        if isinstance(poses, np.ndarray):
            poses = geo.array_to_poses(poses, self.dimension)
        return PoseGraph(tuple(poses), self.factors, self.dimension)

    def with_factors(self, factors: Sequence[Factor]) -> "PoseGraph":
        return PoseGraph(self.poses, tuple(factors), self.dimension)

    def labels(self) -> list:
        return [f.truth_label for f in self.loop_factors]


def ensure_prior(graph: PoseGraph, node: int = 0, sigma: float = 1e-3) -> PoseGraph:
    """Anchor ``node`` at its current pose if the graph has no prior yet."""
    if graph.has_prior or not graph.poses:
        return graph
    L = np.eye(graph.tangent_dim) / sigma
    prior = Factor(FactorKind.PRIOR, node, node, graph.poses[node], L)
    return graph.with_factors((prior,) + graph.factors)


def dead_reckoning(graph: PoseGraph) -> np.ndarray:
    """Initial estimate composed from odometry, starting at the identity."""
    n = len(graph.poses)
    compose, inverse = geo.group_ops(graph.pose_width)[:2]
    step = {}
    for f in graph.factors:
        if f.kind is FactorKind.ODOMETRY:
            z = f.measurement.to_array()
            lo = min(f.i, f.j)
            if lo not in step:
                step[lo] = z if f.i < f.j else inverse(z)
    out = np.empty((n, graph.pose_width))
    if n == 0:
        return out
    out[0] = geo.pose_class(graph.dimension).identity().to_array()
    for k in range(1, n):
        if k - 1 not in step:
            raise GraphError(f"no odometry factor between nodes {k - 1} and {k}")
        out[k] = compose(out[k - 1], step[k - 1])
    return out


# --------------------------------------------------------------------------
# residuals


def _factor_arrays(f: Factor, poses: np.ndarray):
    if f.kind is FactorKind.PRIOR:
        e, _ = geo.batch_prior_jacobian(f.measurement.to_array(), poses[f.i])
        return e
    return geo.batch_relative_residual(f.measurement.to_array(), poses[f.i], poses[f.j])


def whitened_residual(f: Factor, graph: PoseGraph, poses: Optional[np.ndarray] = None) -> np.ndarray:
    """sqrt_information times the raw tangent residual of ``f``."""
    poses = graph.pose_array if poses is None else poses
    return f.sqrt_information @ _factor_arrays(f, poses)


def mahalanobis(f: Factor, graph: PoseGraph, poses: Optional[np.ndarray] = None) -> float:
    """Squared whitened residual norm, on the scale of chi-square quantiles."""
    r = whitened_residual(f, graph, poses)
    return float(r @ r)


def loop_mahalanobis(graph: PoseGraph, poses: Optional[np.ndarray] = None) -> np.ndarray:
    """Vectorized :func:`mahalanobis` for every loop factor, in loop order."""
    poses = graph.pose_array if poses is None else poses
    tab = graph.between_table
    sel = tab.is_loop
    if not np.any(sel):
        return np.zeros(0)
    e = geo.batch_relative_residual(tab.z[sel], poses[tab.i[sel]], poses[tab.j[sel]])
    r = np.einsum("nij,nj->ni", tab.sqrt_info[sel], e)
    return np.einsum("ni,ni->n", r, r)


# --------------------------------------------------------------------------
# g2o parsing

_SE2_INFO = 6
_SE3_INFO = 21


def _upper_to_full(vals, d) -> np.ndarray:
    M = np.zeros((d, d))
    M[np.triu_indices(d)] = vals
    return M + np.triu(M, 1).T


def _full_to_upper(M) -> np.ndarray:
    return np.asarray(M)[np.triu_indices(M.shape[0])]


def _parse_info(vals, d, line_no) -> np.ndarray:
    info = _upper_to_full(vals, d)
    try:
        L = sqrt_information_from(info)
    except np.linalg.LinAlgError:
        raise NonPositiveDefiniteInformation(line_no) from None
    if not np.all(np.isfinite(L)) or np.any(np.diag(L) <= 0):
        raise NonPositiveDefiniteInformation(line_no)
    if np.linalg.cond(info) > MAX_INFO_CONDITION:
        raise NonPositiveDefiniteInformation(line_no, "information matrix condition number exceeds 1e12")
    return L


def _quat_g2o(vals) -> np.ndarray:
    qx, qy, qz, qw = vals
    return np.array([qw, qx, qy, qz])


def _floats(tokens, line_no):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise MalformedLine(line_no, "non-numeric token") from None


def _ints(tokens, line_no):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise MalformedLine(line_no, "non-integer id") from None


_RECORDS = {
    # tag: (dimension, number of tokens after the tag)
    "VERTEX_SE2": (2, 4),
    "EDGE_SE2": (2, 5 + _SE2_INFO),
    "EDGE_SE2_PRIOR": (2, 4 + _SE2_INFO),
    "VERTEX_SE3:QUAT": (3, 8),
    "EDGE_SE3:QUAT": (3, 9 + _SE3_INFO),
    "EDGE_SE3_PRIOR": (3, 8 + _SE3_INFO),
    "FIX": (None, 1),
}


def parse_g2o(text: str) -> PoseGraph:
    """Parse g2o text into a :class:`PoseGraph` (factors in file order)."""
    vertices = {}
    factors = []
    fixed = []
    dim = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        tag = tok[0]
        if tag not in _RECORDS:
            raise MalformedLine(line_no, f"unknown record {tag!r}")
        rec_dim, ntok = _RECORDS[tag]
        if len(tok) - 1 != ntok:
            raise MalformedLine(line_no)
        if rec_dim is not None:
            if dim is None:
                dim = rec_dim
            elif dim != rec_dim:
                raise MixedDimensions(f"line {line_no}: SE2 and SE3 records mixed")
        if tag == "FIX":
            fixed.append(_ints(tok[1:2], line_no)[0])
            continue
        if tag.startswith("VERTEX"):
            (vid,) = _ints(tok[1:2], line_no)
            v = _floats(tok[2:], line_no)
            if vid in vertices:
                raise MalformedLine(line_no, f"duplicate vertex {vid}")
            vertices[vid] = Pose2(*v) if rec_dim == 2 else Pose3(v[:3], _quat_g2o(v[3:7]))
            continue
        prior = tag.endswith("_PRIOR")
        nid = 1 if prior else 2
        ids = _ints(tok[1:1 + nid], line_no)
        v = _floats(tok[1 + nid:], line_no)
        if rec_dim == 2:
            z = Pose2(*v[:3])
            L = _parse_info(v[3:], 3, line_no)
        else:
            z = Pose3(v[:3], _quat_g2o(v[3:7]))
            L = _parse_info(v[7:], 6, line_no)
        if prior:
            factors.append(Factor(FactorKind.PRIOR, ids[0], ids[0], z, L))
        else:
            i, j = ids
            kind = FactorKind.ODOMETRY if abs(i - j) == 1 else FactorKind.LOOP
            factors.append(Factor(kind, i, j, z, L))
    dim = dim or 2
    n = len(vertices)
    if sorted(vertices) != list(range(n)):
        raise GraphError("vertex ids must be contiguous from 0")
    poses = [vertices[k] for k in range(n)]
    d = 3 if dim == 2 else 6
    for k in fixed:
        if k not in vertices:
            raise GraphError(f"FIX references missing vertex {k}")
        factors.insert(0, Factor(FactorKind.PRIOR, k, k, vertices[k], np.eye(d) * np.sqrt(FIX_INFORMATION)))
    return PoseGraph(tuple(poses), tuple(factors), dim)


def _fmt(x: float) -> str:
    s = f"{x:.12g}"
    return "0" if s == "-0" else s


def _pose_tokens(p: Pose) -> list:
    if isinstance(p, Pose2):
        return [p.x, p.y, p.theta]
    w, x, y, z = p.rotation
    return list(p.translation) + [x, y, z, w]


def write_g2o(graph: PoseGraph) -> str:
    """Emit g2o text; floats carry 12 significant digits."""
    if not graph.poses and not graph.factors:
        return ""
    se2 = graph.dimension == 2
    lines = []
    vtag = "VERTEX_SE2" if se2 else "VERTEX_SE3:QUAT"
    for k, p in enumerate(graph.poses):
        lines.append(" ".join([vtag, str(k)] + [_fmt(v) for v in _pose_tokens(p)]))
    for f in graph.factors:
        info = _full_to_upper(f.information)
        vals = [_fmt(v) for v in _pose_tokens(f.measurement)] + [_fmt(v) for v in info]
        if f.kind is FactorKind.PRIOR:
            tag = "EDGE_SE2_PRIOR" if se2 else "EDGE_SE3_PRIOR"
            lines.append(" ".join([tag, str(f.i)] + vals))
        else:
            tag = "EDGE_SE2" if se2 else "EDGE_SE3:QUAT"
            lines.append(" ".join([tag, str(f.i), str(f.j)] + vals))
    return "\n".join(lines) + "\n"


def read_g2o(path) -> PoseGraph:
    with open(path) as fh:
        return parse_g2o(fh.read())


# --------------------------------------------------------------------------
# label sidecar


def parse_labels(text: str) -> list:
    """Parse ``LOOP_LABEL i j true|false`` rows into (i, j, LoopLabel) tuples."""
    out = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if len(tok) != 4 or tok[0] != "LOOP_LABEL" or tok[3] not in ("true", "false"):
            raise MalformedLine(line_no, "expected 'LOOP_LABEL i j true|false'")
        i, j = _ints(tok[1:3], line_no)
        out.append((i, j, LoopLabel(tok[3])))
    return out


def write_labels(graph: PoseGraph) -> str:
    rows = []
    for f in graph.loop_factors:
        if f.truth_label is None:
            raise LabelMismatch(f"loop {f.i}->{f.j} has no truth label")
        rows.append(f"LOOP_LABEL {f.i} {f.j} {f.truth_label.value}")
    return "".join(r + "\n" for r in rows)


def apply_labels(graph: PoseGraph, labels: list) -> PoseGraph:
    """Attach sidecar labels to loop factors, matching rows in order."""
    loops = graph.loop_indices
    if len(labels) != len(loops):
        raise LabelMismatch(f"{len(labels)} labels for {len(loops)} loop factors")
    factors = list(graph.factors)
    for k, (i, j, lab) in zip(loops, labels):
        f = factors[k]
        if (f.i, f.j) != (i, j):
            raise LabelMismatch(f"label {i}->{j} does not match loop {f.i}->{f.j}")
        factors[k] = f.with_label(lab)
    return graph.with_factors(factors)


def label_all_true(graph: PoseGraph) -> PoseGraph:
    """Mark every unlabeled loop factor as a true loop."""
    factors = [
        f.with_label(LoopLabel.TRUE_LOOP) if f.kind is FactorKind.LOOP and f.truth_label is None else f
        for f in graph.factors
    ]
    return graph.with_factors(factors)
