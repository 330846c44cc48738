"""SE(2) and SE(3) poses, exponential/logarithm maps and relative-pose residuals.

Two layers live here:

* batched array kernels (``se2_*``, ``se3_*``) operating on stacked poses,
  used by the solver for vectorized linearization;
* the immutable value types :class:`Pose2` / :class:`Pose3` and the generic
  functions :func:`exp`, :func:`log`, :func:`compose`, :func:`inverse`,
  :func:`between` and :func:`relative_residual` built on top of them.

Array layouts:

* SE(2) pose ``[x, y, theta]``; tangent ``[dx, dy, dtheta]``.
* SE(3) pose ``[x, y, z, qw, qx, qy, qz]``; tangent ``[rho (3), phi (3)]``
  with the rotation vector last.

All perturbations are on the right: ``X <- X * exp(delta)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

SMALL_ANGLE = 1e-7
# Jacobian coefficients divide by up to theta^5, so their series kick in earlier.
JACOBIAN_SMALL_ANGLE = 1e-2

TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, TWO_PI) - np.pi
    w = np.where(w <= -np.pi, w + TWO_PI, w)
    return w if w.ndim else float(w)


def hat3(v: np.ndarray) -> np.ndarray:
    """Batched skew-symmetric matrices, ``(..., 3) -> (..., 3, 3)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _series_switch(theta, small, closed, series):
    # evaluate the closed form only where it is safe, to keep warnings out
    safe = np.where(theta < small, 1.0, theta)
    return np.where(theta < small, series(theta), closed(safe))


# --------------------------------------------------------------------------
# SE(2) kernels


def se2_compose(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 0] + c * b[..., 0] - s * b[..., 1]
    out[..., 1] = a[..., 1] + s * b[..., 0] + c * b[..., 1]
    out[..., 2] = wrap_angle(a[..., 2] + b[..., 2])
    return out


def se2_inverse(a):
    a = np.asarray(a, dtype=float)
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    out = np.empty_like(a)
    out[..., 0] = -c * a[..., 0] - s * a[..., 1]
    out[..., 1] = s * a[..., 0] - c * a[..., 1]
    out[..., 2] = wrap_angle(-a[..., 2])
    return out


def se2_between(a, b):
    return se2_compose(se2_inverse(a), b)


def _se2_v_coeffs(theta):
    """Return (sin(t)/t, (1-cos(t))/t)."""
    s = _series_switch(np.abs(theta), SMALL_ANGLE, lambda t: np.sin(t) / t, lambda t: 1.0 - t * t / 6.0)
    # (1 - cos t)/t is odd in t; evaluate on |t| and restore the sign
    at = np.abs(theta)
    c = _series_switch(at, SMALL_ANGLE, lambda t: 2.0 * np.sin(0.5 * t) ** 2 / t, lambda t: 0.5 * t)
    return s, np.sign(theta) * c


def _half_cot(theta):
    """(t/2) * cot(t/2), finite at t = 0."""
    at = np.abs(theta)
    return _series_switch(
        at, SMALL_ANGLE, lambda t: 0.5 * t / np.tan(0.5 * t), lambda t: 1.0 - t * t / 12.0
    )


def se2_exp(xi):
    xi = np.asarray(xi, dtype=float)
    th = xi[..., 2]
    s, c = _se2_v_coeffs(th)
    out = np.empty_like(xi)
    out[..., 0] = s * xi[..., 0] - c * xi[..., 1]
    out[..., 1] = c * xi[..., 0] + s * xi[..., 1]
    out[..., 2] = wrap_angle(th)
    return out


def se2_log(p):
    p = np.asarray(p, dtype=float)
    th = wrap_angle(p[..., 2])
    h = _half_cot(th)
    half = 0.5 * th
    out = np.empty_like(p)
    out[..., 0] = h * p[..., 0] + half * p[..., 1]
    out[..., 1] = -half * p[..., 0] + h * p[..., 1]
    out[..., 2] = th
    return out


def se2_adjoint(p):
    p = np.asarray(p, dtype=float)
    c, s = np.cos(p[..., 2]), np.sin(p[..., 2])
    out = np.zeros(p.shape[:-1] + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 0, 2] = p[..., 1]
    out[..., 1, 2] = -p[..., 0]
    out[..., 2, 2] = 1.0
    return out


def se2_right_jacobian_inv(xi):
    """Inverse right Jacobian of the SE(2) exponential at ``xi``."""
    xi = np.asarray(xi, dtype=float)
    th = xi[..., 2]
    at = np.abs(th)
    # f1 = (1 - cos t)/t^2 (even), f2 = (t - sin t)/t^2 (odd)
    f1 = _series_switch(
        at, JACOBIAN_SMALL_ANGLE,
        lambda t: 2.0 * np.sin(0.5 * t) ** 2 / (t * t),
        lambda t: 0.5 - t * t / 24.0 + t ** 4 / 720.0,
    )
    f2 = np.sign(th) * _series_switch(
        at, JACOBIAN_SMALL_ANGLE,
        lambda t: (t - np.sin(t)) / (t * t),
        lambda t: t / 6.0 - t ** 3 / 120.0 + t ** 5 / 5040.0,
    )
    r1, r2 = xi[..., 0], xi[..., 1]
    b1 = r1 * f2 - r2 * f1
    b2 = r1 * f1 + r2 * f2
    h = _half_cot(th)
    half = 0.5 * th
    out = np.zeros(xi.shape[:-1] + (3, 3))
    out[..., 0, 0] = h
    out[..., 0, 1] = -half
    out[..., 1, 0] = half
    out[..., 1, 1] = h
    # -A^{-1} b
    out[..., 0, 2] = -(h * b1 - half * b2)
    out[..., 1, 2] = -(half * b1 + h * b2)
    out[..., 2, 2] = 1.0
    return out


# --------------------------------------------------------------------------
# quaternion helpers, (w, x, y, z)


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_multiply(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, av = a[..., :1], a[..., 1:]
    bw, bv = b[..., :1], b[..., 1:]
    w = aw * bw - np.sum(av * bv, axis=-1, keepdims=True)
    v = aw * bv + bw * av + np.cross(av, bv)
    return np.concatenate([w, v], axis=-1)


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    out = -q
    out[..., 0] = q[..., 0]
    return out


def quat_rotate(q, v):
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w, u = q[..., :1], q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_to_matrix(q):
    q = quat_normalize(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - w * z)
    out[..., 0, 2] = 2 * (x * z + w * y)
    out[..., 1, 0] = 2 * (x * y + w * z)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - w * x)
    out[..., 2, 0] = 2 * (x * z - w * y)
    out[..., 2, 1] = 2 * (y * z + w * x)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def quat_from_matrix(R):
    """Rotation matrix to unit quaternion (w >= 0), batched."""
    R = np.asarray(R, dtype=float)
    flat = R.reshape(-1, 3, 3)
    out = np.empty((flat.shape[0], 4))
    for k, m in enumerate(flat):
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = 2.0 * np.sqrt(tr + 1.0)
            q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        elif m[1, 1] > m[2, 2]:
            s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        else:
            s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        q = np.asarray(q)
        out[k] = q if q[0] >= 0 else -q
    return quat_normalize(out).reshape(R.shape[:-2] + (4,))


def so3_exp_quat(phi):
    phi = np.asarray(phi, dtype=float)
    th = np.linalg.norm(phi, axis=-1)
    k = _series_switch(th, SMALL_ANGLE, lambda t: np.sin(0.5 * t) / t, lambda t: 0.5 - t * t / 48.0)
    q = np.concatenate([np.cos(0.5 * th)[..., None], k[..., None] * phi], axis=-1)
    return quat_normalize(q)


def so3_log_quat(q):
    """Rotation vector of a unit quaternion; angle in [0, pi]."""
    q = quat_normalize(q)
    q = np.where(q[..., :1] < 0, -q, q)
    w = q[..., 0]
    v = q[..., 1:]
    n = np.linalg.norm(v, axis=-1)
    small = n < SMALL_ANGLE
    # w is ~1 wherever the series branch is selected
    w_safe = np.where(small, w, 1.0)
    k = np.where(small, 2.0 / w_safe, 2.0 * np.arctan2(n, w) / np.where(small, 1.0, n))
    return k[..., None] * v


def _so3_coeffs(th):
    """A=(1-cos t)/t^2 and B=(t-sin t)/t^3 used by V and J_l."""
    A = _series_switch(
        th, JACOBIAN_SMALL_ANGLE,
        lambda t: 2.0 * np.sin(0.5 * t) ** 2 / (t * t),
        lambda t: 0.5 - t * t / 24.0 + t ** 4 / 720.0,
    )
    B = _series_switch(
        th, JACOBIAN_SMALL_ANGLE,
        lambda t: (t - np.sin(t)) / t ** 3,
        lambda t: 1.0 / 6.0 - t * t / 120.0 + t ** 4 / 5040.0,
    )
    return A, B


def so3_left_jacobian(phi):
    phi = np.asarray(phi, dtype=float)
    th = np.linalg.norm(phi, axis=-1)
    A, B = _so3_coeffs(th)
    W = hat3(phi)
    return np.eye(3) + A[..., None, None] * W + B[..., None, None] * (W @ W)


def so3_left_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    th = np.linalg.norm(phi, axis=-1)
    # 1/t^2 - cot(t/2)/(2t)
    D = _series_switch(
        th, JACOBIAN_SMALL_ANGLE,
        lambda t: 1.0 / (t * t) - 0.5 / (t * np.tan(0.5 * t)),
        lambda t: 1.0 / 12.0 + t * t / 720.0 + t ** 4 / 30240.0,
    )
    W = hat3(phi)
    return np.eye(3) - 0.5 * W + D[..., None, None] * (W @ W)


def se3_exp(xi):
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[..., :3], xi[..., 3:]
    V = so3_left_jacobian(phi)
    t = np.einsum("...ij,...j->...i", V, rho)
    return np.concatenate([t, so3_exp_quat(phi)], axis=-1)


def se3_log(p):
    p = np.asarray(p, dtype=float)
    phi = so3_log_quat(p[..., 3:])
    Vinv = so3_left_jacobian_inv(phi)
    rho = np.einsum("...ij,...j->...i", Vinv, p[..., :3])
    return np.concatenate([rho, phi], axis=-1)


def se3_compose(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = a[..., :3] + quat_rotate(a[..., 3:], b[..., :3])
    q = quat_normalize(quat_multiply(a[..., 3:], b[..., 3:]))
    return np.concatenate([t, q], axis=-1)


def se3_inverse(a):
    a = np.asarray(a, dtype=float)
    qc = quat_normalize(quat_conjugate(a[..., 3:]))
    t = -quat_rotate(qc, a[..., :3])
    return np.concatenate([t, qc], axis=-1)


def se3_between(a, b):
    return se3_compose(se3_inverse(a), b)


def se3_adjoint(p):
    p = np.asarray(p, dtype=float)
    R = quat_to_matrix(p[..., 3:])
    out = np.zeros(p.shape[:-1] + (6, 6))
    out[..., :3, :3] = R
    out[..., 3:, 3:] = R
    out[..., :3, 3:] = hat3(p[..., :3]) @ R
    return out


def _se3_q(rho, phi):
    """Translation/rotation coupling block of the SE(3) left Jacobian."""
    th = np.linalg.norm(phi, axis=-1)
    a1 = _series_switch(
        th, JACOBIAN_SMALL_ANGLE,
        lambda t: (t - np.sin(t)) / t ** 3,
        lambda t: 1.0 / 6.0 - t * t / 120.0 + t ** 4 / 5040.0,
    )
    a2 = _series_switch(
        th, JACOBIAN_SMALL_ANGLE,
        lambda t: (t * t + 2.0 * np.cos(t) - 2.0) / (2.0 * t ** 4),
        lambda t: 1.0 / 24.0 - t * t / 720.0 + t ** 4 / 40320.0,
    )
    a3 = _series_switch(
        th, JACOBIAN_SMALL_ANGLE,
        lambda t: (2.0 * t - 3.0 * np.sin(t) + t * np.cos(t)) / (2.0 * t ** 5),
        lambda t: 1.0 / 120.0 - t * t / 2520.0 + t ** 4 / 120960.0,
    )
    P = hat3(phi)
    Rh = hat3(rho)
    PR = P @ Rh
    RP = Rh @ P
    PRP = PR @ P
    PP = P @ P
    a1, a2, a3 = a1[..., None, None], a2[..., None, None], a3[..., None, None]
    return (
        0.5 * Rh
        + a1 * (PR + RP + PRP)
        + a2 * (PP @ Rh + RP @ P - 3.0 * PRP)
        + a3 * (PRP @ P + PP @ Rh @ P)
    )


def se3_right_jacobian_inv(xi):
    """Inverse right Jacobian of the SE(3) exponential at ``xi``.

    Uses J_r(xi) = J_l(-xi) and the block-triangular structure of J_l.
    """
    xi = np.asarray(xi, dtype=float)
    rho, phi = -xi[..., :3], -xi[..., 3:]
    Jinv = so3_left_jacobian_inv(phi)
    Q = _se3_q(rho, phi)
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = Jinv
    out[..., 3:, 3:] = Jinv
    out[..., :3, 3:] = -Jinv @ Q @ Jinv
    return out


# --------------------------------------------------------------------------
# batched residuals and Jacobians


_OPS = {
    3: (se2_compose, se2_inverse, se2_between, se2_exp, se2_log, se2_adjoint, se2_right_jacobian_inv),
    7: (se3_compose, se3_inverse, se3_between, se3_exp, se3_log, se3_adjoint, se3_right_jacobian_inv),
}


def group_ops(pose_width: int):
    """Kernels for a pose array width (3 for SE(2), 7 for SE(3))."""
    return _OPS[pose_width]


def tangent_dim(pose_width: int) -> int:
    return 3 if pose_width == 3 else 6


def batch_relative_residual(z, xi, xj):
    """log(Z^-1 Xi^-1 Xj) for stacked poses."""
    compose, inverse, between, _, log, _, _ = group_ops(np.shape(z)[-1])
    return log(compose(inverse(z), between(xi, xj)))


def batch_relative_jacobians(z, xi, xj):
    """Residual and its Jacobians w.r.t. right perturbations of Xi and Xj."""
    compose, inverse, between, _, log, adjoint, jr_inv = group_ops(np.shape(z)[-1])
    e = log(compose(inverse(z), between(xi, xj)))
    Jj = jr_inv(e)
    Ji = -Jj @ adjoint(between(xj, xi))
    return e, Ji, Jj


def batch_prior_jacobian(z, xi):
    """Residual log(Z^-1 Xi) and its Jacobian w.r.t. Xi."""
    _, _, between, _, log, _, jr_inv = group_ops(np.shape(z)[-1])
    e = log(between(z, xi))
    return e, jr_inv(e)


def batch_retract(x, delta):
    compose, _, _, exp, _, _, _ = group_ops(np.shape(x)[-1])
    return compose(x, exp(delta))


# --------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class Pose2:
    """Planar pose; theta is kept in (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))

    dim = 2
    tangent_dim = 3

    @classmethod
    def identity(cls) -> "Pose2":
        return cls()

    @classmethod
    def from_array(cls, a) -> "Pose2":
        return cls(a[0], a[1], a[2])

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def rotation_matrix(self) -> np.ndarray:
        c, s = np.cos(self.theta), np.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def rotation_angle(self) -> float:
        return abs(self.theta)

    def compose(self, other: "Pose2") -> "Pose2":
        return Pose2.from_array(se2_compose(self.to_array(), other.to_array()))

    def inverse(self) -> "Pose2":
        return Pose2.from_array(se2_inverse(self.to_array()))

    def between(self, other: "Pose2") -> "Pose2":
        return self.inverse().compose(other)

    def __matmul__(self, other: "Pose2") -> "Pose2":
        return self.compose(other)


@dataclass(frozen=True, eq=False)
class Pose3:
    """Spatial pose; rotation stored as a unit quaternion (w, x, y, z)."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        t = np.array(self.translation, dtype=float).reshape(3)
        q = quat_normalize(np.array(self.rotation, dtype=float).reshape(4))
        t.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    dim = 3
    tangent_dim = 6

    @classmethod
    def identity(cls) -> "Pose3":
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_array(cls, a) -> "Pose3":
        return cls(a[:3], a[3:7])

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.translation, self.rotation])

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def rotation_angle(self) -> float:
        return float(np.linalg.norm(so3_log_quat(self.rotation)))

    def compose(self, other: "Pose3") -> "Pose3":
        return Pose3.from_array(se3_compose(self.to_array(), other.to_array()))

    def inverse(self) -> "Pose3":
        return Pose3.from_array(se3_inverse(self.to_array()))

    def between(self, other: "Pose3") -> "Pose3":
        return self.inverse().compose(other)

    def __matmul__(self, other: "Pose3") -> "Pose3":
        return self.compose(other)

    def __eq__(self, other):
        if not isinstance(other, Pose3):
            return NotImplemented
        return np.array_equal(self.translation, other.translation) and np.array_equal(
            self.rotation, other.rotation
        )

    def __hash__(self):
        return hash((self.translation.tobytes(), self.rotation.tobytes()))

    def __repr__(self):
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        return f"Pose3(t=[{t}], q=[{q}])"


Pose = Union[Pose2, Pose3]


def pose_class(dimension: int):
    return Pose2 if dimension == 2 else Pose3


def exp(xi) -> Pose:
    """Exponential map; a 3-vector gives a Pose2, a 6-vector a Pose3."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape == (3,):
        return Pose2.from_array(se2_exp(xi))
    if xi.shape == (6,):
        return Pose3.from_array(se3_exp(xi))
    raise ValueError(f"tangent must have 3 or 6 components, got shape {xi.shape}")


def log(p: Pose) -> np.ndarray:
    """Logarithm map.

    At a rotation angle of exactly pi the branch returned is whichever the
    half-angle formulas produce; both are valid.
    """
    if isinstance(p, Pose2):
        return se2_log(p.to_array())
    return se3_log(p.to_array())


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def inverse(a: Pose) -> Pose:
    return a.inverse()


def between(a: Pose, b: Pose) -> Pose:
    return a.between(b)


def relative_residual(z: Pose, xi: Pose, xj: Pose) -> np.ndarray:
    """Tangent-space error log(Z^-1 Xi^-1 Xj); zero iff between(Xi, Xj) == Z."""
    return batch_relative_residual(z.to_array(), xi.to_array(), xj.to_array())


def poses_to_array(poses) -> np.ndarray:
    return np.array([p.to_array() for p in poses], dtype=float)


def array_to_poses(arr, dimension: int) -> list:
    cls = pose_class(dimension)
    return [cls.from_array(row) for row in np.asarray(arr, dtype=float)]
