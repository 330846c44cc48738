"""Clamped B-splines and the alpha-interpolated family of concave mu schedules.

A shape function maps normalized graduation progress t in [0, 1] to the
kernel control parameter mu. Its control polygon is a linear blend of a
gentle inlier polygon (alpha = 0) and an aggressive outlier polygon
(alpha = 1); both are nondecreasing and concave, so every blend is too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_DEGREE = 3
# On clamped knots the curve is concave only if the derivative's control
# points k * diff(d) / span are nonincreasing; a concave polygon alone is not
# enough because the end spans are short. Both defaults satisfy the stronger
# condition, and so does every blend of them.
DEFAULT_D0 = (0.0, 0.30, 0.57, 0.79, 0.93, 1.0)
DEFAULT_D1 = (0.0, 0.60, 0.82, 0.92, 0.98, 1.0)

_TOL = 1e-12


class SplineError(ValueError):
    pass


class IndexOutOfRange(SplineError, IndexError):
    pass


class AlphaOutOfRange(SplineError):
    pass


def clamped_uniform_knots(n_control: int, degree: int) -> np.ndarray:
    """[0]*(k+1) + uniform interior + [1]*(k+1); length n_control + k + 1."""
    if n_control < degree + 1:
        raise SplineError(f"need at least {degree + 1} control points for degree {degree}")
    interior = np.linspace(0.0, 1.0, n_control - degree + 1)[1:-1]
    return np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])


def derivative_control_points(d, knots, k: int) -> np.ndarray:
    """Control points of s'(u): k (d[i+1] - d[i]) / (t[i+k+1] - t[i+1])."""
    d = np.asarray(d, dtype=float)
    t = np.asarray(knots, dtype=float)
    span = t[k + 1: k + len(d)] - t[1: len(d)]
    return _div(k * np.diff(d), span)


def _check_concave_curve(d, knots, k: int):
    if k >= 2 and np.any(np.diff(derivative_control_points(d, knots, k)) > 1e-9):
        raise SplineError("derivative control points must be nonincreasing for a concave curve")


def _div(num, den):
    # the recursion's 0/0 terms are defined as 0
    return np.where(den == 0.0, 0.0, num / np.where(den == 0.0, 1.0, den))


def basis(i: int, k: int, u, knots) -> np.ndarray:
    """Cox-de Boor basis N_i^k(u); vectorized over ``u``.

    The last non-empty knot interval is treated as closed so that the
    final basis function equals 1 at the right end of the knot range.
    """
    knots = np.asarray(knots, dtype=float)
    n_basis = len(knots) - k - 1
    if not 0 <= i < n_basis:
        raise IndexOutOfRange(f"basis index {i} outside [0, {n_basis - 1}]")
    u = np.asarray(u, dtype=float)
    out = _basis(i, k, u, knots)
    return out if out.ndim else float(out)


def _basis(i, k, u, t):
    if k == 0:
        inside = (t[i] <= u) & (u < t[i + 1])
        # close the last non-empty interval on the right
        last = np.nonzero(t[:-1] < t[1:])[0][-1]
        if i == last:
            inside = inside | (u == t[i + 1])
        return inside.astype(float)
    left = _div(u - t[i], t[i + k] - t[i]) * _basis(i, k - 1, u, t)
    right = _div(t[i + k + 1] - u, t[i + k + 1] - t[i + 1]) * _basis(i + 1, k - 1, u, t)
    return left + right


def basis_matrix(k: int, u, knots) -> np.ndarray:
    """All basis functions at every ``u``: shape (len(u), n_basis)."""
    knots = np.asarray(knots, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n_basis = len(knots) - k - 1
    return np.stack([_basis(i, k, u, knots) for i in range(n_basis)], axis=-1)


@dataclass(frozen=True, eq=False)
class SplineDef:
    degree: int
    control_points: np.ndarray
    knots: np.ndarray

    def __post_init__(self):
        d = np.array(self.control_points, dtype=float)
        t = np.array(self.knots, dtype=float)
        d.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "control_points", d)
        object.__setattr__(self, "knots", t)
        k = self.degree
        if k < 0:
            raise SplineError("degree must be nonnegative")
        if len(t) != len(d) + k + 1:
            raise SplineError(f"expected {len(d) + k + 1} knots, got {len(t)}")
        if np.any(np.diff(t) < 0) or t[0] < 0 or t[-1] > 1:
            raise SplineError("knots must be nondecreasing within [0, 1]")
        if not (np.all(t[: k + 1] == 0.0) and np.all(t[-(k + 1):] == 1.0)):
            raise SplineError("knot vector must be clamped to 0 and 1")
        if np.any(d < -_TOL) or np.any(d > 1 + _TOL):
            raise SplineError("control points must lie in [0, 1]")
        if np.any(np.diff(d) < -_TOL):
            raise SplineError("control points must be nondecreasing")
        if np.any(np.diff(d, 2) > _TOL):
            raise SplineError("control polygon must be concave")
        _check_concave_curve(d, t, k)


def eval_spline(s: SplineDef, u):
    """s(u) = sum_i N_i^k(u) d_i; vectorized over ``u``."""
    u = np.asarray(u, dtype=float)
    B = basis_matrix(s.degree, u, s.knots)
    out = B @ s.control_points
    return out.reshape(u.shape) if u.ndim else float(out[0])


def _check_polygon(d, name):
    d = np.asarray(d, dtype=float)
    if d.ndim != 1 or len(d) < 2:
        raise SplineError(f"{name} must be a 1-D polygon with at least two points")
    if abs(d[-1] - 1.0) > _TOL:
        raise SplineError(f"{name} must end at 1")
    if np.any(np.diff(d) < -_TOL) or np.any(np.diff(d, 2) > _TOL) or d[0] < 0:
        raise SplineError(f"{name} must be nonnegative, nondecreasing and concave")
    return d


@dataclass(frozen=True, eq=False)
class ShapeFamily:
    """The inlier/outlier polygon pair plus the spline degree."""

    degree: int = DEFAULT_DEGREE
    d0: tuple = DEFAULT_D0
    d1: tuple = DEFAULT_D1

    def __post_init__(self):
        d0 = _check_polygon(self.d0, "d0")
        d1 = _check_polygon(self.d1, "d1")
        if d0.shape != d1.shape:
            raise SplineError("d0 and d1 need the same number of control points")
        object.__setattr__(self, "d0", tuple(d0))
        object.__setattr__(self, "d1", tuple(d1))
        # validates degree against the polygon size
        knots = clamped_uniform_knots(len(d0), self.degree)
        # the condition is linear in d, so blends and affine lifts inherit it
        _check_concave_curve(d0, knots, self.degree)
        _check_concave_curve(d1, knots, self.degree)
        object.__setattr__(self, "_knots", knots)

    @property
    def knots(self) -> np.ndarray:
        return self._knots

    def control_points(self, alpha, mu_init=0.0) -> np.ndarray:
        """Blended polygon(s), affinely lifted to start at ``mu_init``."""
        alpha = np.asarray(alpha, dtype=float)[..., None]
        mu_init = np.asarray(mu_init, dtype=float)[..., None]
        d = (1.0 - alpha) * np.asarray(self.d0) + alpha * np.asarray(self.d1)
        return mu_init + (1.0 - mu_init) * d

    def mu(self, alpha, t, mu_init=0.0) -> np.ndarray:
        """Vectorized shape_mu over matching arrays of alpha, t and mu_init."""
        alpha, t, mu_init = np.broadcast_arrays(
            np.asarray(alpha, dtype=float), np.clip(np.asarray(t, dtype=float), 0.0, 1.0),
            np.asarray(mu_init, dtype=float),
        )
        B = basis_matrix(self.degree, t.ravel(), self._knots)
        D = self.control_points(alpha.ravel(), mu_init.ravel())
        out = np.clip(np.einsum("ni,ni->n", B, D), 0.0, 1.0)
        return out.reshape(t.shape)


DEFAULT_FAMILY = ShapeFamily()


@dataclass(frozen=True, eq=False)
class ShapeFunction:
    alpha: float
    spline: SplineDef


def make_shape_function(alpha: float, family: ShapeFamily = DEFAULT_FAMILY, mu_init: float = 0.0) -> ShapeFunction:
    """Shape function whose polygon is (1 - alpha) * d0 + alpha * d1.

    With ``mu_init > 0`` the polygon is mapped affinely onto [mu_init, 1],
    which keeps it monotone and concave.
    """
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in [0, 1], got {alpha}")
    if not 0.0 <= mu_init <= 1.0:
        raise SplineError(f"mu_init must lie in [0, 1], got {mu_init}")
    d = family.control_points(alpha, mu_init)
    return ShapeFunction(float(alpha), SplineDef(family.degree, d, family.knots))


def shape_mu(sf: ShapeFunction, t):
    """mu at graduation progress ``t``; nondecreasing and concave in t."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    out = np.clip(eval_spline(sf.spline, t), 0.0, 1.0)
    return out if np.ndim(out) else float(out)
