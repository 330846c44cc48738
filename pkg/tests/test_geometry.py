import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from pgo import geometry as geo
from pgo.geometry import Pose2, Pose3


def _twist_matrix(xi):
    # independent route: exp of the 3x3 / 4x4 twist matrix by scipy's expm
    xi = np.asarray(xi, dtype=float)
    if len(xi) == 3:
        T = np.zeros((3, 3))
        T[:2, :2] = [[0, -xi[2]], [xi[2], 0]]
        T[:2, 2] = xi[:2]
        return T
    T = np.zeros((4, 4))
    T[:3, :3] = geo.hat3(xi[3:])
    T[:3, 3] = xi[:3]
    return T


def _to_matrix(p):
    if isinstance(p, Pose2):
        c, s = np.cos(p.theta), np.sin(p.theta)
        return np.array([[c, -s, p.x], [s, c, p.y], [0, 0, 1]])
    M = np.eye(4)
    M[:3, :3] = p.rotation_matrix()
    M[:3, 3] = p.translation
    return M


def _integrate_twist_se2(xi, steps=20000):
    # RK4 on x' = R(theta(s)) v with theta(s) = s * w, s in [0, 1]
    v, w = np.asarray(xi[:2]), xi[2]

    def f(s):
        c, sn = np.cos(s * w), np.sin(s * w)
        return np.array([c * v[0] - sn * v[1], sn * v[0] + c * v[1]])

    h = 1.0 / steps
    p = np.zeros(2)
    for k in range(steps):
        s = k * h
        p = p + h / 6 * (f(s) + 4 * f(s + h / 2) + f(s + h))
    return np.array([p[0], p[1], w])


def random_tangent(rng, dim, max_angle=3.0):
    if dim == 3:
        return np.array([*rng.normal(size=2) * 2, rng.uniform(-max_angle, max_angle)])
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return np.concatenate([rng.normal(size=3) * 2, axis * rng.uniform(0, max_angle)])


def random_pose(rng, dim):
    return geo.exp(random_tangent(rng, 3 if dim == 2 else 6))


# --------------------------------------------------------------------------
# examples


def test_exp_examples():
    assert geo.exp([0, 0, 0]) == Pose2()
    assert geo.exp([1, 0, 0]) == Pose2(1, 0, 0)
    p = geo.exp([1, 0, np.pi / 2])
    np.testing.assert_allclose(p.to_array(), [2 / np.pi, 2 / np.pi, np.pi / 2], atol=1e-14)


def test_exp_se2_matches_integrated_twist():
    xi = np.array([1.0, 0.0, np.pi / 2])
    oracle = _integrate_twist_se2(xi)
    np.testing.assert_allclose(oracle, [0.636619772, 0.636619772, np.pi / 2], atol=1e-9)
    np.testing.assert_allclose(geo.exp(xi).to_array(), oracle, atol=1e-12)


@pytest.mark.parametrize("dim", [3, 6])
def test_exp_matches_matrix_exponential(rng, dim):
    for _ in range(50):
        xi = random_tangent(rng, dim)
        np.testing.assert_allclose(_to_matrix(geo.exp(xi)), scipy.linalg.expm(_twist_matrix(xi)), atol=1e-10)


def test_log_examples():
    np.testing.assert_array_equal(geo.log(Pose2()), np.zeros(3))
    np.testing.assert_array_equal(geo.log(Pose3.identity()), np.zeros(6))
    np.testing.assert_allclose(geo.log(geo.exp([0.1, -0.2, 0.3])), [0.1, -0.2, 0.3], atol=1e-10)
    np.testing.assert_allclose(geo.log(Pose2(2 / np.pi, 2 / np.pi, np.pi / 2)), [1, 0, np.pi / 2], atol=1e-12)


def test_group_examples():
    p = Pose2(1, 2, 0.3)
    assert geo.compose(p, Pose2()) == p
    np.testing.assert_allclose(geo.between(p, p).to_array(), 0, atol=1e-15)
    q = geo.inverse(Pose2(1, 0, np.pi / 2))
    np.testing.assert_allclose(q.to_array(), [0, 1, -np.pi / 2], atol=1e-15)


def test_relative_residual_examples():
    a, b = Pose2(1, 2, 0.3), Pose2(-1, 0.5, 2.0)
    np.testing.assert_allclose(geo.relative_residual(geo.between(a, b), a, b), 0, atol=1e-14)
    np.testing.assert_allclose(geo.relative_residual(Pose2(1, 0, 0), Pose2(), Pose2()), [-1, 0, 0], atol=1e-15)


def test_theta_wrapped():
    assert Pose2(0, 0, 3 * np.pi).theta == pytest.approx(np.pi)
    assert Pose2(0, 0, -np.pi).theta == pytest.approx(np.pi)
    p = geo.compose(Pose2(0, 0, 3.0), Pose2(0, 0, 3.0))
    assert -np.pi < p.theta <= np.pi


def test_pose3_quaternion_normalized_and_rotation_proper(rng):
    for _ in range(100):
        a, b = random_pose(rng, 3), random_pose(rng, 3)
        c = geo.compose(a, geo.inverse(b))
        assert abs(np.linalg.norm(c.rotation) - 1) < 1e-12
        R = c.rotation_matrix()
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-10)
        assert abs(np.linalg.det(R) - 1) < 1e-10


def test_small_angle_branches_continuous():
    for dim in (3, 6):
        for eps in (1e-9, 1e-8, 2e-7, 1e-5):
            xi = np.zeros(dim)
            xi[-1] = eps
            xi[0] = 1.0
            np.testing.assert_allclose(geo.log(geo.exp(xi)), xi, atol=1e-15)


# --------------------------------------------------------------------------
# properties


@pytest.mark.parametrize("dim", [3, 6])
def test_log_exp_round_trip_1000(rng, dim):
    xs = np.array([random_tangent(rng, dim) for _ in range(1000)])
    _, _, _, exp, log, _, _ = geo.group_ops(3 if dim == 3 else 7)
    np.testing.assert_allclose(log(exp(xs)), xs, atol=1e-9)


@pytest.mark.parametrize("dim", [2, 3])
def test_compose_inverse_is_identity(rng, dim):
    for _ in range(100):
        p = random_pose(rng, dim)
        e = geo.compose(p, geo.inverse(p)).to_array()
        np.testing.assert_allclose(e, geo.pose_class(dim).identity().to_array(), atol=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
def test_associativity(rng, dim):
    for _ in range(100):
        a, b, c = (random_pose(rng, dim) for _ in range(3))
        lhs = geo.compose(geo.compose(a, b), c)
        rhs = geo.compose(a, geo.compose(b, c))
        np.testing.assert_allclose(_to_matrix(lhs), _to_matrix(rhs), atol=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
def test_between_of_compose(rng, dim):
    for _ in range(50):
        a, d = random_pose(rng, dim), random_pose(rng, dim)
        np.testing.assert_allclose(_to_matrix(geo.between(a, geo.compose(a, d))), _to_matrix(d), atol=1e-12)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-50, 50))
def test_pose2_theta_range(x, y, th):
    p = Pose2(x, y, th)
    assert -np.pi < p.theta <= np.pi
    assert np.isclose(np.cos(p.theta), np.cos(th), atol=1e-9)


def _numeric_jacobians(z, xi, xj, h=1e-6):
    compose, _, _, exp, _, _, _ = geo.group_ops(len(z))
    d = geo.tangent_dim(len(z))
    res = lambda a, b: geo.batch_relative_residual(z, a, b)  # noqa: E731
    Ji, Jj = np.zeros((d, d)), np.zeros((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        Ji[:, k] = (res(compose(xi, exp(e)), xj) - res(compose(xi, exp(-e)), xj)) / (2 * h)
        Jj[:, k] = (res(xi, compose(xj, exp(e))) - res(xi, compose(xj, exp(-e)))) / (2 * h)
    return Ji, Jj


@pytest.mark.parametrize("dim", [2, 3])
def test_relative_jacobians_match_finite_differences(rng, dim):
    worst = 0.0
    for _ in range(100):
        xi, xj = random_pose(rng, dim).to_array(), random_pose(rng, dim).to_array()
        # measurement near the true relative pose, as in an optimization
        z = geo.batch_retract(geo.group_ops(len(xi))[2](xi, xj), 0.3 * rng.normal(size=geo.tangent_dim(len(xi))))
        _, Ji, Jj = geo.batch_relative_jacobians(z, xi, xj)
        Ni, Nj = _numeric_jacobians(z, xi, xj)
        for A, N in ((Ji, Ni), (Jj, Nj)):
            worst = max(worst, np.max(np.abs(A - N)) / max(1.0, np.max(np.abs(N))))
    assert worst < 1e-5


@pytest.mark.parametrize("dim", [2, 3])
def test_prior_jacobian_matches_finite_differences(rng, dim):
    for _ in range(50):
        x = random_pose(rng, dim).to_array()
        z = geo.batch_retract(x, 0.3 * rng.normal(size=geo.tangent_dim(len(x))))
        e, J = geo.batch_prior_jacobian(z, x)
        d = len(e)
        N = np.zeros((d, d))
        for k in range(d):
            h = np.zeros(d)
            h[k] = 1e-6
            N[:, k] = (geo.batch_prior_jacobian(z, geo.batch_retract(x, h))[0]
                       - geo.batch_prior_jacobian(z, geo.batch_retract(x, -h))[0]) / 2e-6
        np.testing.assert_allclose(J, N, atol=1e-5 * max(1, np.abs(N).max()))


def test_residual_first_order_in_right_perturbation(rng):
    # perturbing Xj by exp(delta) moves the residual by about Jr^-1(e) delta
    xi, xj = random_pose(rng, 3).to_array(), random_pose(rng, 3).to_array()
    z = geo.se3_between(xi, xj)
    delta = 1e-5 * rng.normal(size=6)
    e1 = geo.batch_relative_residual(z, xi, geo.batch_retract(xj, delta))
    np.testing.assert_allclose(e1, delta, atol=1e-9)


def test_array_round_trip(rng):
    poses = [random_pose(rng, 3) for _ in range(5)]
    back = geo.array_to_poses(geo.poses_to_array(poses), 3)
    assert back == poses
