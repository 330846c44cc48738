import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from pgo import geometry as geo
from pgo.gnc import Classification
from pgo.graph import LoopLabel
from pgo.metrics import (
    ClassificationMetrics, DegenerateGeometry, LengthMismatch, align, ate, precision_recall, rpe,
    trajectory_metrics,
)

T, F = LoopLabel.TRUE_LOOP, LoopLabel.FALSE_LOOP
IN, AMB, OUT = Classification.INLIER, Classification.AMBIGUOUS, Classification.OUTLIER


def random_se2(rng, n=30):
    return np.column_stack([rng.normal(size=(n, 2)) * 5, rng.uniform(-np.pi, np.pi, n)])


def random_se3(rng, n=30):
    return np.array([geo.exp(np.concatenate([rng.normal(size=3) * 5, rng.normal(size=3)])).to_array()
                     for _ in range(n)])


def with_positions(P):
    """Pose array with positions ``P`` and identity rotations."""
    if P.shape[1] == 2:
        return np.column_stack([P, np.zeros(len(P))])
    return np.column_stack([P, np.ones(len(P)), np.zeros((len(P), 3))])


def transform_all(X, T_):
    compose = geo.group_ops(X.shape[1])[0]
    return compose(np.broadcast_to(T_.to_array(), X.shape), X)


# --------------------------------------------------------------------------
# alignment and ATE


def test_align_identity(rng):
    X = random_se3(rng)
    R, t = align(X, X)
    np.testing.assert_allclose(R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(t, 0, atol=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
def test_align_recovers_rigid_transform(rng, dim):
    X = random_se2(rng) if dim == 2 else random_se3(rng)
    P = X[:, :dim]
    R = special_ortho_group.rvs(dim, random_state=3)
    t = rng.normal(size=dim)
    Rh, th = align(X, with_positions(P @ R.T + t))
    np.testing.assert_allclose(Rh, R, atol=1e-9)
    np.testing.assert_allclose(th, t, atol=1e-9)


def test_alignment_is_optimal(rng):
    P = rng.normal(size=(50, 3)) * 4
    Q = P + rng.normal(size=P.shape) * 0.3
    unaligned = np.sqrt(np.mean(np.sum((P - Q) ** 2, axis=1)))
    assert ate(with_positions(P), with_positions(Q)) <= unaligned
    # small perturbations of the optimum never do better
    R, t = align(with_positions(P), with_positions(Q))
    best = np.mean(np.sum((P @ R.T + t - Q) ** 2, axis=1))
    for _ in range(20):
        dR = geo.quat_to_matrix(geo.so3_exp_quat(rng.normal(size=3) * 1e-3))
        assert np.mean(np.sum((P @ (dR @ R).T + t + rng.normal(size=3) * 1e-3 - Q) ** 2, axis=1)) >= best


def test_ate_examples(rng):
    X = random_se2(rng)
    assert ate(X, X) == pytest.approx(0, abs=1e-12)
    Y = X.copy()
    Y[:, :2] += [3.0, -2.0]
    assert ate(Y, X) == pytest.approx(0, abs=1e-12)
    gt = np.array([[10, 0, 0], [-10, 0, 0], [0, 10, 0], [0, -10, 0]], dtype=float)
    est = np.array([[13, 0, 0], [-13, 0, 0], [0, 14, 0], [0, -14, 0]], dtype=float)
    # residuals 3, 3, 4, 4 with the identity as optimal alignment
    assert ate(est, gt) == pytest.approx(np.sqrt(25 / 2), rel=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
def test_ate_rigid_invariance(rng, dim):
    X = random_se2(rng) if dim == 2 else random_se3(rng)
    E = geo.batch_retract(X, rng.normal(size=(len(X), 3 if dim == 2 else 6)) * 0.1)
    for _ in range(10):
        Tr = geo.exp(rng.normal(size=3 if dim == 2 else 6) * 3)
        assert abs(ate(transform_all(E, Tr), X) - ate(E, X)) < 1e-9


def test_collinear_positions_warn():
    P = np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)])
    with pytest.warns(DegenerateGeometry):
        R, t = align(with_positions(P), with_positions(P + [1, 2, 3]))
    np.testing.assert_array_equal(R, np.eye(3))
    np.testing.assert_allclose(t, [1, 2, 3])


def test_length_mismatch(rng):
    X = random_se2(rng)
    with pytest.raises(LengthMismatch):
        ate(X, X[:-1])
    with pytest.raises(LengthMismatch):
        rpe(X, X[:-1])
    with pytest.raises(LengthMismatch):
        precision_recall([T], [IN, IN])


# --------------------------------------------------------------------------
# RPE


@pytest.mark.parametrize("dim", [2, 3])
def test_rpe_zero_for_identical_and_rigidly_moved(rng, dim):
    X = random_se2(rng) if dim == 2 else random_se3(rng)
    assert rpe(X, X) == pytest.approx((0, 0), abs=1e-12)
    Tr = geo.exp(rng.normal(size=3 if dim == 2 else 6) * 3)
    assert rpe(transform_all(X, Tr), X) == pytest.approx((0, 0), abs=1e-9)
    assert rpe(X, transform_all(X, Tr)) == pytest.approx((0, 0), abs=1e-9)


def test_rpe_single_corrupted_step():
    gt = np.array([[k, 0.0, 0.3 * k] for k in range(11)])
    est = gt.copy()
    est[6:, :2] += [1.0, 0.0]
    t, r = rpe(est, gt)
    assert t == pytest.approx(np.sqrt(1 / 10), rel=1e-12)
    assert r == pytest.approx(0, abs=1e-12)


def test_rpe_rotation_error():
    gt = np.zeros((5, 3))
    est = gt.copy()
    est[3:, 2] = 0.2
    assert rpe(est, gt)[1] == pytest.approx(np.sqrt(0.04 / 4))


def test_rpe_delta():
    gt = np.array([[k, 0.0, 0.0] for k in range(11)])
    with pytest.raises(ValueError):
        rpe(gt, gt, delta=0)
    assert rpe(gt, gt, delta=20) == (0.0, 0.0)


def test_trajectory_metrics_nonnegative(rng):
    X = random_se3(rng)
    E = geo.batch_retract(X, rng.normal(size=(len(X), 6)) * 0.1)
    m = trajectory_metrics(E, X)
    assert m.ate_rmse > 0 and m.rpe_trans_rmse > 0 and m.rpe_rot_rmse > 0


# --------------------------------------------------------------------------
# classification


def test_precision_recall_examples():
    m = precision_recall([T, T, F, F], [IN, AMB, OUT, OUT])
    assert (m.precision, m.recall) == (1.0, 1.0)
    m = precision_recall([T, T, T, T], [IN, IN, IN, OUT])
    assert (m.tp, m.fn, m.fp) == (3, 1, 0)
    assert m.recall == 0.75 and m.precision == 1.0
    m = precision_recall(["true", "false"], [IN, IN])
    assert (m.tp, m.fp) == (1, 1)


def test_empty_denominators():
    assert ClassificationMetrics(0, 0, 5, 0).precision == 1.0
    assert ClassificationMetrics(0, 0, 5, 0).recall == 1.0


@given(st.lists(st.tuples(st.booleans(), st.sampled_from([0, 1, 2])), max_size=50))
def test_precision_recall_properties(rows):
    labels = [T if t else F for t, _ in rows]
    cls = [c for _, c in rows]
    m = precision_recall(labels, cls)
    assert 0 <= m.precision <= 1 and 0 <= m.recall <= 1
    assert m.tp + m.fn == labels.count(T)
    assert m.tp + m.fp + m.tn + m.fn == len(rows)
