import numpy as np
import pytest
from conftest import dataset_path, require
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from pgo import geometry as geo
from pgo.geometry import Pose2, Pose3
from pgo.graph import (
    Factor, FactorKind, GraphError, LabelMismatch, LoopLabel, MalformedLine, MixedDimensions,
    NonPositiveDefiniteInformation, PoseGraph, apply_labels, dead_reckoning, ensure_prior, loop_mahalanobis,
    mahalanobis, parse_g2o, parse_labels, read_g2o, sqrt_information_from, whitened_residual, write_g2o,
    write_labels,
)

SE2_EDGE = "EDGE_SE2 0 1 1 0 0 1 0 0 1 0 1"


def random_graph(rng, dim, n=10, n_loops=4):
    def pose():
        if dim == 2:
            return Pose2(*rng.normal(size=2) * 3, rng.uniform(-3, 3))
        return geo.exp(np.concatenate([rng.normal(size=3) * 3, rng.normal(size=3)]))

    d = 3 if dim == 2 else 6

    def info():
        A = rng.normal(size=(d, d))
        return sqrt_information_from(A @ A.T + d * np.eye(d))

    poses = [pose() for _ in range(n)]
    factors = [Factor(FactorKind.ODOMETRY, k, k + 1, pose(), info()) for k in range(n - 1)]
    for _ in range(n_loops):
        i, j = sorted(rng.choice(n, size=2, replace=False))
        if j - i < 2:
            j = min(i + 2, n - 1) if i + 2 < n else i - 2
        factors.append(Factor(FactorKind.LOOP, int(i), int(j), pose(), info()))
    return PoseGraph(tuple(poses), tuple(factors), dim)


def assert_graphs_close(a, b, atol=1e-9):
    assert a.dimension == b.dimension and len(a.poses) == len(b.poses) and len(a.factors) == len(b.factors)
    np.testing.assert_allclose(a.pose_array, b.pose_array, atol=atol)
    for f, g in zip(a.factors, b.factors):
        assert (f.kind, f.i, f.j) == (g.kind, g.i, g.j)
        np.testing.assert_allclose(f.measurement.to_array(), g.measurement.to_array(), atol=atol)
        np.testing.assert_allclose(f.information, g.information, rtol=1e-9, atol=atol)


# --------------------------------------------------------------------------
# parsing


def test_parse_vertex_example():
    g = parse_g2o("VERTEX_SE2 0 1.0 2.0 0.5")
    assert g.poses == (Pose2(1.0, 2.0, 0.5),) and g.dimension == 2


def test_parse_edge_example():
    g = parse_g2o("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\n" + SE2_EDGE)
    (f,) = g.factors
    assert f.kind is FactorKind.ODOMETRY and (f.i, f.j) == (0, 1)
    assert f.measurement == Pose2(1, 0, 0)
    np.testing.assert_array_equal(f.information, np.eye(3))


def test_loop_by_index_gap():
    text = "\n".join(f"VERTEX_SE2 {k} 0 0 0" for k in range(4)) + "\nEDGE_SE2 3 1 0 0 0 1 0 0 1 0 1\nEDGE_SE2 2 1 0 0 0 1 0 0 1 0 1"
    g = parse_g2o(text)
    assert [f.kind for f in g.factors] == [FactorKind.LOOP, FactorKind.ODOMETRY]


def test_parse_se3_and_quaternion_order():
    text = ("VERTEX_SE3:QUAT 0 1 2 3 0 0 0.7071067811865476 0.7071067811865476\n"
            "VERTEX_SE3:QUAT 1 0 0 0 0 0 0 1\n"
            "EDGE_SE3:QUAT 0 1 1 0 0 0 0 0 1 " + " ".join(
                str(v) for v in np.eye(6)[np.triu_indices(6)]))
    g = parse_g2o(text)
    assert g.dimension == 3
    np.testing.assert_allclose(g.poses[0].rotation, [0.7071067811865476, 0, 0, 0.7071067811865476])
    np.testing.assert_allclose(g.poses[0].translation, [1, 2, 3])
    np.testing.assert_allclose(g.factors[0].information, np.eye(6))


def test_comments_and_blank_lines_ignored():
    g = parse_g2o("# header\n\nVERTEX_SE2 0 0 0 0\n   # indented comment\n")
    assert len(g.poses) == 1


def test_information_upper_triangular_row_major():
    text = "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 0 0 0\nEDGE_SE2 0 1 0 0 0 4 1 2 5 3 6"
    f = parse_g2o(text).factors[0]
    np.testing.assert_allclose(f.information, [[4, 1, 2], [1, 5, 3], [2, 3, 6]], rtol=1e-12)
    L = f.sqrt_information
    assert np.allclose(L, np.triu(L)) and np.all(np.diag(L) > 0)


def test_fix_adds_prior():
    g = parse_g2o("VERTEX_SE2 0 1 2 0\nFIX 0")
    assert g.has_prior and g.factors[0].kind is FactorKind.PRIOR


@pytest.mark.parametrize("text, line", [
    ("VERTEX_SE2 0 1.0 2.0", 1),
    ("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 0 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0", 3),
    ("VERTEX_SE2 0 a 0 0", 1),
    ("# c\nBOGUS 1 2", 2),
])
def test_malformed_line(text, line):
    with pytest.raises(MalformedLine) as exc:
        parse_g2o(text)
    assert exc.value.line_no == line


@pytest.mark.parametrize("info", ["1 0 0 -1 0 1", "1 0 0 0 0 1", "1 2 0 1 0 1", "1 0 0 1e-13 0 1"])
def test_non_positive_definite_information(info):
    text = f"VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 0 0 0\nEDGE_SE2 0 1 0 0 0 {info}"
    with pytest.raises(NonPositiveDefiniteInformation) as exc:
        parse_g2o(text)
    assert exc.value.line_no == 3


def test_mixed_dimensions():
    with pytest.raises(MixedDimensions):
        parse_g2o("VERTEX_SE2 0 0 0 0\nVERTEX_SE3:QUAT 1 0 0 0 0 0 0 1")


def test_non_contiguous_ids():
    with pytest.raises(GraphError):
        parse_g2o("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 2 0 0 0")


def test_dangling_factor():
    with pytest.raises(GraphError):
        parse_g2o("VERTEX_SE2 0 0 0 0\n" + SE2_EDGE)


def test_truth_label_only_on_loops():
    with pytest.raises(GraphError):
        Factor(FactorKind.ODOMETRY, 0, 1, Pose2(), np.eye(3), LoopLabel.TRUE_LOOP)


# --------------------------------------------------------------------------
# writing


def test_write_empty_and_single():
    assert write_g2o(PoseGraph((), (), 2)) == ""
    assert write_g2o(PoseGraph((Pose2(1, 2, 0.5),), (), 2)) == "VERTEX_SE2 0 1 2 0.5\n"


@pytest.mark.parametrize("dim", [2, 3])
def test_round_trip_random_graph(rng, dim):
    for _ in range(5):
        g = ensure_prior(random_graph(rng, dim))
        back = parse_g2o(write_g2o(g))
        assert_graphs_close(g, back)
        # emission is idempotent once values carry 12 digits
        assert write_g2o(back) == write_g2o(parse_g2o(write_g2o(back)))


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([2, 3]))
def test_parse_write_parse_idempotent(seed, dim):
    text = write_g2o(random_graph(np.random.default_rng(seed), dim, n=5, n_loops=2))
    once = parse_g2o(text)
    assert_graphs_close(once, parse_g2o(write_g2o(once)), atol=1e-10)


def test_twelve_significant_digits():
    assert "3.14159265359" in write_g2o(PoseGraph((Pose2(np.pi, 0, 0),), (), 2))


def test_sqrt_information_reproduces_information(rng):
    for d in (3, 6):
        A = rng.normal(size=(d, d))
        info = A @ A.T + np.eye(d)
        L = sqrt_information_from(info)
        assert np.allclose(L, np.triu(L)) and np.all(np.diag(L) > 0)
        np.testing.assert_allclose(L.T @ L, info, rtol=1e-9)


# --------------------------------------------------------------------------
# labels


def test_labels_round_trip():
    text = "\n".join(f"VERTEX_SE2 {k} 0 0 0" for k in range(5)) + "\n" + "\n".join(
        f"EDGE_SE2 {i} {j} 0 0 0 1 0 0 1 0 1" for i, j in [(0, 1), (1, 2), (2, 3), (3, 4), (0, 3), (1, 4)])
    g = parse_g2o(text)
    labels = parse_labels("LOOP_LABEL 0 3 true\n# x\nLOOP_LABEL 1 4 false\n")
    lg = apply_labels(g, labels)
    assert lg.labels() == [LoopLabel.TRUE_LOOP, LoopLabel.FALSE_LOOP]
    assert write_labels(lg) == "LOOP_LABEL 0 3 true\nLOOP_LABEL 1 4 false\n"
    with pytest.raises(LabelMismatch):
        apply_labels(g, labels[:1])
    with pytest.raises(LabelMismatch):
        apply_labels(g, [(0, 3, LoopLabel.TRUE_LOOP), (1, 3, LoopLabel.TRUE_LOOP)])
    with pytest.raises(LabelMismatch):
        write_labels(g)
    with pytest.raises(MalformedLine):
        parse_labels("LOOP_LABEL 0 3 maybe")


# --------------------------------------------------------------------------
# residuals


def _single_edge(z, L, xi, xj):
    return PoseGraph((xi, xj), (Factor(FactorKind.ODOMETRY, 0, 1, z, L),), 2)


def test_whitened_residual_examples():
    a, b = Pose2(1, 2, 0.3), Pose2(-1, 0.5, 2.0)
    g = _single_edge(geo.between(a, b), np.eye(3), a, b)
    np.testing.assert_allclose(whitened_residual(g.factors[0], g), 0, atol=1e-14)
    assert mahalanobis(g.factors[0], g) == pytest.approx(0, abs=1e-26)
    g = _single_edge(Pose2(1, 0, 0), np.eye(3), Pose2(), Pose2())
    raw = geo.relative_residual(Pose2(1, 0, 0), Pose2(), Pose2())
    np.testing.assert_allclose(whitened_residual(g.factors[0], g), raw)
    g2 = _single_edge(Pose2(1, 0, 0), 2 * np.eye(3), Pose2(), Pose2())
    np.testing.assert_allclose(whitened_residual(g2.factors[0], g2), 2 * raw)


def test_mahalanobis_examples():
    # measurement chosen so the whitened residual is exactly (1, 0, 0) and (1, 2, 2)
    for target, m in (((1, 0, 0), 1.0), ((1, 2, 2), 9.0)):
        z = geo.inverse(geo.exp(np.array(target, dtype=float) * 1e-3))
        g = _single_edge(z, 1e3 * np.eye(3), Pose2(), Pose2())
        np.testing.assert_allclose(whitened_residual(g.factors[0], g), target, atol=1e-12)
        assert mahalanobis(g.factors[0], g) == pytest.approx(m, rel=1e-12)


def test_prior_residual():
    z = Pose2(1, 0, 0)
    g = PoseGraph((Pose2(),), (Factor(FactorKind.PRIOR, 0, 0, z, np.eye(3)),), 2)
    np.testing.assert_allclose(whitened_residual(g.factors[0], g), geo.log(geo.between(z, Pose2())))


@pytest.mark.parametrize("dim", [2, 3])
def test_mahalanobis_invariant_under_orthogonal_whitening(rng, dim):
    d = 3 if dim == 2 else 6
    for seed in range(20):
        g = random_graph(rng, dim)
        f = g.factors[-1]
        Q = special_ortho_group.rvs(d, random_state=seed)
        g2 = g.with_factors(list(g.factors[:-1]) + [Factor(f.kind, f.i, f.j, f.measurement, Q @ f.sqrt_information)])
        assert mahalanobis(g2.factors[-1], g2) == pytest.approx(mahalanobis(f, g), rel=1e-10)


def test_loop_mahalanobis_matches_scalar(rng):
    g = random_graph(rng, 3)
    np.testing.assert_allclose(loop_mahalanobis(g), [mahalanobis(f, g) for f in g.loop_factors], rtol=1e-12)


def test_dead_reckoning_composes_odometry():
    z = Pose2(1, 0, np.pi / 2)
    factors = [Factor(FactorKind.ODOMETRY, k, k + 1, z, np.eye(3)) for k in range(4)]
    g = PoseGraph(tuple(Pose2() for _ in range(5)), tuple(factors), 2)
    np.testing.assert_allclose(dead_reckoning(g)[4], [0, 0, 0], atol=1e-12)
    rev = PoseGraph(g.poses, (Factor(FactorKind.ODOMETRY, 1, 0, geo.inverse(z), np.eye(3)),) + g.factors[1:], 2)
    np.testing.assert_allclose(dead_reckoning(rev), dead_reckoning(g), atol=1e-12)


# --------------------------------------------------------------------------
# datasets


@pytest.mark.parametrize("name, dim", [
    ("manhattan3500.g2o", 2), ("sphere2500.g2o", 3), ("intel.g2o", 2), ("csail.g2o", 2),
])
def test_dataset_parses_with_loops(name, dim):
    g = read_g2o(require(dataset_path(name)))
    assert g.dimension == dim
    assert len(g.loop_indices) > 0
    assert all(isinstance(p, Pose2 if dim == 2 else Pose3) for p in g.poses[:5])
