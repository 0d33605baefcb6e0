import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formnet.estimation import (
    EstimationError,
    MeasurementSet,
    RankDeficient,
    anchored_blue,
    blue_estimate,
    link_variance,
    ls_estimate,
    partition_incidence,
)
from formnet.graph import incidence_from_pairs

from conftest import random_pairs
from oracles import dense_anchored_solve


def test_ls_single_edge_minimum_norm():
    est = ls_estimate([[1.0, -1.0]], MeasurementSet([[4.0]], [[1.0]]))
    assert np.allclose(est.positions.ravel(), [2.0, -2.0], atol=1e-12)


def test_ls_zero_measurements():
    H = incidence_from_pairs([(0, 1), (1, 2)], 3)
    est = ls_estimate(H, MeasurementSet(np.zeros((2, 2)), np.eye(4)))
    assert np.all(est.positions == 0)


def test_ls_gauge_freedom_and_residual():
    rng = np.random.default_rng(3)
    H = incidence_from_pairs([(0, 1), (1, 2), (2, 0), (2, 3)], 4)
    z = rng.normal(size=(4, 1))
    x = ls_estimate(H, MeasurementSet(z, np.eye(4))).positions.ravel()
    resid = H.T @ H @ x - H.T @ z.ravel()
    assert np.linalg.norm(resid) < 1e-9 * np.linalg.norm(H.T @ z.ravel())
    shifted = x + 7.5
    assert np.allclose(H.T @ H @ shifted, H.T @ H @ x)
    assert abs(x.sum()) < 1e-12


def test_blue_identity_matches_ls():
    rng = np.random.default_rng(1)
    H = incidence_from_pairs([(0, 1), (1, 2), (0, 2)], 3)
    z = rng.normal(size=(3, 2))
    a = ls_estimate(H, MeasurementSet(z, np.eye(6))).positions
    for s2 in (1.0, 0.01, 25.0):
        b = blue_estimate(H, MeasurementSet(z, s2 * np.eye(6))).positions
        assert np.max(np.abs(a - b)) <= 1e-12


def test_blue_inverse_variance_fusion():
    z1, z2 = 3.0, 1.0
    H = incidence_from_pairs([(0, 1), (0, 1)], 2)
    est = blue_estimate(H, MeasurementSet([[z1], [z2]], np.diag([1.0, 4.0])))
    x = est.positions.ravel()
    assert x[0] - x[1] == pytest.approx((4 * z1 + z2) / 5, abs=1e-12)


def test_blue_scale_invariance():
    rng = np.random.default_rng(2)
    H = incidence_from_pairs([(0, 1), (1, 2), (0, 2), (2, 3)], 4)
    z = rng.normal(size=(4, 2))
    P = np.diag(rng.uniform(0.5, 2.0, size=8))
    a = blue_estimate(H, MeasurementSet(z, P)).positions
    b = blue_estimate(H, MeasurementSet(z, 9.0 * P)).positions
    assert np.allclose(a, b, atol=1e-12)


def test_blue_rejects_bad_inputs():
    H = incidence_from_pairs([(0, 1)], 2)
    with pytest.raises(EstimationError):
        blue_estimate(H, MeasurementSet([[1.0]], [[-1.0]]))
    with pytest.raises(EstimationError):
        blue_estimate(H, MeasurementSet([[1.0], [2.0]], np.eye(2)))
    with pytest.raises(EstimationError):
        MeasurementSet([[1.0]], np.eye(2))


def test_partition_examples():
    part = partition_incidence([[1.0, -1.0]], 0)
    assert part.H_r.tolist() == [[1.0]] and part.H_b.tolist() == [[-1.0]]
    H = incidence_from_pairs([(0, 1), (1, 2), (0, 2)], 3)
    part = partition_incidence(H, 0)
    assert part.H_b.shape == (3, 2) and part.H_r.shape == (3, 1)
    part = partition_incidence(H, 1)
    rebuilt = np.insert(part.H_b, 1, part.H_r[:, 0], axis=1)
    assert np.array_equal(rebuilt, H)
    with pytest.raises(EstimationError):
        partition_incidence(H, 3)


def test_anchored_single_edge():
    H = incidence_from_pairs([(1, 0)], 2)
    est = anchored_blue(partition_incidence(H, 0), [0.0], MeasurementSet([[5.0]], [[1.0]]))
    assert est.positions.ravel().tolist() == [0.0, 5.0]
    assert est.covariance.tolist() == [[1.0]]


def test_anchored_path_closed_form():
    H = incidence_from_pairs([(1, 0), (2, 1)], 3)
    est = anchored_blue(partition_incidence(H, 0), [0.0], MeasurementSet([[1.0], [1.0]], np.eye(2)))
    # normal matrix [[2, -1], [-1, 1]] inverts to [[1, 1], [1, 2]]
    assert est.positions.ravel().tolist() == [0.0, 1.0, 2.0]
    assert est.covariance.tolist() == [[1.0, 1.0], [1.0, 2.0]]


def test_anchored_noiseless_recovers_truth():
    rng = np.random.default_rng(4)
    pairs = random_pairs(rng, 6)
    x = rng.uniform(-5, 5, size=(6, 2))
    z = np.array([x[i] - x[j] for i, j in pairs])
    H = incidence_from_pairs(pairs, 6)
    est = anchored_blue(partition_incidence(H, 2), x[2], MeasurementSet.isotropic(z, 0.3))
    assert np.max(np.abs(est.positions - x)) < 1e-10
    assert np.array_equal(est.positions[2], x[2])


def test_anchored_rank_deficient():
    H = incidence_from_pairs([(0, 1), (2, 3)], 4)
    with pytest.raises(RankDeficient):
        anchored_blue(partition_incidence(H, 0), [0.0, 0.0], MeasurementSet.isotropic(np.ones((2, 2)), 1.0))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_anchored_matches_dense_oracle(n, seed):
    rng = np.random.default_rng(seed)
    pairs = random_pairs(rng, n)
    z = rng.normal(size=(len(pairs), 2))
    var = rng.uniform(0.1, 3.0, size=len(pairs))
    ref = int(rng.integers(n))
    x_r = rng.normal(size=2)
    est = anchored_blue(partition_incidence(incidence_from_pairs(pairs, n), ref), x_r, MeasurementSet.isotropic(z, var))
    x, cov = dense_anchored_solve(n, pairs, z, var, ref, x_r)
    assert np.max(np.abs(est.positions - x)) < 1e-9
    assert np.max(np.abs(est.covariance - np.kron(cov, np.eye(2)))) < 1e-9
    assert np.linalg.eigvalsh(est.covariance)[0] >= -1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_anchored_translation_equivariance(seed, c):
    rng = np.random.default_rng(seed)
    n = 5
    pairs = random_pairs(rng, n)
    x = rng.uniform(-5, 5, size=(n, 2))
    eps = 0.01 * rng.normal(size=(len(pairs), 2))
    part = partition_incidence(incidence_from_pairs(pairs, n), 0)

    def solve(xs):
        z = np.array([xs[i] - xs[j] for i, j in pairs]) + eps
        return anchored_blue(part, xs[0], MeasurementSet.isotropic(z, 1e-4)).positions

    assert np.allclose(solve(x + c) - solve(x), c, atol=1e-9)


def test_link_variance():
    H = incidence_from_pairs([(1, 0), (2, 1)], 3)
    est = anchored_blue(partition_incidence(H, 0), [0.0, 0.0], MeasurementSet.isotropic(np.ones((2, 2)), 1.0))
    # cov per coordinate [[1, 1], [1, 2]]
    assert link_variance(est, 1, 0) == pytest.approx(1.0)
    assert link_variance(est, 2, 1) == pytest.approx(1.0)
    assert link_variance(est, 2, 0) == pytest.approx(2.0)
