import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lsdat.rpca import (RpcaConfig, decompose, decompose_image, singular_value_threshold,
                        soft_threshold)

from .conftest import planted

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_svt_zero_matrix():
    assert np.array_equal(singular_value_threshold(np.zeros((4, 3)), 1.0), np.zeros((4, 3)))


def test_svt_diagonal():
    out = singular_value_threshold(np.diag([5.0, 1.0]), 2.0)
    np.testing.assert_allclose(out, np.diag([3.0, 0.0]), atol=1e-12)


def test_svt_identity_at_zero():
    M = np.random.default_rng(0).standard_normal((8, 8))
    np.testing.assert_allclose(singular_value_threshold(M, 0.0), M, atol=1e-10)


def test_svt_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        singular_value_threshold(np.array([[np.nan, 1.0]]), 1.0)


def test_soft_threshold_examples():
    np.testing.assert_allclose(soft_threshold([0.5, -0.2, 0.05], 0.1), [0.4, -0.1, 0.0], atol=1e-15)
    assert np.array_equal(soft_threshold(np.zeros(5), 0.3), np.zeros(5))
    M = np.array([[1.5, -2.0], [0.0, 3.25]])
    assert np.array_equal(soft_threshold(M, 0.0), M)


@given(arrays(float, (5, 4), elements=finite), st.floats(0, 3), st.floats(0, 3))
def test_soft_threshold_composes(M, a, b):
    np.testing.assert_allclose(soft_threshold(soft_threshold(M, a), b), soft_threshold(M, a + b), atol=1e-12)


@settings(max_examples=50)
@given(arrays(float, (6, 5), elements=finite))
def test_svt_rank_non_increasing_in_tau(M):
    def rank(A):
        return int(np.sum(np.linalg.svd(A, compute_uv=False) > 1e-10))

    ranks = [rank(singular_value_threshold(M, tau)) for tau in (0.0, 0.1, 0.5, 1.0, 3.0, 10.0, 100.0)]
    assert ranks == sorted(ranks, reverse=True)


def test_config_validation():
    with pytest.raises(ValueError):
        RpcaConfig(lam=0.0)
    with pytest.raises(ValueError):
        RpcaConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        RpcaConfig(max_iterations=0)
    assert RpcaConfig().lam_for((50, 20)) == pytest.approx(1 / np.sqrt(50))


def test_decompose_zero():
    out = decompose(np.zeros((5, 7)))
    assert out.converged and not out.low_rank.any() and not out.sparse.any()


def test_decompose_rank_one_outer_product():
    rng = np.random.default_rng(3)
    X = np.outer(rng.standard_normal(30), rng.standard_normal(20))
    out = decompose(X)
    assert out.converged
    assert np.linalg.norm(out.low_rank - X) / np.linalg.norm(X) <= 1e-4
    assert np.linalg.norm(out.sparse) <= 1e-4 * np.linalg.norm(X)


@pytest.mark.parametrize("seed", range(20, 40))
def test_planted_recovery(seed):
    low, spikes = planted(seed)
    out = decompose(low + spikes)
    assert out.converged
    assert np.linalg.norm(out.low_rank - low) / np.linalg.norm(low) <= 1e-4
    assert np.array_equal(out.support(), spikes != 0)


def test_exact_sum_when_converged():
    low, spikes = planted(7, n=30, rank=2)
    X = low + spikes
    cfg = RpcaConfig(tolerance=1e-6)
    out = decompose(X, cfg)
    assert out.converged
    assert np.linalg.norm(X - out.low_rank - out.sparse) / max(1.0, np.linalg.norm(X)) <= cfg.tolerance


def test_non_convergence_is_flagged():
    low, spikes = planted(1)
    out = decompose(low + spikes, RpcaConfig(max_iterations=3))
    assert not out.converged and out.iterations == 3


@pytest.mark.parametrize("c", [0.01, 0.37, 25.0])
def test_scaling_equivariance(c):
    low, spikes = planted(11, n=40, rank=2)
    X = low + spikes
    base = decompose(X)
    scaled = decompose(c * X)
    scale = np.linalg.norm(c * X)
    assert np.linalg.norm(scaled.low_rank - c * base.low_rank) <= 1e-5 * scale
    assert np.linalg.norm(scaled.sparse - c * base.sparse) <= 1e-5 * scale


def test_matches_generic_convex_solver():
    # independent route: hand the same convex program to a generic conic solver
    cp = pytest.importorskip("cvxpy")
    low, spikes = planted(5, n=15, rank=1, density=0.05)
    X = low + spikes
    lam = 1 / np.sqrt(15)
    L = cp.Variable(X.shape)
    cp.Problem(cp.Minimize(cp.normNuc(L) + lam * cp.sum(cp.abs(X - L)))).solve(solver=cp.SCS, eps=1e-9,
                                                                              max_iters=100000)
    ours = decompose(X, RpcaConfig(tolerance=1e-9, max_iterations=5000))

    def objective(A):
        return np.linalg.svd(A, compute_uv=False).sum() + lam * np.abs(X - A).sum()

    assert objective(ours.low_rank) <= objective(L.value) + 1e-5
    np.testing.assert_allclose(ours.low_rank, L.value, atol=1e-4)


def test_image_constant_gray():
    img = np.full((8, 8, 3), 0.5)
    out = decompose_image(img)
    assert len(out.channels) == 3
    for pair in out.channels:
        np.testing.assert_allclose(pair.low_rank, 0.5, atol=1e-9)
        assert np.abs(pair.sparse).max() <= 1e-9
        assert np.sum(np.linalg.svd(pair.low_rank, compute_uv=False) > 1e-10) == 1


def test_image_single_pixel():
    out = decompose_image(np.full((1, 1, 1), 0.3))
    assert out.low_rank[0, 0, 0] == 0.3 and out.sparse[0, 0, 0] == 0.0


def test_image_planted_channel():
    low, spikes = planted(2, n=32, rank=2, density=0.04)
    X = low + spikes
    lo, hi = X.min(), X.max()
    img = ((X - lo) / (hi - lo))[:, :, None]
    # the affine rescale adds a constant (rank one) to the low-rank part
    low_img = (low - lo) / (hi - lo)
    out = decompose_image(img)
    assert out.converged
    assert np.linalg.norm(out.low_rank[:, :, 0] - low_img) / np.linalg.norm(low_img) <= 1e-4
    assert np.array_equal(out.channels[0].support(), spikes != 0)
    np.testing.assert_allclose(out.reconstruction(), img, atol=1e-6)


def test_image_accepts_2d():
    out = decompose_image(np.full((4, 5), 0.2))
    assert out.low_rank.shape == (4, 5, 1)
