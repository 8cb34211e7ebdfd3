"""
零空间投影（精确 / 草图）测试
"""

import time

import numpy as np
import pytest

from conftest import random_complex
from src.calib.calib_gram import build_gram_fft
from src.calib.kernel_support import build_support
from src.calib.nullspace import (
    SketchConfig,
    estimate_rank,
    exact_projector,
    filter_annihilation_residual,
    projector_distance,
    sketched_projector,
)
from src.data.types import NullspaceProjector
from src.utils.config_loader import load_model
from src.utils.errors import ConfigurationError, ValidationError


def spectral_matrix(rng, head, tail):
    """指定谱的随机 Hermitian 矩阵"""
    evals = np.concatenate([head, tail])
    Q, _ = np.linalg.qr(random_complex(rng, (evals.size, evals.size)))
    return (Q * evals) @ Q.conj().T


@pytest.fixture
def gapped(rng):
    """n = 120，10 个主特征值位于 [1, 2]，其余 ≤ 5e-4"""
    return spectral_matrix(rng, rng.uniform(1.0, 2.0, 10), rng.uniform(0.0, 5e-4, 110))


def low_rank_gram(rng, n=40, r=8):
    A = random_complex(rng, (n, r))
    return A @ A.conj().T, A


# ==================== 精确方法 ====================

def test_exact_projector_properties(rng):
    gram, A = low_rank_gram(rng)
    W = exact_projector(gram)
    assert W.method == "exact"
    assert W.rank_estimate == 8
    assert W.filter_count == 32
    np.testing.assert_allclose(W.W, W.W.conj().T, atol=1e-12)
    np.testing.assert_allclose(W.W @ W.W, W.W, atol=1e-10)
    assert np.real(np.trace(W.W)) == pytest.approx(32)
    assert np.linalg.norm(W.W @ A) <= 1e-8 * np.linalg.norm(A)


def test_estimate_rank_spectrum_is_descending(rng):
    gram, _ = low_rank_gram(rng)
    estimate = estimate_rank(gram, 1e-3)
    assert estimate.rank == 8
    assert np.all(np.diff(estimate.spectrum) <= 1e-12)


@pytest.mark.parametrize("tau", [0.0, 1.0, -1.0])
def test_tau_must_be_inside_unit_interval(rng, tau):
    gram, _ = low_rank_gram(rng)
    with pytest.raises(ValidationError):
        exact_projector(gram, tau)


def test_zero_gram_gives_identity():
    W = sketched_projector(np.zeros((6, 6)))
    assert W.rank_estimate == 0
    np.testing.assert_array_equal(W.W, np.eye(6))


# ==================== 草图方法 ====================

@pytest.mark.parametrize("seed", range(20))
def test_sketched_matches_exact_on_gapped_spectrum(gapped, seed):
    exact = exact_projector(gapped, 1e-3)
    sketched = sketched_projector(gapped, SketchConfig(multiplier=2.0, seed=seed, tau_rel=1e-3))
    assert exact.rank_estimate == 10
    assert sketched.rank_estimate == 10
    assert sketched.sketch_dim == 20
    assert sketched.method == "sketched"
    assert projector_distance(sketched, exact) < 0.05


def test_sketch_is_seeded(gapped):
    a = sketched_projector(gapped, SketchConfig(seed=1))
    b = sketched_projector(gapped, SketchConfig(seed=1))
    np.testing.assert_array_equal(a.W, b.W)


def test_saturated_sketch_doubles(gapped):
    W = sketched_projector(gapped, SketchConfig(rank=3, seed=0))
    assert W.rank_estimate == 10
    assert W.sketch_dim == 12


def test_sketch_dim_is_capped_by_calibration_rows(make_full_acs):
    acs = make_full_acs((6, 5), 12)
    gram = build_gram_fft(acs, build_support("ellipsoid", 1, 2))
    assert gram.row_bound == 12
    W = sketched_projector(gram, SketchConfig(multiplier=4.0, seed=5))
    exact = exact_projector(gram)
    assert W.sketch_dim == 13
    assert W.rank_estimate == exact.rank_estimate == 12
    assert projector_distance(W, exact) < 1e-6


def test_sketch_dim_must_exceed_rank(gapped):
    with pytest.raises(ConfigurationError):
        sketched_projector(gapped, SketchConfig(rank=10, sketch_dim=8))


@pytest.mark.parametrize("mu", [1.5, 7.0])
def test_multiplier_range(mu):
    with pytest.raises(ValidationError):
        load_model(SketchConfig, {"multiplier": mu})


def test_pilot_rank_from_leading_frames(make_full_acs):
    acs = make_full_acs((6, 5), 12)
    gram = build_gram_fft(acs, build_support("ellipsoid", 1, 2))
    W = sketched_projector(gram, SketchConfig(pilot_frames=4, seed=2))
    exact = exact_projector(gram)
    assert W.rank_estimate == exact.rank_estimate
    assert projector_distance(W, exact) < 1e-6


# ==================== 残差与距离 ====================

def test_annihilation_residual_vanishes_for_exact(make_full_acs):
    acs = make_full_acs((6, 6), 6)
    support = build_support("ellipsoid", 1, 2)
    gram = build_gram_fft(acs, support)
    W = exact_projector(gram)
    assert W.filter_count > 0
    assert filter_annihilation_residual(W, gram) < 1e-6
    assert filter_annihilation_residual(W, acs, support) == pytest.approx(
        filter_annihilation_residual(W, gram), abs=1e-9)


def test_annihilation_residual_of_identity(rng):
    gram, _ = low_rank_gram(rng, n=16, r=4)
    identity = NullspaceProjector(np.eye(16), 0, "exact", 1e-3)
    assert filter_annihilation_residual(identity, gram) == pytest.approx(1.0 / 4.0)


def test_annihilation_residual_checks_inputs(rng, make_full_acs):
    gram, _ = low_rank_gram(rng, n=16, r=4)
    with pytest.raises(ValidationError):
        filter_annihilation_residual(NullspaceProjector(np.eye(8), 0, "exact", 1e-3), gram)
    with pytest.raises(ValidationError):
        filter_annihilation_residual(NullspaceProjector(np.eye(8), 0, "exact", 1e-3), make_full_acs((6, 6), 2))


def test_projector_distance_to_self(rng):
    gram, _ = low_rank_gram(rng)
    W = exact_projector(gram)
    assert projector_distance(W, W) == 0.0


@pytest.mark.slow
def test_sketch_is_faster_than_eigendecomposition():
    rng = np.random.default_rng(0)
    A = random_complex(rng, (2400, 40))
    gram = A @ A.conj().T

    start = time.perf_counter()
    exact = exact_projector(gram)
    exact_time = time.perf_counter() - start
    start = time.perf_counter()
    sketched = sketched_projector(gram, SketchConfig(rank=40, seed=1))
    sketch_time = time.perf_counter() - start

    assert sketched.rank_estimate == exact.rank_estimate == 40
    assert projector_distance(sketched, exact) < 1e-6
    assert sketched.sketch_dim == 80
    assert exact_time / sketch_time > 5.0
