"""
Gram 场、时空图提取、插值与灵敏度估计测试
"""

import numpy as np
import pytest

from conftest import full_mask, normalized_maps, random_complex
from src.calib.calib_gram import build_gram
from src.calib.kernel_support import build_support
from src.calib.nullspace import exact_projector
from src.data.types import Grid, KtDataset, NullspaceProjector, SensitivityMaps, StmSet
from src.metrics.eigen_maps import eigenvalue_maps
from src.metrics.quality import npr
from src.phantom.acquisition import simulate_acquisition
from src.phantom.coils import generate_sensitivities
from src.phantom.multiband import MultibandSpec, generate_phantom, generate_phantom_truth
from src.phantom.sampling import MaskSpec, generate_mask
from src.recon.operators import TemporalModel
from src.stm.combine import combine_acs
from src.stm.gram_field import GramField, compute_gram_field, gram_field_direct, voxel_filter_response
from src.stm.interpolation import interpolate_maps
from src.stm.orth_iteration import extract_maps
from src.stm.sensitivity import estimate_sensitivity_maps
from src.utils.errors import ValidationError
from src.utils.fft import fftc


def random_psd(rng, size):
    A = random_complex(rng, (size, size))
    W = A @ A.conj().T
    return W / np.linalg.norm(W, 2)


def field_with_spectrum(rng, grid, low, high):
    """每个体素随机酉基、给定特征值的 Gram 场，返回 (field, 酉基)"""
    T = low.shape[-1] + high.shape[-1]
    U = np.linalg.qr(random_complex(rng, (grid.N, T, T)))[0]
    evals = np.concatenate([low, high], axis=-1)
    G = (U * evals[:, None, :]) @ np.conj(np.swapaxes(U, 1, 2))
    return GramField(G.reshape(grid.dims + (T, T)), grid, 1.0), U


def stm_projectors(stm: StmSet) -> np.ndarray:
    """逐体素 Σ_l s_l s_lᴴ"""
    S = np.asarray(stm.maps).reshape(stm.grid.N, stm.components, stm.frames)
    return np.einsum("vlt,vls->vts", S, np.conj(S))


def diagonal_field(grid, diagonal):
    T = len(diagonal)
    values = np.broadcast_to(np.diag(diagonal).astype(complex), grid.dims + (T, T)).copy()
    return GramField(values, grid, float(max(diagonal)))


# ==================== ACS 合并 ====================

def test_single_coil_combine_keeps_acs_window(make_kt):
    ds = make_kt(coils=1)
    maps = SensitivityMaps(ds.grid, np.ones(ds.grid.dims + (1,), dtype=complex))
    combined = combine_acs(ds, maps)
    window = np.zeros(ds.grid.dims, dtype=bool)
    window[ds.mask.acs_slices] = True
    np.testing.assert_allclose(combined.samples, ds.samples * window[:, :, :, None, None], atol=1e-10)
    assert combined.coils == 1
    assert combined.mask.acs_box == ds.mask.acs_box


def test_multi_coil_combine_recovers_image(rng):
    grid = Grid((10, 8))
    image = random_complex(rng, grid.dims + (2,))
    maps = normalized_maps(rng, grid, 3)
    kspace = fftc(image[:, :, :, None, :] * maps.values[..., None])
    combined = combine_acs(KtDataset(grid, kspace, full_mask(grid, 2)), maps)
    np.testing.assert_allclose(combined.samples[:, :, :, 0, :], fftc(image), atol=1e-9)


def test_combine_checks_grid(make_kt, rng):
    with pytest.raises(ValidationError):
        combine_acs(make_kt(coils=2), normalized_maps(rng, Grid((8, 8)), 2))


# ==================== Gram 场 ====================

def test_identity_projector_gives_scaled_identity_field():
    support = build_support("ellipsoid", 1, 2)
    T = 3
    W = NullspaceProjector(np.eye(support.size * T), 0, "exact", 1e-3)
    field = compute_gram_field(W, support, Grid((6, 5)))
    assert field.bound == pytest.approx(support.size)
    expected = support.size * np.eye(T)
    np.testing.assert_allclose(field.matrices(), np.broadcast_to(expected, (30, T, T)), atol=1e-10)


@pytest.mark.parametrize("D, T, dims", [(2, 3, (8, 6)), (3, 2, (5, 4, 3))])
def test_fft_field_matches_direct(rng, D, T, dims):
    support = build_support("ellipsoid", 1, D)
    W = random_psd(rng, support.size * T)
    grid = Grid(dims)
    fast = compute_gram_field(W, support, grid, chunk=2, workers=2)
    direct = gram_field_direct(W, support, grid)
    assert fast.values.shape == grid.dims + (T, T)
    scale = np.linalg.norm(direct.values)
    assert np.linalg.norm(fast.values - direct.values) <= 1e-6 * scale
    assert fast.bound == pytest.approx(support.size, rel=1e-9)


def test_field_is_hermitian_psd(rng):
    support = build_support("ellipsoid", 1, 2)
    field = compute_gram_field(random_psd(rng, support.size * 3), support, Grid((6, 6)))
    G = field.matrices()
    np.testing.assert_allclose(G, np.conj(np.swapaxes(G, 1, 2)), atol=1e-12)
    evals = np.linalg.eigvalsh(G)
    assert evals.min() >= -1e-9
    assert evals.max() <= field.bound * (1 + 1e-9)


def test_field_rejects_mismatched_projector(rng):
    support = build_support("ellipsoid", 1, 2)
    with pytest.raises(ValidationError):
        compute_gram_field(np.eye(support.size * 2 + 1), support, Grid((6, 6)))
    with pytest.raises(ValidationError):
        compute_gram_field(np.eye(support.size), support, Grid((2, 6)))


def test_voxel_filter_response():
    field = diagonal_field(Grid((3, 3)), [3.0, 2.0, 1.0, 0.0])
    response = voxel_filter_response(field, (1, 2))
    np.testing.assert_array_equal(response.filters, np.diag([3.0, 2.0, 1.0, 0.0]))
    np.testing.assert_allclose(response.spectra, np.fft.fft(response.filters, axis=1))
    with pytest.raises(ValidationError):
        voxel_filter_response(field, (3, 0))


# ==================== 时空图提取 ====================

def test_extracts_nullspace_of_diagonal_field():
    field = diagonal_field(Grid((4, 3)), [3.0, 2.0, 1.0, 0.0])
    stm = extract_maps(field, L=1)
    assert stm.maps.shape == (4, 3, 1, 1, 4)
    np.testing.assert_allclose(np.abs(stm.maps[..., 0, 3]), 1.0, atol=1e-8)
    np.testing.assert_allclose(stm.eigvals, 0.0, atol=1e-8)


def test_orthogonal_iteration_matches_eigendecomposition(rng):
    grid = Grid((3, 2))
    low = rng.uniform(0.0, 0.2, (grid.N, 2))
    low.sort(axis=1)
    high = rng.uniform(0.5, 1.0, (grid.N, 4))
    field, U = field_with_spectrum(rng, grid, low, high)
    stm = extract_maps(field, L=2, seed=5)

    basis = U[:, :, :2]
    expected = np.einsum("vtl,vsl->vts", basis, np.conj(basis))
    np.testing.assert_allclose(stm_projectors(stm), expected, atol=1e-6)
    np.testing.assert_allclose(stm.eigvals.reshape(grid.N, 2), low, atol=1e-8)


def test_maps_are_orthonormal(rng):
    support = build_support("ellipsoid", 1, 2)
    field = compute_gram_field(random_psd(rng, support.size * 5), support, Grid((6, 5)))
    stm = extract_maps(field, L=3, seed=1)
    S = np.asarray(stm.maps).reshape(-1, 3, 5)
    gram = S @ np.conj(np.swapaxes(S, 1, 2))
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(3), gram.shape), atol=1e-8)
    assert np.all(np.diff(stm.eigvals, axis=-1) >= -1e-10)


def test_threshold_selects_local_component_count(rng):
    grid = Grid((3, 2))
    low = rng.uniform(0.0, 0.2, (grid.N, 2))
    high = rng.uniform(0.5, 1.0, (grid.N, 4))
    field, _ = field_with_spectrum(rng, grid, low, high)

    adaptive = extract_maps(field, threshold=0.3)
    assert adaptive.components == 6
    np.testing.assert_array_equal(adaptive.local_components, 2)

    tiny = extract_maps(field, L=2, threshold=1e-9)
    assert np.all(tiny.local_components >= 1)


def test_extract_rejects_bad_component_count():
    field = diagonal_field(Grid((2, 2)), [1.0, 0.0])
    with pytest.raises(ValidationError):
        extract_maps(field, L=3)
    with pytest.raises(ValidationError):
        extract_maps(field)


def test_extraction_is_seeded(rng):
    support = build_support("ellipsoid", 1, 2)
    field = compute_gram_field(random_psd(rng, support.size * 4), support, Grid((5, 5)))
    a = extract_maps(field, L=2, seed=3)
    b = extract_maps(field, L=2, seed=3)
    np.testing.assert_array_equal(a.maps, b.maps)


def test_component_phases_agree_across_voxels(rng):
    grid = Grid((4, 3))
    low = rng.uniform(0.0, 0.2, (grid.N, 2))
    high = rng.uniform(0.5, 1.0, (grid.N, 3))
    field, _ = field_with_spectrum(rng, grid, low, high)
    stm = extract_maps(field, L=2, seed=2)
    S = np.asarray(stm.maps).reshape(grid.N, 2, 5)
    for l in range(2):
        q = S[:, l]
        _, vecs = np.linalg.eigh(q.T @ np.conj(q))
        inner = q @ np.conj(vecs[:, -1])
        big = np.abs(inner) > 1e-6
        phases = inner[big] / np.abs(inner[big])
        np.testing.assert_allclose(phases, phases[0], atol=1e-8)


# ==================== 插值 ====================

def test_interpolation_on_same_grid_is_identity(rng):
    grid = Grid((4, 4))
    U = np.linalg.qr(random_complex(rng, (grid.N, 5, 2)))[0]
    maps = np.swapaxes(U, 1, 2).reshape(grid.dims + (2, 5))
    stm = StmSet(grid, maps, np.zeros(grid.dims + (2,)))
    out = interpolate_maps(stm, grid)
    np.testing.assert_allclose(out.maps, stm.maps, atol=1e-10)


def test_constant_maps_stay_constant(rng):
    coarse = Grid((4, 4))
    vector = random_complex(rng, 3)
    vector /= np.linalg.norm(vector)
    maps = np.broadcast_to(vector, coarse.dims + (1, 3)).copy()
    stm = StmSet(coarse, maps, np.full(coarse.dims + (1,), 0.25))
    out = interpolate_maps(stm, Grid((8, 8)))
    assert out.grid.dims == (8, 8, 1)
    np.testing.assert_allclose(out.maps, np.broadcast_to(vector, (8, 8, 1, 1, 3)), atol=1e-10)
    np.testing.assert_allclose(out.eigvals, 0.25, atol=1e-10)


def test_local_components_use_nearest_neighbour(rng):
    coarse = Grid((4, 4))
    U = np.linalg.qr(random_complex(rng, (coarse.N, 3, 2)))[0]
    maps = np.swapaxes(U, 1, 2).reshape(coarse.dims + (2, 3))
    local = (np.arange(16).reshape(4, 4, 1) % 2) + 1
    out = interpolate_maps(StmSet(coarse, maps, np.zeros(coarse.dims + (2,)), local), Grid((8, 8)))
    index = (np.arange(8) * 4) // 8
    np.testing.assert_array_equal(out.local_components, local[np.ix_(index, index, [0])])
    S = np.asarray(out.maps).reshape(-1, 2, 3)
    gram = S @ np.conj(np.swapaxes(S, 1, 2))
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(2), gram.shape), atol=1e-8)


# ==================== 特征值图 ====================

def test_eigenvalue_maps_of_identity_field():
    field = diagonal_field(Grid((3, 3)), [2.0, 2.0, 2.0])
    stack = eigenvalue_maps(field, 2)
    assert stack.labels == ("lambda_2", "lambda_3")
    np.testing.assert_allclose(stack.values, 1.0)
    with pytest.raises(ValidationError):
        eigenvalue_maps(field, 4)


def test_eigenvalue_maps_are_descending():
    stack = eigenvalue_maps(diagonal_field(Grid((2, 2)), [4.0, 1.0, 2.0, 0.0]), 4)
    np.testing.assert_allclose(stack.values[0, 0, 0], [1.0, 0.5, 0.25, 0.0])


# ==================== 灵敏度估计 ====================

@pytest.fixture
def multicoil_acquisition():
    spec = MultibandSpec(dims=[24, 20], frames=8, j_max=2, smoothness=3.0)
    image = generate_phantom(spec, 1)
    maps = generate_sensitivities(spec.grid, 3, seed=2)
    mask = generate_mask(spec.grid, spec.frames, MaskSpec(acs=[10], extra_lines=[2]))
    return simulate_acquisition(image, maps, mask, sigma=0.0, seed=3)


def test_estimated_sensitivities_are_normalized(multicoil_acquisition):
    support = build_support("ellipsoid", 2, 2)
    maps = estimate_sensitivity_maps(multicoil_acquisition, support, seed=1)
    assert maps.grid == multicoil_acquisition.grid
    assert maps.coils == 3
    np.testing.assert_allclose(np.linalg.norm(maps.values, axis=-1), 1.0, atol=1e-10)
    reference = maps.values[..., 0]
    np.testing.assert_allclose(np.imag(reference), 0.0, atol=1e-10)
    assert np.all(np.real(reference) >= -1e-12)


def test_sensitivity_first_frame_and_coarse_grid(multicoil_acquisition):
    support = build_support("ellipsoid", 1, 2)
    maps = estimate_sensitivity_maps(multicoil_acquisition, support, frames="first", coarsen=2,
                                     reference_coil=1)
    assert maps.grid == multicoil_acquisition.grid
    np.testing.assert_allclose(np.linalg.norm(maps.values, axis=-1), 1.0, atol=1e-10)
    np.testing.assert_allclose(np.imag(maps.values[..., 1]), 0.0, atol=1e-10)


def test_sensitivity_rejects_bad_arguments(make_kt, multicoil_acquisition):
    support = build_support("ellipsoid", 1, 2)
    with pytest.raises(ValidationError):
        estimate_sensitivity_maps(make_kt(coils=1), support)
    with pytest.raises(ValidationError):
        estimate_sensitivity_maps(multicoil_acquisition, support, frames="last")
    with pytest.raises(ValidationError):
        estimate_sensitivity_maps(multicoil_acquisition, support, reference_coil=3)


# ==================== 体模上的时空图 ====================

EXACT_SPEC = MultibandSpec(dims=[24, 24], frames=24, j_max=4, min_bands=4, smoothness=3.0,
                           dynamic_amplitude=1.0)


@pytest.fixture(scope="module")
def exact_phantom():
    """无噪声、无漂移、四个频带处处存在的体模及其零空间投影"""
    truth = generate_phantom_truth(EXACT_SPEC, 3)
    coils = generate_sensitivities(EXACT_SPEC.grid, 4, seed=4)
    mask = generate_mask(EXACT_SPEC.grid, EXACT_SPEC.frames, MaskSpec(acs=[6], extra_lines=[2]))
    data = simulate_acquisition(truth.image, coils, mask, sigma=0.0, seed=5)
    support = build_support("ellipsoid", 1, 2)
    W = exact_projector(build_gram(combine_acs(data, coils), support), tau_rel=1e-9)
    return truth, W, support


def test_phantom_lies_in_span_of_extracted_maps(exact_phantom):
    truth, W, support = exact_phantom
    stm = extract_maps(compute_gram_field(W, support, EXACT_SPEC.grid), L=4, seed=0)
    flags = truth.roi.flags
    M = np.asarray(stm.maps)[flags]
    rho = np.asarray(truth.image.values)[flags]
    coeff = np.einsum("vlt,vt->vl", np.conj(M), rho)
    residual = rho - np.einsum("vlt,vl->vt", M, coeff)
    assert np.max(np.linalg.norm(residual, axis=1)) < 1e-8 * np.max(np.linalg.norm(rho, axis=1))


def test_null_eigenvalue_count_equals_band_count(exact_phantom):
    truth, W, support = exact_phantom
    T = EXACT_SPEC.frames
    stack = eigenvalue_maps(compute_gram_field(W, support, EXACT_SPEC.grid), T)
    inside = np.asarray(stack.values)[truth.roi.flags]
    assert np.all(truth.band_count[truth.roi.flags] == 4)
    np.testing.assert_allclose(inside[:, :T - 4], 1.0, atol=1e-8)
    np.testing.assert_allclose(inside[:, T - 4:], 0.0, atol=1e-8)


def test_coarse_maps_interpolate_without_losing_fit(exact_phantom):
    truth, W, support = exact_phantom
    grid = EXACT_SPEC.grid
    fine = extract_maps(compute_gram_field(W, support, grid), L=4, seed=0)
    coarse = extract_maps(compute_gram_field(W, support, grid.coarsen(2)), L=4, seed=0)
    interpolated = interpolate_maps(coarse, grid)
    direct = npr(truth.image, TemporalModel.from_stm(fine), truth.roi)
    resampled = npr(truth.image, TemporalModel.from_stm(interpolated), truth.roi)
    assert direct < 1e-6
    assert resampled - direct < 0.01
