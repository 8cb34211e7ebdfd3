"""
NRMSE、NPR、Casorati 谱与 t-score 测试
"""

import numpy as np
import pytest

from conftest import random_complex
from src.data.types import DynamicImage, Grid, ImageStack, RoiMask
from src.metrics.activation import TaskParadigm, activation_contrast, tscore_map
from src.metrics.quality import casorati_spectrum, npr, npr_curve, nrmse, nrmse_per_frame
from src.recon.operators import TemporalModel
from src.utils.config_loader import load_model
from src.utils.errors import ValidationError


@pytest.fixture
def rank_two(rng):
    """秩 2 动态图像与其正交归一时间基"""
    grid = Grid((6, 5))
    phi = np.linalg.qr(random_complex(rng, (6, 2)))[0]
    u = random_complex(rng, grid.dims + (2,))
    return DynamicImage(grid, np.einsum("xyzl,tl->xyzt", u, phi)), phi


# ==================== NRMSE ====================

def test_nrmse_of_identical_images(rank_two):
    image, _ = rank_two
    assert nrmse(image, image) == 0.0


def test_nrmse_of_scaled_image(rank_two):
    image, _ = rank_two
    scaled = DynamicImage(image.grid, 1.1 * image.values)
    assert nrmse(scaled, image) == pytest.approx(0.1)


def test_nrmse_requires_nonzero_reference():
    grid = Grid((3, 3))
    zero = DynamicImage(grid, np.zeros(grid.dims + (2,)))
    with pytest.raises(ValidationError):
        nrmse(zero, zero)


def test_nrmse_per_frame_zero_reference_frame(rng):
    grid = Grid((3, 3))
    values = random_complex(rng, grid.dims + (3,))
    values[..., 1] = 0
    reference = DynamicImage(grid, values)
    recon = DynamicImage(grid, 2.0 * values)
    np.testing.assert_allclose(nrmse_per_frame(recon, reference), [1.0, 0.0, 1.0])


def test_roi_restricts_error(rng):
    grid = Grid((4, 4))
    reference = DynamicImage(grid, np.ones(grid.dims + (2,)))
    values = np.ones(grid.dims + (2,), dtype=complex)
    values[3, 3] = 5.0
    recon = DynamicImage(grid, values)
    flags = np.ones(grid.dims, dtype=bool)
    flags[3, 3] = False
    assert nrmse(recon, reference, RoiMask(grid, flags)) == 0.0
    assert nrmse(recon, reference) > 0
    with pytest.raises(ValidationError):
        nrmse(recon, reference, RoiMask(grid, np.zeros(grid.dims, dtype=bool)))
    with pytest.raises(ValidationError):
        nrmse(recon, reference, RoiMask.full(Grid((2, 2))))


def test_nrmse_rejects_shape_mismatch(rank_two):
    image, _ = rank_two
    with pytest.raises(ValidationError):
        nrmse(DynamicImage(image.grid, image.values[..., :3]), image)


# ==================== NPR ====================

def test_npr_with_complete_basis_is_zero(rank_two):
    image, _ = rank_two
    assert npr(image, TemporalModel.from_basis(np.eye(6))) < 1e-10


def test_npr_of_zero_reference_is_zero():
    grid = Grid((3, 3))
    zero = DynamicImage(grid, np.zeros(grid.dims + (4,)))
    assert npr(zero, TemporalModel.from_basis(np.eye(4)[:, :2])) == 0.0


def test_npr_curve_with_exact_temporal_basis(rank_two):
    image, phi = rank_two
    curve = npr_curve(image, TemporalModel.from_basis(phi))
    assert list(curve) == [1, 2]
    assert curve[2] < 1e-8
    assert curve[1] > curve[2]
    assert 0 < curve[1] < 1


def test_npr_with_voxelwise_maps(rank_two):
    image, phi = rank_two
    maps = np.broadcast_to(phi.T, image.grid.dims + phi.T.shape).copy()
    model = TemporalModel("stm", maps=maps)
    assert npr(image, model) < 1e-8
    assert npr(image, model, L=1) == pytest.approx(npr(image, TemporalModel.from_basis(phi), L=1), rel=1e-6)


def test_npr_rejects_too_many_components(rank_two):
    image, phi = rank_two
    with pytest.raises(ValidationError):
        npr(image, TemporalModel.from_basis(phi), L=3)


def test_casorati_spectrum(rank_two):
    image, _ = rank_two
    spectrum = casorati_spectrum(image)
    assert spectrum.shape == (6,)
    assert spectrum[0] == pytest.approx(1.0)
    assert np.all(spectrum[2:] < 1e-10)
    raw = casorati_spectrum(image, k=2, normalize=False)
    expected = np.linalg.svd(image.values.reshape(-1, 6), compute_uv=False)[:2]
    np.testing.assert_allclose(raw, expected)


# ==================== 块设计 ====================

def test_alternating_paradigm_labels():
    paradigm = TaskParadigm.alternating(10, 3)
    assert paradigm.blocks == [(0, 3, "rest"), (3, 6, "task"), (6, 9, "rest"), (9, 10, "task")]
    labels = paradigm.frame_labels(2)
    assert list(labels) == ["rest", "rest", "rest", "", "", "task", "", "", "rest", ""]
    assert list(paradigm.frame_labels(0)[:4]) == ["rest", "rest", "rest", "task"]


@pytest.mark.parametrize("blocks", [
    [(0, 3, "rest"), (4, 6, "task")],
    [(0, 3, "rest"), (3, 5, "task")],
    [(0, 3, "rest"), (3, 6, "sleep")],
])
def test_paradigm_blocks_must_tile_frames(blocks):
    with pytest.raises(ValidationError):
        load_model(TaskParadigm, {"frames": 6, "blocks": blocks})


def test_alternating_rejects_bad_arguments():
    with pytest.raises(ValidationError):
        TaskParadigm.alternating(8, 0)
    with pytest.raises(ValidationError):
        TaskParadigm.alternating(8, 2, start_with="task-first")


# ==================== t-score ====================

@pytest.fixture
def block_series(rng):
    """(0,0) 体素在 task 帧幅度升高，(1,1) 体素恒定"""
    grid = Grid((2, 2))
    paradigm = TaskParadigm.alternating(16, 4)
    boxcar = (paradigm.frame_labels(0) == "task").astype(float)
    values = 1.0 + 0.01 * rng.standard_normal(grid.dims + (16,))
    values[0, 0, 0] += 2.0 * boxcar
    values[1, 1, 0] = 1.0
    return DynamicImage(grid, values), paradigm


def test_tscore_detects_active_voxel(block_series):
    series, paradigm = block_series
    tmap = tscore_map(series, paradigm)
    assert tmap.labels == ("tscore",)
    assert tmap.values[0, 0, 0, 0] > 5
    assert tmap.values[1, 1, 0, 0] == 0.0
    assert np.all(np.isfinite(tmap.values))


def test_tscore_checks_frames(block_series):
    series, _ = block_series
    with pytest.raises(ValidationError):
        tscore_map(series, TaskParadigm.alternating(12, 4))
    with pytest.raises(ValidationError):
        tscore_map(series, TaskParadigm.alternating(16, 4), transition=4)


def test_activation_contrast():
    grid = Grid((2, 2))
    values = np.array([[10.0, 2.0], [-2.0, 2.0]])[..., None]
    tmap = ImageStack(grid, values)
    region = np.zeros(grid.dims, dtype=bool)
    region[0, 0] = True
    assert activation_contrast(tmap, region) == pytest.approx(5.0)
    with pytest.raises(ValidationError):
        activation_contrast(tmap, np.zeros(grid.dims, dtype=bool))
