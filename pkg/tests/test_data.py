"""
数据类型、数据集读写与 k-space 处理测试
"""

import json

import numpy as np
import pytest

from conftest import full_mask, normalized_maps, random_complex
from src.data.dataset_io import MANIFEST_NAME, read_dataset, write_dataset
from src.data.kspace_processor import coil_compress, compress_maps, extract_acs
from src.data.types import DynamicImage, Grid, ImageStack, KtDataset, NullspaceProjector, SamplingMask, StmSet
from src.utils.errors import DatasetFormatError, ValidationError


# ==================== 类型不变量 ====================

def test_grid_2d_gets_unit_z_axis():
    grid = Grid((128, 84))
    assert grid.dims == (128, 84, 1)
    assert grid.D == 2
    assert grid.N == 128 * 84
    assert Grid((90, 90, 20)).D == 3


def test_grid_rejects_nonpositive_dims():
    with pytest.raises(ValidationError):
        Grid((4, 0))


def test_grid_coarsen_keeps_z_in_2d():
    assert Grid((128, 84)).coarsen(2).dims == (64, 42, 1)
    assert Grid((90, 90, 20)).coarsen(2).dims == (45, 45, 10)


def test_mask_requires_acs_sampled_in_every_frame():
    grid = Grid((8, 6))
    flags = np.ones(grid.dims + (3,), dtype=bool)
    flags[4, 3, 0, 1] = False
    with pytest.raises(ValidationError):
        SamplingMask(grid, flags, ((0, 8), (2, 4), (0, 1)))


def test_mask_acceleration():
    grid = Grid((8, 6))
    flags = np.zeros(grid.dims + (2,), dtype=bool)
    flags[:, 2:4] = True
    mask = SamplingMask(grid, flags, ((0, 8), (2, 4), (0, 1)))
    assert mask.acceleration == pytest.approx(3.0)
    assert mask.acs_shape == (8, 2, 1)


def test_kt_rejects_data_outside_mask(rng):
    grid = Grid((8, 6))
    flags = np.zeros(grid.dims + (2,), dtype=bool)
    flags[:, 2:4] = True
    mask = SamplingMask(grid, flags, ((0, 8), (2, 4), (0, 1)))
    with pytest.raises(ValidationError):
        KtDataset(grid, random_complex(rng, grid.dims + (1, 2)), mask)


def test_types_are_read_only(make_kt):
    ds = make_kt()
    with pytest.raises(ValueError):
        ds.samples[0, 0, 0, 0, 0] = 1.0


def test_image_rejects_non_finite():
    grid = Grid((4, 4))
    values = np.zeros(grid.dims + (2,), dtype=complex)
    values[0, 0, 0, 0] = np.nan
    with pytest.raises(ValidationError):
        DynamicImage(grid, values)


def test_stm_truncate_nested(rng):
    grid = Grid((4, 3))
    stm = StmSet(grid, random_complex(rng, grid.dims + (3, 5)), np.zeros(grid.dims + (3,)),
                 np.full(grid.dims, 3))
    short = stm.truncate(2)
    assert short.components == 2
    np.testing.assert_array_equal(short.maps, stm.maps[:, :, :, :2])
    assert short.local_components.max() == 2
    with pytest.raises(ValidationError):
        stm.truncate(4)


# ==================== 数据集读写 ====================

def test_kt_dataset_roundtrip(tmp_path, make_kt):
    ds = make_kt()
    write_dataset(tmp_path / "kt", ds)
    manifest = json.loads((tmp_path / "kt" / MANIFEST_NAME).read_text(encoding="utf-8"))
    assert manifest["kind"] == "kt"
    assert manifest["version"] == 1
    assert manifest["axes"] == ["kx", "ky", "kz", "coil", "frame"]

    loaded = read_dataset(tmp_path / "kt", "kt")
    assert loaded.grid == ds.grid
    assert loaded.mask.acs_box == ds.mask.acs_box
    np.testing.assert_array_equal(loaded.mask.flags, ds.mask.flags)
    np.testing.assert_allclose(loaded.samples, ds.samples, rtol=1e-6, atol=1e-6)


def test_projector_roundtrip_keeps_metadata(tmp_path):
    W = NullspaceProjector(np.eye(6), 2, "sketched", 1e-3, 4)
    write_dataset(tmp_path / "W", W)
    loaded = read_dataset(tmp_path / "W", "projector")
    assert loaded.rank_estimate == 2
    assert loaded.method == "sketched"
    assert loaded.sketch_dim == 4
    np.testing.assert_array_equal(loaded.W, W.W)


def test_image_stack_labels_roundtrip(tmp_path):
    grid = Grid((3, 2))
    stack = ImageStack(grid, np.arange(6, dtype=float).reshape(3, 2, 1), ("tscore",))
    write_dataset(tmp_path / "t", stack)
    loaded = read_dataset(tmp_path / "t", "image_stack")
    assert loaded.labels == ("tscore",)
    np.testing.assert_allclose(loaded.values, stack.values)


def test_write_requires_existing_parent(tmp_path, make_kt):
    with pytest.raises(ValidationError):
        write_dataset(tmp_path / "missing" / "kt", make_kt())


def test_missing_manifest(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DatasetFormatError):
        read_dataset(tmp_path / "empty")


def test_truncated_blob_is_rejected(tmp_path, make_kt):
    path = write_dataset(tmp_path / "kt", make_kt())
    blob = path / "samples.bin"
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(DatasetFormatError):
        read_dataset(path)


def test_missing_blob_is_rejected(tmp_path, make_kt):
    path = write_dataset(tmp_path / "kt", make_kt())
    (path / "mask.bin").unlink()
    with pytest.raises(DatasetFormatError):
        read_dataset(path)


def test_unsupported_version(tmp_path, make_kt):
    path = write_dataset(tmp_path / "kt", make_kt())
    manifest = json.loads((path / MANIFEST_NAME).read_text(encoding="utf-8"))
    manifest["version"] = 2
    (path / MANIFEST_NAME).write_text(json.dumps(manifest), encoding="utf-8")
    with pytest.raises(DatasetFormatError):
        read_dataset(path)


def test_kind_mismatch(tmp_path, make_kt):
    path = write_dataset(tmp_path / "kt", make_kt())
    with pytest.raises(DatasetFormatError):
        read_dataset(path, "image")


def test_mask_values_must_be_binary(tmp_path):
    grid = Grid((4, 4))
    path = write_dataset(tmp_path / "mask", full_mask(grid, 2))
    np.full(grid.dims + (2,), 2, dtype=np.uint8).tofile(path / "flags.bin")
    with pytest.raises(DatasetFormatError):
        read_dataset(path)


# ==================== k-space 处理 ====================

def test_extract_acs_grid_equals_acs_shape(make_kt):
    ds = make_kt(dims=(12, 10), acs=(4,))
    acs = extract_acs(ds)
    assert acs.grid.dims == ds.mask.acs_shape
    assert acs.coils == ds.coils
    assert np.all(acs.mask.flags)
    np.testing.assert_array_equal(acs.samples, ds.samples[ds.mask.acs_slices])


def test_coil_compress_full_rank_keeps_energy(make_kt):
    ds = make_kt(coils=3)
    cc = coil_compress(ds, 3)
    assert cc.matrix.shape == (3, 3)
    assert cc.energy_fraction == pytest.approx(1.0)
    assert np.linalg.norm(cc.dataset.samples) == pytest.approx(np.linalg.norm(ds.samples))


def test_coil_compress_energy_is_monotone(make_kt):
    ds = make_kt(coils=4)
    fractions = [coil_compress(ds, q).energy_fraction for q in (1, 2, 3)]
    assert fractions == sorted(fractions)
    assert coil_compress(ds, 2).dataset.coils == 2


def test_coil_compress_rank_one_coils_lose_nothing(make_kt):
    ds = make_kt(coils=1)
    weights = np.array([1.0, 0.5 - 0.5j, -2.0j, 0.25])
    rank_one = KtDataset(ds.grid, ds.samples * weights[None, None, None, :, None], ds.mask)
    cc = coil_compress(rank_one, 1)
    assert cc.energy_fraction == pytest.approx(1.0, abs=1e-12)
    restored = np.einsum("xyzpt,qp->xyzqt", cc.dataset.samples, cc.matrix.conj())
    residual = np.linalg.norm(restored - rank_one.samples) / np.linalg.norm(rank_one.samples)
    assert residual < 1e-10


def test_coil_compress_rejects_bad_count(make_kt):
    with pytest.raises(ValidationError):
        coil_compress(make_kt(coils=2), 3)


def test_compress_maps_checks_coils(rng):
    maps = normalized_maps(rng, Grid((4, 4)), 3)
    assert compress_maps(maps, np.eye(3)[:, :2]).coils == 2
    with pytest.raises(ValidationError):
        compress_maps(maps, np.eye(2))
