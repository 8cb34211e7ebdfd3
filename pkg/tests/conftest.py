"""
测试公共夹具
"""

import numpy as np
import pytest

from src.data.types import Grid, KtDataset, SamplingMask, SensitivityMaps
from src.phantom.sampling import MaskSpec, generate_mask


def random_complex(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def full_mask(grid: Grid, frames: int) -> SamplingMask:
    """全采样模板，ACS 为整个网格"""
    flags = np.ones(grid.dims + (frames,), dtype=bool)
    return SamplingMask(grid, flags, tuple((0, n) for n in grid.dims))


def normalized_maps(rng: np.random.Generator, grid: Grid, Q: int) -> SensitivityMaps:
    """随机线圈灵敏度，逐体素 Σ_q |c_q|² = 1"""
    values = random_complex(rng, grid.dims + (Q,))
    values /= np.linalg.norm(values, axis=-1, keepdims=True)
    return SensitivityMaps(grid, values)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_kt(rng):
    """随机欠采样 kt 数据集工厂"""

    def _make(dims=(12, 10), frames=4, coils=2, acs=(4,), extra=(1,)):
        grid = Grid(dims)
        mask = generate_mask(grid, frames, MaskSpec(acs=list(acs), extra_lines=list(extra)))
        samples = random_complex(rng, grid.dims + (coils, frames)) * mask.flags[:, :, :, None, :]
        return KtDataset(grid, samples, mask)

    return _make


@pytest.fixture
def make_full_acs(rng):
    """单线圈全采样 ACS 数据集工厂"""

    def _make(dims, frames):
        grid = Grid(dims)
        return KtDataset(grid, random_complex(rng, grid.dims + (1, frames)), full_mask(grid, frames))

    return _make
