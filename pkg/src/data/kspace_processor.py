"""
k-space 数据处理
ACS 区域提取、SVD 线圈压缩
"""

from typing import NamedTuple

import numpy as np

from src.data.types import Grid, KtDataset, SamplingMask, SensitivityMaps
from src.utils.errors import ValidationError
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)


class CoilCompression(NamedTuple):
    """线圈压缩结果"""

    dataset: KtDataset
    matrix: np.ndarray
    energy_fraction: float


def extract_acs(ds: KtDataset) -> KtDataset:
    """
    提取 ACS 区域为独立的全采样数据集

    Args:
        ds: 原始数据集

    Returns:
        网格等于 ACS 尺寸、模板全为真的数据集
    """
    block = ds.samples[ds.mask.acs_slices]
    grid = Grid(block.shape[:3])
    flags = np.ones(grid.dims + (ds.frames,), dtype=bool)
    box = tuple((0, n) for n in grid.dims)
    return KtDataset(grid, block, SamplingMask(grid, flags, box))


def coil_compress(ds: KtDataset, Q_out: int) -> CoilCompression:
    """
    SVD 线圈压缩

    把所有已采样点堆叠成 (样本数 × Q) 矩阵，投影到前 Q_out 个右奇异向量

    Args:
        ds: 多线圈数据集
        Q_out: 虚拟线圈数

    Returns:
        压缩后的数据集、Q×Q_out 压缩矩阵、保留的奇异值能量比例
    """
    Q = ds.coils
    if Q_out < 1 or Q_out > Q:
        raise ValidationError(f"虚拟线圈数 Q_out={Q_out} 必须在 [1, {Q}]")
    sampled = np.moveaxis(ds.mask.flags, 3, 0)
    stacked = np.moveaxis(ds.samples, 3, -1)
    stacked = np.moveaxis(stacked, 3, 0)[sampled]
    if stacked.shape[0] == 0:
        raise ValidationError("采样模板为空，无法压缩线圈")

    _, svals, vh = np.linalg.svd(stacked, full_matrices=False)
    matrix = vh[:Q_out].conj().T
    energy = svals ** 2
    fraction = float(energy[:Q_out].sum() / energy.sum()) if energy.sum() > 0 else 1.0

    compressed = np.einsum("xyzqt,qp->xyzpt", ds.samples, matrix)
    compressed *= ds.mask.flags[:, :, :, None, :]
    logger.info("线圈压缩 %d → %d，保留能量 %.4f", Q, Q_out, fraction)
    return CoilCompression(KtDataset(ds.grid, compressed, ds.mask), matrix, fraction)


def compress_maps(maps: SensitivityMaps, matrix: np.ndarray) -> SensitivityMaps:
    """对灵敏度图施加同一个虚拟线圈矩阵"""
    if matrix.shape[0] != maps.coils:
        raise ValidationError("压缩矩阵与灵敏度图线圈数不一致")
    return SensitivityMaps(maps.grid, maps.values @ matrix)
