"""
特征值图：逐体素 G(x) 的特征值按最大值归一化、降序排列后取最后 k 个
"""

from typing import Optional

import numpy as np

from src.data.types import ImageStack
from src.stm.gram_field import GramField
from src.utils.errors import ValidationError
from src.utils.parallel import chunk_ranges, map_chunks

DEFAULT_EIGEN_COUNT = 10
VOXEL_CHUNK = 512


def eigenvalue_maps(field: GramField, k: int = DEFAULT_EIGEN_COUNT, workers: Optional[int] = None) -> ImageStack:
    """
    Args:
        field: Gram 场
        k: 输出的特征值个数（k ≤ T）
        workers: 并行线程数（按体素块切分）

    Returns:
        ImageStack，第 i 层为降序谱中第 T−k+i+1 个特征值
    """
    T = field.frames
    if not 1 <= k <= T:
        raise ValidationError(f"特征值个数 k={k} 必须位于 [1, T={T}]")
    G = field.matrices()
    evals = np.empty(G.shape[:2])

    def _solve(part: slice):
        evals[part] = np.linalg.eigvalsh(G[part])[:, ::-1]

    map_chunks(_solve, chunk_ranges(G.shape[0], VOXEL_CHUNK), workers)
    top = evals[:, :1]
    normalized = np.where(top > 0, evals / np.where(top > 0, top, 1.0), 0.0)
    last = normalized[:, T - k:]
    labels = tuple(f"lambda_{T - k + i + 1}" for i in range(k))
    return ImageStack(field.grid, last.reshape(field.grid.dims + (k,)), labels)
