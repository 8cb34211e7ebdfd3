"""
时空图插值：空间 DFT 零填充到目标网格，再逐体素极分解重新正交归一
"""

import numpy as np

from src.data.types import Grid, StmSet
from src.utils.fft import center_slices, fftc, ifftc


def _resample(values: np.ndarray, target: Grid) -> np.ndarray:
    """沿前三个空间轴做 DFT 零填充（或居中截断）"""
    source_dims = values.shape[:3]
    if source_dims == target.dims:
        return values.astype(np.complex128)
    spectrum = fftc(values)
    common = tuple(min(a, b) for a, b in zip(source_dims, target.dims))
    out = np.zeros(target.dims + values.shape[3:], dtype=np.complex128)
    out[center_slices(target.dims, common)] = spectrum[center_slices(source_dims, common)]
    scale = np.sqrt(target.N / float(np.prod(source_dims)))
    return scale * ifftc(out)


def _polar(maps: np.ndarray) -> np.ndarray:
    """逐体素 (T × L) 极分解的酉因子 U·Vᴴ"""
    U, _, Vh = np.linalg.svd(maps, full_matrices=False)
    return U @ Vh


def _nearest(field: np.ndarray, target: Grid) -> np.ndarray:
    """最近邻重采样（整数场）"""
    index = [np.minimum((np.arange(n) * s) // n, s - 1) for s, n in zip(field.shape, target.dims)]
    return field[np.ix_(*index)]


def interpolate_maps(coarse: StmSet, target: Grid) -> StmSet:
    """
    把粗网格上的时空图插值到目标网格

    Args:
        coarse: 粗网格时空图
        target: 目标网格

    Returns:
        目标网格上的 StmSet；L(x) 场按最近邻传递
    """
    L, T = coarse.components, coarse.frames
    fine = _resample(np.asarray(coarse.maps), target)
    # (x, y, z, L, T) → (N, T, L)
    stacked = np.swapaxes(fine.reshape(target.N, L, T), 1, 2)
    orthonormal = np.swapaxes(_polar(stacked), 1, 2).reshape(target.dims + (L, T))
    eigvals = np.real(_resample(np.asarray(coarse.eigvals), target))

    local = None
    if coarse.local_components is not None:
        local = _nearest(np.asarray(coarse.local_components), target)
    return StmSet(target, orthonormal, eigvals, local)
