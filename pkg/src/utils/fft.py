"""
居中FFT工具
k-space 与图像域均以网格中心为原点，norm='ortho' 保证单位性
"""

from typing import Sequence

import numpy as np
import scipy.fft

SPATIAL_AXES = (0, 1, 2)


def fftc(x: np.ndarray, axes: Sequence[int] = SPATIAL_AXES, workers: int = None) -> np.ndarray:
    """居中的正向DFT（单位化）"""
    axes = tuple(axes)
    shifted = scipy.fft.ifftshift(x, axes=axes)
    return scipy.fft.fftshift(
        scipy.fft.fftn(shifted, axes=axes, norm="ortho", workers=workers), axes=axes
    )


def ifftc(x: np.ndarray, axes: Sequence[int] = SPATIAL_AXES, workers: int = None) -> np.ndarray:
    """居中的逆向DFT（单位化）"""
    axes = tuple(axes)
    shifted = scipy.fft.ifftshift(x, axes=axes)
    return scipy.fft.fftshift(
        scipy.fft.ifftn(shifted, axes=axes, norm="ortho", workers=workers), axes=axes
    )


def centered_coordinates(n: int) -> np.ndarray:
    """居中坐标 0 位于索引 n//2"""
    return np.arange(n) - n // 2


def center_slices(full: Sequence[int], part: Sequence[int]):
    """返回把 part 大小区域放在 full 中心的切片（与 fftshift 中心一致）"""
    return tuple(slice(f // 2 - p // 2, f // 2 - p // 2 + p) for f, p in zip(full, part))
