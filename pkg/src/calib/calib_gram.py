"""
校准矩阵 C 与 Gram 矩阵 CᴴC

C = [C_1 … C_T]，每行是完全位于 ACS 区域内的一个 Λ 邻域，
第 (t,ℓ) 列的元素为 ρ̃(k−ℓ, t)
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.fft

from src.calib.kernel_support import KernelSupport
from src.data.types import KtDataset
from src.utils.errors import ValidationError
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

# 直接构造 C 的元素数上限
DIRECT_ELEMENT_LIMIT = 50_000_000


@dataclass(frozen=True)
class CalibGram:
    """校准 Gram 矩阵（Hermitian 半正定，|Λ|T × |Λ|T）"""

    matrix: np.ndarray
    support: KernelSupport
    frames: int
    source_extents: Tuple[int, int, int]

    def leading_frames(self, count: int) -> "CalibGram":
        """前 count 帧的 Gram（列按帧分块，直接截取左上角子块）"""
        count = max(1, min(int(count), self.frames))
        size = count * self.support.size
        return CalibGram(self.matrix[:size, :size], self.support, count, self.source_extents)

    @property
    def row_bound(self) -> int:
        """C 的行数，即 rank(CᴴC) 的上界"""
        return interior_count(self.source_extents, kernel_radii(self.support))


# ==================== ACS 数据整理 ====================

def acs_block(acs: KtDataset) -> np.ndarray:
    """
    取出单线圈 ACS 数据块

    Args:
        acs: 单线圈数据集（全网格或已提取的 ACS 网格）

    Returns:
        (a_x, a_y, a_z, T) 复数组
    """
    if acs.coils != 1:
        raise ValidationError(f"校准需要单线圈数据，当前 Q={acs.coils}；请先合并线圈")
    return np.asarray(acs.samples[acs.mask.acs_slices][:, :, :, 0, :])


def kernel_radii(support: KernelSupport) -> Tuple[int, int, int]:
    rad = support.radius
    return (rad, rad, rad if support.D == 3 else 0)


def interior_slices(extents, radii) -> Tuple[slice, ...]:
    """完全内部邻域中心的切片，无可用中心时报错"""
    slices = tuple(slice(r, n - r) for n, r in zip(extents, radii))
    if any(s.stop <= s.start for s in slices):
        raise ValidationError(f"ACS 区域 {tuple(extents)} 太小，无法容纳半径 {max(radii)} 的完整邻域")
    return slices


def interior_count(extents, radii) -> int:
    """完全内部邻域中心的个数（可为 0）"""
    return int(np.prod([max(n - 2 * r, 0) for n, r in zip(extents, radii)]))


def shifted_view(block: np.ndarray, interior: Tuple[slice, ...], ell: np.ndarray) -> np.ndarray:
    """内部中心 k 上的 block[k − ℓ]"""
    return block[tuple(slice(s.start - e, s.stop - e) for s, e in zip(interior, ell))]


# ==================== 直接构造（测试基准） ====================

def build_C_direct(acs: KtDataset, support: KernelSupport) -> np.ndarray:
    """
    直接构造校准矩阵 C

    Args:
        acs: 单线圈 ACS 数据（每帧 ACS 全采样）
        support: 核支撑

    Returns:
        I × |Λ|T 复矩阵
    """
    return calibration_matrix(acs_block(acs), support)


def calibration_matrix(block: np.ndarray, support: KernelSupport) -> np.ndarray:
    """由 (a_x, a_y, a_z, T) 数据块构造 C"""
    extents, T = block.shape[:3], block.shape[3]
    interior = interior_slices(extents, kernel_radii(support))
    rows = int(np.prod([s.stop - s.start for s in interior]))
    if rows * support.size * T > DIRECT_ELEMENT_LIMIT:
        raise ValidationError("直接构造 C 的规模过大，请使用 FFT 路径")

    C = np.empty((rows, T, support.size), dtype=np.complex128)
    for i, ell in enumerate(support.offsets):
        C[:, :, i] = shifted_view(block, interior, ell).reshape(rows, T)
    return C.reshape(rows, T * support.size)


# ==================== FFT 快速路径 ====================

def _gram_fft_block(block: np.ndarray, support: KernelSupport) -> np.ndarray:
    """
    单个数据块的 CᴴC（FFT 路径）

    第二个因子限制在平移后的内部窗口上，偏移差 ℓ−ℓ′ 处的互相关
    在零填充的频域中以一次矩阵乘积求值，与直接定义逐元素一致
    """
    extents, T = block.shape[:3], block.shape[3]
    radii = kernel_radii(support)
    interior = interior_slices(extents, radii)
    padded = tuple(scipy.fft.next_fast_len(n + 2 * r) for n, r in zip(extents, radii))
    n_freq = int(np.prod(padded))
    n_off = support.size

    # X[(t,ℓ), f] = conj(FFT(a_t)(f)) · e^{+i2π f·ℓ/P}
    spectra = scipy.fft.fftn(block, s=padded, axes=(0, 1, 2)).reshape(n_freq, T)
    freq_axes = np.meshgrid(*[np.arange(p) / p for p in padded], indexing="ij")
    freq = np.stack([f.ravel() for f in freq_axes], axis=1)
    phase = np.exp(2j * np.pi * (support.offsets @ freq.T))
    X = (spectra.T.conj()[:, None, :] * phase[None, :, :]).reshape(T * n_off, n_freq)

    # Y[f, (t′,ℓ′)] = FFT(1_K(m) · b_t′(m − ℓ′))(f)
    Y = np.empty((n_freq, T, n_off), dtype=np.complex128)
    window = np.zeros(padded + (T,), dtype=np.complex128)
    for i, ell in enumerate(support.offsets):
        window[...] = 0
        window[interior] = shifted_view(block, interior, ell)
        Y[:, :, i] = scipy.fft.fftn(window, axes=(0, 1, 2)).reshape(n_freq, T)

    gram = (X @ Y.reshape(n_freq, T * n_off)) / n_freq
    return 0.5 * (gram + gram.conj().T)


def gram_from_channels(block: np.ndarray, support: KernelSupport) -> np.ndarray:
    """
    任意“通道”轴的 Gram 矩阵

    Args:
        block: (a_x, a_y, a_z, C) 或 (a_x, a_y, a_z, C, R)，最后一轴为重复（逐个求和）
        support: 核支撑

    Returns:
        |Λ|C × |Λ|C Gram 矩阵
    """
    if block.ndim == 4:
        return _gram_fft_block(block, support)
    gram = None
    for r in range(block.shape[4]):
        part = _gram_fft_block(block[..., r], support)
        gram = part if gram is None else gram + part
    return gram


def build_gram_fft(acs: KtDataset, support: KernelSupport) -> CalibGram:
    """
    FFT 路径计算 CalibGram

    Args:
        acs: 单线圈 ACS 数据
        support: 核支撑

    Returns:
        CalibGram
    """
    block = acs_block(acs)
    matrix = gram_from_channels(block, support)
    logger.debug("Gram 矩阵: %d × %d, ACS %s", matrix.shape[0], matrix.shape[1], block.shape[:3])
    return CalibGram(matrix, support, block.shape[3], tuple(block.shape[:3]))


def build_gram(acs: KtDataset, support: KernelSupport) -> CalibGram:
    """
    按代价选择 Gram 的计算路径

    C 的行数总少于零填充后的 FFT 频点数，规模允许时直接计算 CᴴC，
    否则走 FFT 路径；两条路径在数值误差内一致

    Args:
        acs: 单线圈 ACS 数据
        support: 核支撑

    Returns:
        CalibGram
    """
    block = acs_block(acs)
    extents, T = block.shape[:3], block.shape[3]
    radii = kernel_radii(support)
    rows = interior_count(extents, radii)
    if rows > 0 and rows * support.size * T <= DIRECT_ELEMENT_LIMIT:
        C = calibration_matrix(block, support)
        matrix = C.conj().T @ C
        logger.debug("Gram 矩阵（直接）: %d × %d, C 行数 %d", matrix.shape[0], matrix.shape[1], rows)
        return CalibGram(0.5 * (matrix + matrix.conj().T), support, T, tuple(extents))
    return build_gram_fft(acs, support)
