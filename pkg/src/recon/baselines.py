"""
基线重建方法：零填充、数据共享、PSF 时间基
"""

from typing import Optional

import numpy as np

from src.calib.calib_gram import acs_block
from src.data.types import DynamicImage, KtDataset, SensitivityMaps
from src.recon.operators import TemporalModel
from src.utils.errors import ValidationError
from src.utils.fft import ifftc
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

EPS_RELATIVE = 1e-6


def sense_combine(coil_images: np.ndarray, maps: Optional[SensitivityMaps] = None) -> np.ndarray:
    """
    逐体素线圈合并 Σ_q c_q* y_q / max(Σ_q |c_q|², ε)

    Args:
        coil_images: (x,y,z,Q,T) 线圈图像
        maps: 线圈灵敏度；单线圈时可省略

    Returns:
        (x,y,z,T) 合并图像
    """
    if maps is None:
        if coil_images.shape[3] != 1:
            raise ValidationError("多线圈数据合并需要灵敏度")
        return coil_images[:, :, :, 0, :]
    if maps.values.shape != coil_images.shape[:4]:
        raise ValidationError(f"灵敏度尺寸 {maps.values.shape} 与线圈图像 {coil_images.shape[:4]} 不一致")
    c = maps.values
    energy = np.sum(np.abs(c) ** 2, axis=3)
    eps = EPS_RELATIVE * float(np.max(np.abs(c) ** 2)) if np.any(c) else 1.0
    combined = np.sum(np.conj(c)[..., None] * coil_images, axis=3)
    return combined / np.maximum(energy, eps)[..., None]


def zero_filled(data: KtDataset, maps: Optional[SensitivityMaps] = None) -> DynamicImage:
    """零填充重建：欠采样数据直接逆 DFT 后合并线圈"""
    return DynamicImage(data.grid, sense_combine(ifftc(data.samples), maps))


def nearest_sampled_frame(flags: np.ndarray) -> np.ndarray:
    """
    每个 (k, t) 时间上最近的采样帧（距离相同取较早帧）

    Args:
        flags: (…, T) 布尔采样模板

    Returns:
        与 flags 同形状的帧序号
    """
    T = flags.shape[-1]
    frames = np.arange(T)
    previous = np.maximum.accumulate(np.where(flags, frames, -1), axis=-1)
    following = np.flip(np.minimum.accumulate(np.flip(np.where(flags, frames, T), axis=-1), axis=-1), axis=-1)
    use_previous = (previous >= 0) & ((following >= T) | (frames - previous <= following - frames))
    return np.where(use_previous, previous, following)


def data_sharing(data: KtDataset, maps: Optional[SensitivityMaps] = None) -> DynamicImage:
    """
    数据共享重建：缺失的 (k, t) 用时间上最近的采样帧填充

    Args:
        data: 欠采样数据（每个 k 位置至少在一帧被采样）
        maps: 线圈灵敏度

    Returns:
        DynamicImage
    """
    flags = data.mask.flags
    if not np.all(np.any(flags, axis=-1)):
        missing = int(np.sum(~np.any(flags, axis=-1)))
        raise ValidationError(f"{missing} 个 k-space 位置在所有帧中都未采样，无法数据共享")
    source = nearest_sampled_frame(flags)
    shared = np.take_along_axis(data.samples, np.broadcast_to(source[:, :, :, None, :], data.samples.shape), axis=4)
    return DynamicImage(data.grid, sense_combine(ifftc(shared), maps))


def psf_basis_from_acs(acs: KtDataset, L_psf: int) -> TemporalModel:
    """
    由 ACS 低分辨率图像的 Casorati 矩阵求 PSF 时间基

    Args:
        acs: 单线圈数据（每帧 ACS 全采样）
        L_psf: 时间基个数

    Returns:
        TemporalModel(kind="psf")，basis[:, l] 为第 l 个右奇异向量
    """
    block = acs_block(acs)
    T = block.shape[3]
    if not 1 <= L_psf <= T:
        raise ValidationError(f"PSF 阶数 L={L_psf} 必须位于 [1, T={T}]")
    casorati = ifftc(block).reshape(-1, T)
    _, svals, vh = np.linalg.svd(casorati, full_matrices=False)
    energy = np.sum(svals[:L_psf] ** 2) / max(np.sum(svals ** 2), 1e-300)
    logger.info("PSF 时间基: L=%d，保留能量 %.6f", L_psf, energy)
    return TemporalModel.from_basis(vh[:L_psf].T)
