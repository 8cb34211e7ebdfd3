"""
多线圈 ACS 的 SENSE 合并
"""

import numpy as np

from src.data.types import KtDataset, SamplingMask, SensitivityMaps
from src.utils.errors import ValidationError
from src.utils.fft import fftc, ifftc

EPS_RELATIVE = 1e-6


def combine_acs(acs: KtDataset, maps: SensitivityMaps, eps: float = None) -> KtDataset:
    """
    逐帧 SENSE 合并多线圈 ACS 数据

    ACS 外补零，逐线圈逐帧逆 DFT，逐体素 ρ̂ = Σ_q c_q* y_q / max(Σ_q |c_q|², ε)，
    正向 DFT 后只保留 ACS 区域

    Args:
        acs: 全网格多线圈数据（只使用 ACS 区域）
        maps: 线圈灵敏度
        eps: 分母下限，默认 1e-6·max|c|²

    Returns:
        单线圈 KtDataset，采样模板只含 ACS
    """
    if maps.grid != acs.grid:
        raise ValidationError(f"灵敏度网格 {maps.grid.dims} 与数据网格 {acs.grid.dims} 不一致")
    if maps.coils != acs.coils:
        raise ValidationError(f"灵敏度线圈数 {maps.coils} 与数据线圈数 {acs.coils} 不一致")
    c = maps.values
    energy = np.sum(np.abs(c) ** 2, axis=3)
    if not np.any(energy > 0):
        raise ValidationError("灵敏度全为零")
    if eps is None:
        eps = EPS_RELATIVE * float(np.max(np.abs(c) ** 2))

    window = np.zeros(acs.grid.dims, dtype=bool)
    window[acs.mask.acs_slices] = True
    kspace = acs.samples * window[:, :, :, None, None]
    coil_images = ifftc(kspace)
    combined = np.sum(np.conj(c)[..., None] * coil_images, axis=3) / np.maximum(energy, eps)[..., None]
    out = fftc(combined) * window[..., None]

    flags = np.broadcast_to(window[..., None], acs.grid.dims + (acs.frames,))
    mask = SamplingMask(acs.grid, flags, acs.mask.acs_box)
    return KtDataset(acs.grid, out[:, :, :, None, :], mask)
