"""
采集模拟：逐帧逐线圈 c_q(x)ρ(x,t) 的空间 DFT，欠采样并在采样点上加复高斯噪声
"""

import numpy as np

from src.data.types import DynamicImage, KtDataset, SamplingMask, SensitivityMaps
from src.utils.errors import ValidationError
from src.utils.fft import fftc


def simulate_acquisition(img: DynamicImage, maps: SensitivityMaps, mask: SamplingMask,
                         sigma: float, seed: int) -> KtDataset:
    """
    模拟多线圈欠采样采集

    Args:
        img: 动态图像
        maps: 线圈灵敏度
        mask: 采样模板
        sigma: 噪声标准差（复数，E|n|² = σ²）
        seed: 噪声种子

    Returns:
        KtDataset
    """
    if img.grid != maps.grid or img.grid != mask.grid or img.frames != mask.frames:
        raise ValidationError("图像、灵敏度与采样模板的尺寸不一致")
    if sigma < 0:
        raise ValidationError("噪声标准差不能为负")

    coil_images = img.values[:, :, :, None, :] * maps.values[..., None]
    samples = fftc(coil_images)
    if sigma > 0:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
        noise = rng.standard_normal(samples.shape) + 1j * rng.standard_normal(samples.shape)
        samples += sigma / np.sqrt(2.0) * noise
    samples *= mask.flags[:, :, :, None, :]
    return KtDataset(img.grid, samples, mask)
