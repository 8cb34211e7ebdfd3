"""
重建质量指标：NPR、NRMSE、Casorati 谱
"""

from typing import Dict, Iterable, Optional

import numpy as np

from src.data.types import DynamicImage, Grid, KtDataset, RoiMask, SamplingMask, SensitivityMaps
from src.recon.config import ReconConfig
from src.recon.operators import ForwardOp, TemporalModel
from src.recon.tikhonov import solve_tikhonov
from src.utils.errors import ValidationError

# 投影求解：无正则、严格容差
PROJECTION_CONFIG = ReconConfig(regularizer="none", lam=0.0, iters=100, tol=1e-12)


def _roi_flags(grid: Grid, roi: Optional[RoiMask]) -> np.ndarray:
    if roi is None:
        return np.ones(grid.dims, dtype=bool)
    if roi.grid != grid:
        raise ValidationError(f"ROI 网格 {roi.grid.dims} 与图像网格 {grid.dims} 不一致")
    roi.require_nonempty()
    return roi.flags


def _check_same(a: DynamicImage, b: DynamicImage):
    if a.values.shape != b.values.shape:
        raise ValidationError(f"图像尺寸不一致: {a.values.shape} 与 {b.values.shape}")


def full_sampling_operator(grid: Grid, frames: int) -> ForwardOp:
    """全采样、单线圈、c ≡ 1 的前向算子"""
    flags = np.ones(grid.dims + (frames,), dtype=bool)
    mask = SamplingMask(grid, flags, tuple((0, n) for n in grid.dims))
    maps = SensitivityMaps(grid, np.ones(grid.dims + (1,), dtype=np.complex128))
    return ForwardOp(maps, mask)


def project_onto_model(reference: DynamicImage, model: TemporalModel) -> DynamicImage:
    """无正则全采样最小二乘：参考图像在模型张成空间上的投影"""
    op = full_sampling_operator(reference.grid, reference.frames)
    data = KtDataset(reference.grid, op.forward(reference.values), op.mask)
    return solve_tikhonov(op, model, data, PROJECTION_CONFIG).image


def npr(reference: DynamicImage, model: TemporalModel, roi: Optional[RoiMask] = None,
        L: Optional[int] = None) -> float:
    """
    归一化投影残差 NPR(L) = ‖ρ − ρ̂(L)‖ / ‖ρ‖（ROI 内全部帧）

    Args:
        reference: 全采样参考图像
        model: 时间模型
        roi: 感兴趣区域
        L: 使用的分量数，默认模型全部分量

    Returns:
        NPR
    """
    if L is not None:
        model = model.truncate(L)
    flags = _roi_flags(reference.grid, roi)
    ref = reference.values[flags]
    norm = np.linalg.norm(ref)
    if norm == 0:
        return 0.0
    projected = project_onto_model(reference, model).values[flags]
    return float(np.linalg.norm(ref - projected) / norm)


def npr_curve(reference: DynamicImage, model: TemporalModel, roi: Optional[RoiMask] = None,
              Ls: Iterable[int] = None) -> Dict[int, float]:
    """L → NPR(L)，默认 L = 1..模型分量数"""
    Ls = range(1, model.components + 1) if Ls is None else Ls
    return {int(L): npr(reference, model, roi, int(L)) for L in Ls}


def nrmse(recon: DynamicImage, reference: DynamicImage, roi: Optional[RoiMask] = None) -> float:
    """‖recon − reference‖ / ‖reference‖（ROI 内或全网格，全部帧）"""
    _check_same(recon, reference)
    flags = _roi_flags(reference.grid, roi)
    ref = reference.values[flags]
    norm = np.linalg.norm(ref)
    if norm == 0:
        raise ValidationError("参考图像在 ROI 内为零，NRMSE 无定义")
    return float(np.linalg.norm(recon.values[flags] - ref) / norm)


def nrmse_per_frame(recon: DynamicImage, reference: DynamicImage,
                    roi: Optional[RoiMask] = None) -> np.ndarray:
    """逐帧 NRMSE（参考帧为零时记为 0）"""
    _check_same(recon, reference)
    flags = _roi_flags(reference.grid, roi)
    ref = reference.values[flags]
    err = np.linalg.norm(recon.values[flags] - ref, axis=0)
    norm = np.linalg.norm(ref, axis=0)
    return np.where(norm > 0, err / np.where(norm > 0, norm, 1.0), 0.0)


def casorati_spectrum(image: DynamicImage, k: Optional[int] = None, roi: Optional[RoiMask] = None,
                      normalize: bool = True) -> np.ndarray:
    """
    Casorati 矩阵（体素 × 帧）的前 k 个奇异值

    Args:
        image: 动态图像
        k: 个数，默认全部
        roi: 只取 ROI 内体素
        normalize: 是否除以最大奇异值

    Returns:
        降序奇异值
    """
    flags = _roi_flags(image.grid, roi)
    svals = np.linalg.svd(image.values[flags], compute_uv=False)
    if normalize and svals.size and svals[0] > 0:
        svals = svals / svals[0]
    return svals if k is None else svals[:k]
