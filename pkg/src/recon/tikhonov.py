"""
基于时间模型的 Tikhonov 重建

(Mᴴ Aᴴ A M + λI) ρ_comp = Mᴴ Aᴴ d，Krylov 迭代求解
"""

from typing import List, NamedTuple, Optional

import numpy as np

from src.data.types import DynamicImage, KtDataset
from src.recon.config import ReconConfig
from src.recon.krylov import ConjugateGradient
from src.recon.operators import ForwardOp, TemporalModel
from src.utils.errors import ValidationError
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)


class ReconResult(NamedTuple):
    """重建结果：分量图像 (x,y,z,L)、展开的动态图像、逐次残差"""

    components: np.ndarray
    image: DynamicImage
    residuals: List[float]


def check_inputs(op: ForwardOp, model: TemporalModel, data: KtDataset):
    """检查数据、算子与模型之间的一致性"""
    if data.grid != op.grid or data.coils != op.coils:
        raise ValidationError(f"数据尺寸 {data.samples.shape} 与算子 {op.data_shape} 不一致")
    if not np.array_equal(data.mask.flags, op.mask.flags):
        raise ValidationError("数据的采样模板与前向算子不一致")
    if model.frames != op.frames:
        raise ValidationError(f"模型帧数 {model.frames} 与数据帧数 {op.frames} 不一致")
    if model.kind == "stm" and model.maps.shape[:3] != op.grid.dims:
        raise ValidationError(f"时空图网格 {model.maps.shape[:3]} 与数据网格 {op.grid.dims} 不一致")


def effective_lambda(cfg: ReconConfig) -> float:
    lam = 0.0 if cfg.regularizer == "none" else float(cfg.lam)
    if lam < 0:
        raise ValidationError(f"正则化参数 λ={lam} 不能为负")
    return lam


def model_normal(op: ForwardOp, model: TemporalModel, lam: float):
    """返回 c ↦ Mᴴ Aᴴ A M c + λc"""
    def apply(c: np.ndarray) -> np.ndarray:
        out = model.adjoint(op.normal(model.expand(c)))
        return out + lam * c if lam else out
    return apply


def solve_tikhonov(op: ForwardOp, model: TemporalModel, data: KtDataset,
                   cfg: Optional[ReconConfig] = None, x0: Optional[np.ndarray] = None) -> ReconResult:
    """
    Tikhonov 正则化的模型重建

    Args:
        op: 前向算子
        model: 时间模型（STM 或 PSF）
        data: 欠采样数据（包含 ACS）
        cfg: 重建参数
        x0: 分量图像初值

    Returns:
        ReconResult
    """
    cfg = cfg or ReconConfig()
    check_inputs(op, model, data)
    lam = effective_lambda(cfg)

    rhs = model.adjoint(op.adjoint(data.samples))
    solver = ConjugateGradient(cfg.krylov, cfg.iters, cfg.tol)
    result = solver.solve(model_normal(op, model, lam), rhs, x0)
    logger.debug("Tikhonov(λ=%.3g): %d 次迭代，相对残差 %.3e", lam, result.iterations,
                 result.residuals[-1] / max(result.residuals[0], 1e-300))
    image = DynamicImage(op.grid, model.expand(result.x))
    return ReconResult(result.x, image, result.residuals)
