"""
λ 扫描：几何网格上逐个重建，按参考图像的 NRMSE 选最优
"""

from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.data.types import DynamicImage, RoiMask
from src.metrics.quality import nrmse
from src.utils.errors import ValidationError
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)


class SweepResult(NamedTuple):
    """扫描结果：最优 λ、最优 NRMSE、全部 (λ, NRMSE)、最优重建图像"""

    best_lambda: float
    best_nrmse: float
    table: List[Tuple[float, float]]
    best_image: DynamicImage


def geometric_grid(low: float, high: float, count: int) -> np.ndarray:
    """[low, high] 上的几何网格"""
    if low <= 0 or high < low or count < 1:
        raise ValidationError(f"无效的 λ 网格: [{low}, {high}] × {count}")
    return np.geomspace(low, high, count)


def lambda_sweep(solver: Callable[[float], DynamicImage], lambdas: Sequence[float],
                 reference: DynamicImage, roi: Optional[RoiMask] = None) -> SweepResult:
    """
    在 λ 网格上扫描

    Args:
        solver: λ → 重建图像
        lambdas: λ 网格
        reference: 参考图像
        roi: 误差计算区域

    Returns:
        SweepResult
    """
    if len(lambdas) == 0:
        raise ValidationError("λ 网格不能为空")
    table = []
    best = None
    for lam in lambdas:
        image = solver(float(lam))
        error = nrmse(image, reference, roi)
        table.append((float(lam), error))
        if best is None or error < best[1]:
            best = (float(lam), error, image)
    logger.info("λ 扫描: 最优 λ = %.3g, NRMSE = %.4f", best[0], best[1])
    return SweepResult(best[0], best[1], table, best[2])
