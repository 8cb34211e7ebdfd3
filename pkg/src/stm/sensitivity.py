"""
线圈灵敏度估计

与时空图相同的流程，线圈轴充当“帧”，L = 1；
时间帧作为重复测量累加到 Gram 矩阵（frames="all"），或只用第一帧（frames="first"）
"""

import numpy as np

from src.calib.calib_gram import gram_from_channels
from src.calib.kernel_support import KernelSupport
from src.calib.nullspace import DEFAULT_TAU, exact_projector
from src.data.types import KtDataset, SensitivityMaps
from src.stm.gram_field import compute_gram_field
from src.stm.interpolation import interpolate_maps
from src.stm.orth_iteration import extract_maps
from src.utils.errors import ValidationError
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

FRAME_MODES = ("all", "first")


def estimate_sensitivity_maps(acs: KtDataset, support: KernelSupport, frames: str = "all",
                              tau_rel: float = DEFAULT_TAU, coarsen: int = 1,
                              reference_coil: int = 0, seed: int = 0,
                              workers: int = None) -> SensitivityMaps:
    """
    由多线圈 ACS 数据估计灵敏度

    Args:
        acs: 多线圈数据（全网格，只使用 ACS 区域）
        support: 核支撑
        frames: all 或 first
        tau_rel: 零空间秩阈值
        coarsen: Gram 场求值网格的降采样因子
        reference_coil: 相位参考线圈
        seed: 正交迭代初始种子
        workers: 线程数

    Returns:
        SensitivityMaps，逐体素单位范数，参考线圈相位为零
    """
    if acs.coils < 2:
        raise ValidationError(f"灵敏度估计至少需要 2 个线圈，当前 Q={acs.coils}")
    if frames not in FRAME_MODES:
        raise ValidationError(f"frames 只能是 {FRAME_MODES}")
    if not 0 <= reference_coil < acs.coils:
        raise ValidationError(f"参考线圈 {reference_coil} 超出范围")

    block = np.asarray(acs.samples[acs.mask.acs_slices])
    if frames == "first":
        block = block[..., 0]
    if not np.any(block):
        raise ValidationError("ACS 数据全为零，无法估计灵敏度")

    gram = gram_from_channels(block, support)
    projector = exact_projector(gram, tau_rel)
    eval_grid = acs.grid if coarsen <= 1 else acs.grid.coarsen(coarsen)
    field = compute_gram_field(projector, support, eval_grid, workers=workers)
    stm = extract_maps(field, L=1, seed=seed, workers=workers)
    if eval_grid != acs.grid:
        stm = interpolate_maps(stm, acs.grid)

    coil_maps = np.array(stm.maps[:, :, :, 0, :])
    norm = np.linalg.norm(coil_maps, axis=3, keepdims=True)
    coil_maps = coil_maps / np.where(norm > 0, norm, 1.0)
    ref = coil_maps[..., reference_coil: reference_coil + 1]
    magnitude = np.abs(ref)
    coil_maps = coil_maps * np.where(magnitude > 0, np.conj(ref) / np.where(magnitude > 0, magnitude, 1.0), 1.0)
    logger.info("灵敏度估计完成: Q=%d, r_C=%d", acs.coils, projector.rank_estimate)
    return SensitivityMaps(acs.grid, coil_maps)
