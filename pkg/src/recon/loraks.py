"""
结构化低秩正则（LORAKS 类，C 矩阵邻域构造）

每个 STM 分量图像视为一个虚拟通道，其 k-space 的邻域矩阵应为低秩；
MM 迭代：每个外层步对当前估计做秩 r 截断，内层二次问题用 Krylov 求解
"""

from typing import List, Optional

import numpy as np

from src.calib.calib_gram import calibration_matrix, interior_slices, kernel_radii
from src.calib.kernel_support import KernelSupport, build_support
from src.data.types import DynamicImage, KtDataset
from src.recon.config import ReconConfig
from src.recon.krylov import ConjugateGradient
from src.recon.operators import ForwardOp, TemporalModel
from src.recon.tikhonov import ReconResult, check_inputs, model_normal, solve_tikhonov
from src.utils.errors import ConfigurationError
from src.utils.fft import fftc, ifftc
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)


# ==================== 结构化矩阵 ====================

def structured_matrix(kspace: np.ndarray, support: KernelSupport) -> np.ndarray:
    """(k_x,k_y,k_z,L) 多通道 k-space → 行数 × L|Λ| 的邻域矩阵"""
    return calibration_matrix(kspace, support)


def structured_adjoint(Z: np.ndarray, support: KernelSupport, shape) -> np.ndarray:
    """structured_matrix 的伴随：把矩阵元素按邻域位置累加回 k-space"""
    extents, channels = tuple(shape[:3]), shape[3]
    interior = interior_slices(extents, kernel_radii(support))
    inner_shape = tuple(s.stop - s.start for s in interior)
    blocks = Z.reshape(-1, channels, support.size)
    out = np.zeros(tuple(shape), dtype=np.complex128)
    for i, ell in enumerate(support.offsets):
        target = tuple(slice(s.start - e, s.stop - e) for s, e in zip(interior, ell))
        out[target] += blocks[:, :, i].reshape(inner_shape + (channels,))
    return out


def structured_counts(support: KernelSupport, extents) -> np.ndarray:
    """每个 k-space 位置在邻域矩阵中出现的次数（K*K 的对角）"""
    interior = interior_slices(tuple(extents), kernel_radii(support))
    counts = np.zeros(tuple(extents))
    for ell in support.offsets:
        counts[tuple(slice(s.start - e, s.stop - e) for s, e in zip(interior, ell))] += 1.0
    return counts


def _right_basis(K: np.ndarray):
    """KᴴK 的特征分解（降序），奇异值与右奇异向量"""
    evals, evecs = np.linalg.eigh(np.conj(K.T) @ K)
    order = np.argsort(evals)[::-1]
    return np.sqrt(np.clip(evals[order], 0, None)), evecs[:, order]


def low_rank_approx(K: np.ndarray, rank: int) -> np.ndarray:
    """最优秩 r 近似（硬阈值截断）"""
    if rank >= min(K.shape):
        raise ConfigurationError(f"秩 r={rank} 必须小于结构化矩阵的最小维数 {min(K.shape)}")
    _, V = _right_basis(K)
    Vr = V[:, :rank]
    return K @ Vr @ np.conj(Vr.T)


def structured_penalty(components: np.ndarray, support: KernelSupport, rank: int) -> float:
    """相对低秩残差 ‖K − K_r‖_F² / ‖K‖_F²（分量图像 (x,y,z,L)）"""
    K = structured_matrix(fftc(components), support)
    total = float(np.linalg.norm(K) ** 2)
    if total == 0:
        return 0.0
    return float(np.linalg.norm(K - low_rank_approx(K, rank)) ** 2) / total


def _auto_rank(K: np.ndarray, tau: float) -> int:
    svals, _ = _right_basis(K)
    if svals[0] == 0:
        return 1
    return max(1, min(int(np.count_nonzero(svals >= tau * svals[0])), min(K.shape) - 1))


# ==================== MM 迭代 ====================

def solve_structured_lowrank(op: ForwardOp, model: TemporalModel, data: KtDataset,
                             cfg: Optional[ReconConfig] = None,
                             x0: Optional[np.ndarray] = None) -> ReconResult:
    """
    结构化低秩正则的模型重建

    Args:
        op: 前向算子
        model: 时间模型
        data: 欠采样数据
        cfg: 重建参数（loraks_radius、loraks_rank 或 rank_schedule、outer_iters）
        x0: 分量图像初值，默认取同 λ 的 Tikhonov 解

    Returns:
        ReconResult
    """
    cfg = cfg or ReconConfig(regularizer="structured_lowrank")
    check_inputs(op, model, data)
    if cfg.regularizer == "none" or cfg.lam == 0:
        return solve_tikhonov(op, model, data, cfg.with_lambda(0.0), x0)
    lam = float(cfg.lam)

    support = build_support("ellipsoid", cfg.loraks_radius, op.grid.D)
    comp_shape = op.grid.dims + (model.components,)
    counts = structured_counts(support, op.grid.dims)[..., None]
    if x0 is None:
        x0 = solve_tikhonov(op, model, data, cfg).components
    x = np.array(x0, dtype=np.complex128)

    data_rhs = model.adjoint(op.adjoint(data.samples))
    data_normal = model_normal(op, model, 0.0)

    def apply(c: np.ndarray) -> np.ndarray:
        return data_normal(c) + lam * ifftc(counts * fftc(c))

    solver = ConjugateGradient(cfg.krylov, cfg.iters, cfg.tol)
    residuals: List[float] = []
    rank = cfg.loraks_rank
    for outer in range(cfg.outer_iters):
        K = structured_matrix(fftc(x), support)
        if cfg.rank_schedule:
            rank = cfg.rank_schedule[min(outer, len(cfg.rank_schedule) - 1)]
        elif rank is None:
            rank = _auto_rank(K, cfg.loraks_tau)
            logger.info("结构化矩阵 %d × %d，自动选取秩 r = %d", K.shape[0], K.shape[1], rank)
        target = ifftc(structured_adjoint(low_rank_approx(K, rank), support, comp_shape))

        result = solver.solve(apply, data_rhs + lam * target, x)
        residuals = result.residuals
        change = np.linalg.norm(result.x - x) / max(np.linalg.norm(x), 1e-300)
        x = result.x
        logger.debug("MM 第 %d 步: 相对变化 %.3e", outer + 1, change)
        if change < cfg.outer_tol:
            break

    return ReconResult(x, DynamicImage(op.grid, model.expand(x)), residuals)
