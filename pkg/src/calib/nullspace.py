"""
零空间投影矩阵 W = N Nᴴ 的估计

精确方法：CᴴC 的特征分解
草图方法：Y = Φ·CᴴC 的 SVD，W ≈ I − ṼṼᴴ
"""

from typing import NamedTuple, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from src.calib.calib_gram import CalibGram, build_gram
from src.data.types import KtDataset, NullspaceProjector
from src.utils.errors import ConfigurationError, NumericalError, ValidationError
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

DEFAULT_TAU = 1e-3
DEFAULT_PILOT_FRAMES = 8

GramLike = Union[CalibGram, np.ndarray]


class SketchConfig(BaseModel):
    """草图 SVD 配置，s = μ·r_C，μ ∈ [2, 6]（显式 sketch_dim 时不检查）"""

    multiplier: float = Field(2.0, ge=2.0, le=6.0)
    seed: int = 0
    sketch_dim: Optional[int] = Field(None, ge=1)
    rank: Optional[int] = Field(None, ge=0)
    pilot_frames: Optional[int] = Field(None, ge=1)
    tau_rel: float = Field(DEFAULT_TAU, gt=0, lt=1)


class RankEstimate(NamedTuple):
    """秩估计结果与降序谱"""

    rank: int
    spectrum: np.ndarray


def _matrix(gram: GramLike) -> np.ndarray:
    return gram.matrix if isinstance(gram, CalibGram) else np.asarray(gram, dtype=np.complex128)


def _check_tau(tau_rel: float):
    if not 0 < tau_rel < 1:
        raise ValidationError(f"相对阈值 τ={tau_rel} 必须位于 (0, 1)")


def estimate_rank(gram: GramLike, tau_rel: float = DEFAULT_TAU) -> RankEstimate:
    """
    按相对阈值估计秩：特征值 ≥ τ·λ_max 的个数

    Args:
        gram: Gram 矩阵
        tau_rel: 相对阈值

    Returns:
        RankEstimate（秩与降序排列的完整谱，便于观察曲线拐点）
    """
    _check_tau(tau_rel)
    spectrum = np.linalg.eigvalsh(_matrix(gram))[::-1]
    top = spectrum[0] if spectrum.size else 0.0
    if top <= 0:
        return RankEstimate(0, spectrum)
    return RankEstimate(int(np.count_nonzero(spectrum >= tau_rel * top)), spectrum)


def exact_projector(gram: GramLike, tau_rel: float = DEFAULT_TAU) -> NullspaceProjector:
    """
    特征分解求零空间投影 W = I − VVᴴ

    Args:
        gram: Gram 矩阵
        tau_rel: 相对阈值

    Returns:
        NullspaceProjector(method="exact")
    """
    _check_tau(tau_rel)
    matrix = _matrix(gram)
    try:
        evals, evecs = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"特征分解失败: {e}")
    evals, evecs = evals[::-1], evecs[:, ::-1]
    top = evals[0] if evals.size else 0.0
    rank = int(np.count_nonzero(evals >= tau_rel * top)) if top > 0 else 0
    V = evecs[:, :rank]
    W = np.eye(matrix.shape[0], dtype=np.complex128) - V @ V.conj().T
    logger.info("精确零空间: |Λ|T = %d, r_C = %d, 滤波器数 R = %d",
                matrix.shape[0], rank, matrix.shape[0] - rank)
    return NullspaceProjector(W, rank, "exact", tau_rel, None, evals)


def _pilot_rank(gram: GramLike, cfg: SketchConfig) -> int:
    """r_C 的初步估计：取前几帧的 Gram 子块求谱"""
    if cfg.rank is not None:
        return int(cfg.rank)
    if isinstance(gram, CalibGram):
        pilot = gram.leading_frames(cfg.pilot_frames or DEFAULT_PILOT_FRAMES)
        rank = estimate_rank(pilot, cfg.tau_rel).rank
        logger.info("试验帧 %d 估计 r_C = %d", pilot.frames, rank)
        return rank
    return estimate_rank(gram, cfg.tau_rel).rank


def sketched_projector(gram: GramLike, cfg: SketchConfig = None) -> NullspaceProjector:
    """
    草图 SVD 近似零空间投影

    Φ 为 s × |Λ|T 的复高斯矩阵（每个复元素方差 1/s），Y = Φ·CᴴC，
    在 Y 的右奇异子空间上做 Rayleigh–Ritz，取前 r_C 个 Ritz 向量 Ṽ，W = I − ṼṼᴴ；
    r_C 由 Ritz 值细化，草图饱和时 s 加倍重做

    Args:
        gram: Gram 矩阵
        cfg: 草图配置

    Returns:
        NullspaceProjector(method="sketched")
    """
    cfg = cfg or SketchConfig()
    matrix = _matrix(gram)
    n = matrix.shape[0]
    identity = np.eye(n, dtype=np.complex128)

    rank0 = _pilot_rank(gram, cfg)
    s = cfg.sketch_dim if cfg.sketch_dim is not None else int(np.ceil(cfg.multiplier * rank0))
    if rank0 == 0:
        logger.info("r_C = 0，全部为零空间")
        return NullspaceProjector(identity, 0, "sketched", cfg.tau_rel, s)
    if s <= rank0:
        raise ConfigurationError(f"草图维度 s={s} 必须大于 r_C={rank0}")
    # rank(CᴴC) 不超过 C 的行数，草图维度无需更大
    cap = min(n, gram.row_bound + 1) if isinstance(gram, CalibGram) else n
    s = min(s, cap)

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    while True:
        basis, ritz, rotation = _sketch_basis(matrix, s, rng)
        if ritz[0] <= 0:
            return NullspaceProjector(identity, 0, "sketched", cfg.tau_rel, s, ritz)
        refined = int(np.count_nonzero(ritz >= cfg.tau_rel * ritz[0]))
        # 草图饱和（所有 Ritz 值都在阈值以上）时说明 r_C 被低估
        if refined < basis.shape[1] or s >= cap:
            break
        logger.warning("草图维度 s=%d 不足（细化 r_C ≥ s），加倍后重新草图", s)
        s = min(2 * s, cap)

    V = basis @ rotation[:, :refined]
    W = identity - V @ V.conj().T
    logger.info("草图零空间: s = %d, 初估 r_C = %d, 细化 r_C = %d", s, rank0, refined)
    return NullspaceProjector(W, refined, "sketched", cfg.tau_rel, s, ritz)


def _sketch_basis(matrix: np.ndarray, s: int, rng: np.random.Generator):
    """
    Y = Φ·CᴴC 的右奇异子空间，再在该子空间上做 Rayleigh–Ritz

    Returns:
        (正交基 n×s, 降序 Ritz 值, Ritz 向量在基中的坐标)
    """
    n = matrix.shape[0]
    phi = (rng.standard_normal((s, n)) + 1j * rng.standard_normal((s, n))) / np.sqrt(2.0 * s)
    try:
        _, _, vh = np.linalg.svd(phi @ matrix, full_matrices=False)
        basis = vh.conj().T
        ritz, rotation = np.linalg.eigh(basis.conj().T @ matrix @ basis)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"草图 SVD 失败: {e}")
    return basis, ritz[::-1], rotation[:, ::-1]


def filter_annihilation_residual(W: NullspaceProjector, acs: Union[CalibGram, KtDataset],
                                 support=None) -> float:
    """
    滤波器湮灭残差 ‖C N‖_F / (‖C‖_F·√R)，用 trace(CᴴC·W) 计算，不显式构造 N

    Args:
        W: 零空间投影
        acs: CalibGram，或单线圈 ACS 数据（此时需要 support）
        support: 核支撑

    Returns:
        残差（SILP 成立时接近 0）
    """
    if isinstance(acs, KtDataset):
        if support is None:
            raise ValidationError("由 ACS 数据计算残差时必须给出核支撑")
        acs = build_gram(acs, support)
    matrix = _matrix(acs)
    if matrix.shape != W.W.shape:
        raise ValidationError(f"投影矩阵 {W.W.shape} 与 Gram {matrix.shape} 尺寸不一致")
    R = W.filter_count
    total = float(np.real(np.trace(matrix)))
    if R <= 0 or total <= 0:
        return 0.0
    leaked = max(float(np.real(np.sum(matrix * W.W.T))), 0.0)
    return float(np.sqrt(leaked / total / R))


def projector_distance(a: NullspaceProjector, b: NullspaceProjector) -> float:
    """相对 Frobenius 距离 ‖W_a − W_b‖_F / ‖W_b‖_F"""
    ref = np.linalg.norm(b.W)
    if ref == 0:
        return float(np.linalg.norm(a.W))
    return float(np.linalg.norm(a.W - b.W) / ref)
