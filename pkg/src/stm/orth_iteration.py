"""
时空图提取

对 (σI − G(x))/σ 做正交迭代（所有体素同时进行），取最小 L 个特征值对应的不变子空间；
未收敛的体素退回逐体素特征分解
"""

from typing import Optional

import numpy as np

from src.data.types import StmSet
from src.stm.gram_field import GramField
from src.utils.errors import ValidationError
from src.utils.log_manager import log_manager
from src.utils.parallel import chunk_ranges, map_chunks

logger = log_manager.get_logger(__name__)

DEFAULT_ITERS = 30
DEFAULT_TOL = 1e-8
DEFAULT_SQUARINGS = 4
DEFAULT_OVERSAMPLE = 2
VOXEL_CHUNK = 512


def _hermitian(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def _power_operator(G: np.ndarray, sigma: float, squarings: int) -> np.ndarray:
    """((σI − G)/σ)^(2^squarings)，每次平方后按体素归一化防止下溢"""
    T = G.shape[-1]
    P = (sigma * np.eye(T) - G) / sigma
    for _ in range(squarings):
        P = P @ P
        scale = np.linalg.norm(P, axis=(1, 2), keepdims=True)
        P = P / np.where(scale > 0, scale, 1.0)
    return P


def _rayleigh_ritz(G: np.ndarray, Q: np.ndarray):
    """在子空间 Q 上对 G 做 Rayleigh–Ritz，Ritz 值升序"""
    B = _hermitian(Q) @ G @ Q
    w, U = np.linalg.eigh(0.5 * (B + _hermitian(B)))
    return w, Q @ U


def _subspace_change(old: np.ndarray, new: np.ndarray) -> np.ndarray:
    """逐体素 ‖Q_old − Q_new Q_newᴴ Q_old‖_F（子空间夹角的正弦）"""
    residual = old - new @ (_hermitian(new) @ old)
    return np.linalg.norm(residual, axis=(1, 2))


def _align_phases(maps: np.ndarray) -> np.ndarray:
    """
    逐分量对齐体素间的全局相位：使 ⟨r_l, s_l(x)⟩ 为正实数，
    r_l 为 Σ_x s_l s_lᴴ 的主特征向量
    """
    out = maps.copy()
    for l in range(maps.shape[2]):
        q = maps[:, :, l]
        scatter = q.T @ np.conj(q)
        _, vecs = np.linalg.eigh(scatter)
        ref = vecs[:, -1]
        inner = q @ np.conj(ref)
        magnitude = np.abs(inner)
        phase = np.where(magnitude > 0, np.conj(inner) / np.where(magnitude > 0, magnitude, 1.0), 1.0)
        out[:, :, l] = q * phase[:, None]
    return out


def extract_maps(field: GramField, L: Optional[int] = None, threshold: Optional[float] = None,
                 iters: int = DEFAULT_ITERS, tol: float = DEFAULT_TOL,
                 squarings: int = DEFAULT_SQUARINGS, oversample: int = DEFAULT_OVERSAMPLE,
                 seed: int = 0, workers: int = None) -> StmSet:
    """
    提取逐体素零空间基（时空图）

    Args:
        field: Gram 场
        L: 全局分量数；仅给出 threshold 时取 T
        threshold: 逐体素 L(x) 的阈值（相对于 field.bound 的特征值）
        iters: 最大迭代次数
        tol: 收敛阈值（相邻两次子空间夹角）
        squarings: 迭代算子的平方次数（加速收敛）
        oversample: 额外迭代的子空间维数
        seed: 初始随机子空间种子
        workers: 线程数

    Returns:
        StmSet，分量按特征值升序排列（第 1 个分量最接近零空间）
    """
    T = field.frames
    if L is None:
        if threshold is None:
            raise ValidationError("必须给出分量数 L 或阈值")
        L = T
    if not 1 <= L <= T:
        raise ValidationError(f"分量数 L={L} 必须位于 [1, T={T}]")
    if iters < 0 or squarings < 0:
        raise ValidationError("迭代次数与平方次数不能为负")

    G_all = field.matrices()
    V = G_all.shape[0]
    k = min(T, L + max(0, int(oversample)))
    sigma = field.bound if field.bound > 0 else 1.0

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    start = rng.standard_normal((V, T, k)) + 1j * rng.standard_normal((V, T, k))

    maps = np.empty((V, T, L), dtype=np.complex128)
    eigvals = np.empty((V, L))
    fallback = []

    def _solve(part: slice):
        G = G_all[part]
        P = _power_operator(G, sigma, squarings)
        Q = np.linalg.qr(start[part])[0]
        w = None
        change = np.full(G.shape[0], np.inf)
        for _ in range(iters):
            Q_new = np.linalg.qr(P @ Q)[0]
            w, Q_new = _rayleigh_ritz(G, Q_new)
            change = _subspace_change(Q[:, :, :L], Q_new[:, :, :L])
            Q = Q_new
            if np.all(change < tol):
                break
        maps[part] = Q[:, :, :L]
        if w is not None:
            eigvals[part] = w[:, :L]

        bad = np.nonzero(~(change < tol))[0]
        if bad.size:
            fw, fv = np.linalg.eigh(G[bad])
            maps[part][bad] = fv[:, :, :L]
            eigvals[part][bad] = fw[:, :L]
            fallback.append(bad.size)

    map_chunks(_solve, chunk_ranges(V, VOXEL_CHUNK), workers)

    if fallback:
        logger.warning("正交迭代在 %d 个体素未收敛，已改用逐体素特征分解", sum(fallback))
    maps = _align_phases(maps)

    local = None
    if threshold is not None:
        below = np.sum(eigvals / sigma < threshold, axis=1)
        local = np.clip(below, 1, L).reshape(field.grid.dims)

    grid_shape = field.grid.dims
    return StmSet(
        field.grid,
        np.swapaxes(maps, 1, 2).reshape(grid_shape + (L, T)),
        eigvals.reshape(grid_shape + (L,)),
        local,
    )
