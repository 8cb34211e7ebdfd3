"""
空间 Gram 场 G(x)

[G(x)]_{t′,t} = Σ_{ℓ,ℓ′} W[(t,ℓ),(t′,ℓ′)] · e^{i2π(ℓ−ℓ′)·x}
差分偏移 ℓ−ℓ′ 用稀疏分配矩阵累加到格点上，再对每组 (t′,t) 做一次逆 FFT
"""

from dataclasses import dataclass
from typing import NamedTuple, Tuple, Union

import numpy as np
import scipy.fft
import scipy.sparse

from src.calib.kernel_support import KernelSupport
from src.data.types import Grid, NullspaceProjector
from src.utils.errors import ValidationError
from src.utils.fft import centered_coordinates, ifftc
from src.utils.log_manager import log_manager
from src.utils.parallel import chunk_ranges, map_chunks

logger = log_manager.get_logger(__name__)

DEFAULT_PAIR_CHUNK = 64


@dataclass(frozen=True)
class GramField:
    """
    逐体素的 T×T Hermitian 半正定矩阵，values[x, y, z, t′, t]

    bound 为全部特征值的上界（投影矩阵时等于 |Λ|）
    """

    values: np.ndarray
    grid: Grid
    bound: float

    def __post_init__(self):
        if self.values.shape[:3] != self.grid.dims or self.values.shape[3] != self.values.shape[4]:
            raise ValidationError(f"Gram 场尺寸 {self.values.shape} 与网格 {self.grid.dims} 不符")

    @property
    def frames(self) -> int:
        return self.values.shape[3]

    def matrices(self) -> np.ndarray:
        """按体素展平为 (N, T, T)"""
        return self.values.reshape(self.grid.N, self.frames, self.frames)


class FilterResponse(NamedTuple):
    """单个体素的时间滤波器（G(x) 的行）及其时间频谱"""

    filters: np.ndarray
    spectra: np.ndarray


def _unpack(W: Union[NullspaceProjector, np.ndarray], support: KernelSupport) -> Tuple[np.ndarray, int, float]:
    """返回 W 矩阵、帧数 T 与 W 的谱范数上界"""
    if isinstance(W, NullspaceProjector):
        matrix, norm = W.W, 1.0
    else:
        matrix = np.asarray(W, dtype=np.complex128)
        norm = float(np.max(np.abs(np.linalg.eigvalsh(matrix)))) if matrix.size else 0.0
    n = support.size
    if matrix.shape[0] % n:
        raise ValidationError(f"W 的尺寸 {matrix.shape[0]} 不是 |Λ|={n} 的整数倍")
    return matrix, matrix.shape[0] // n, norm


def _check_grid(eval_grid: Grid, support: KernelSupport):
    need = 2 * support.radius + 1
    spatial = eval_grid.dims[:support.D]
    if any(n < need for n in spatial):
        raise ValidationError(f"求值网格 {eval_grid.dims} 小于差分格点所需的 {need}")


def _assignment_matrix(support: KernelSupport, eval_grid: Grid) -> scipy.sparse.csr_matrix:
    """偏移对 (i, j) → 格点上 ℓ_i − ℓ_j 的居中位置（按网格周期取模）"""
    dims = np.array(eval_grid.dims)
    diffs = support.difference_offsets().reshape(-1, 3)
    centered = (diffs + dims // 2) % dims
    rows = np.ravel_multi_index(centered.T, eval_grid.dims)
    cols = np.arange(diffs.shape[0])
    data = np.ones(diffs.shape[0])
    return scipy.sparse.csr_matrix((data, (rows, cols)), shape=(eval_grid.N, diffs.shape[0]))


def compute_gram_field(W: Union[NullspaceProjector, np.ndarray], support: KernelSupport,
                       eval_grid: Grid, chunk: int = DEFAULT_PAIR_CHUNK,
                       workers: int = None) -> GramField:
    """
    FFT 方法计算 Gram 场

    Args:
        W: 零空间投影（或任意 Hermitian 矩阵）
        support: 核支撑
        eval_grid: 求值网格（可比目标网格粗）
        chunk: 每次逆 FFT 处理的 (t′,t) 对数
        workers: 线程数

    Returns:
        GramField
    """
    _check_grid(eval_grid, support)
    matrix, T, norm = _unpack(W, support)
    n = support.size

    # blocks[(i,j), t′·T + t] = W[(t,ℓ_i),(t′,ℓ_j)]
    blocks = matrix.reshape(T, n, T, n).transpose(1, 3, 2, 0).reshape(n * n, T * T)
    lattice = _assignment_matrix(support, eval_grid) @ blocks
    scale = np.sqrt(eval_grid.N)

    out = np.empty((eval_grid.N, T * T), dtype=np.complex128)

    def _evaluate(cols: slice):
        part = lattice[:, cols].reshape(eval_grid.dims + (-1,))
        out[:, cols] = (scale * ifftc(part)).reshape(eval_grid.N, -1)

    map_chunks(_evaluate, chunk_ranges(T * T, chunk), workers)

    values = out.reshape(eval_grid.dims + (T, T))
    values = 0.5 * (values + np.conj(np.swapaxes(values, 3, 4)))
    logger.debug("Gram 场: 网格 %s, T=%d", eval_grid.dims, T)
    return GramField(values, eval_grid, float(n) * norm)


def gram_field_direct(W: Union[NullspaceProjector, np.ndarray], support: KernelSupport,
                      eval_grid: Grid) -> GramField:
    """
    直接构造的 Gram 场（测试基准）：分解 W = N Nᴴ，逐滤波器做 DFT 得到 h_r(x,t)，
    再求 H(x)ᴴ H(x)。W 需为半正定
    """
    _check_grid(eval_grid, support)
    matrix, T, norm = _unpack(W, support)
    n = support.size
    evals, evecs = np.linalg.eigh(matrix)
    keep = evals > 1e-12 * max(float(evals.max()), 1e-300)
    factor = evecs[:, keep] * np.sqrt(evals[keep])

    axes = [centered_coordinates(d) / d for d in eval_grid.dims]
    positions = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    phase = np.exp(2j * np.pi * positions @ support.offsets.T)
    H = np.einsum("pl,tlr->prt", phase, factor.reshape(T, n, -1))
    G = np.einsum("prs,prt->pst", np.conj(H), H)
    return GramField(G.reshape(eval_grid.dims + (T, T)), eval_grid, float(n) * norm)


def voxel_filter_response(field: GramField, voxel: Tuple[int, ...]) -> FilterResponse:
    """
    单个体素的时间滤波器视图

    Args:
        field: Gram 场
        voxel: 体素下标 (x, y[, z])

    Returns:
        FilterResponse（G(x) 的各行与其沿时间轴的 DFT）
    """
    index = tuple(int(v) for v in voxel) + (0,) * (3 - len(voxel))
    if any(not 0 <= i < n for i, n in zip(index, field.grid.dims)):
        raise ValidationError(f"体素 {voxel} 超出网格 {field.grid.dims}")
    filters = np.array(field.values[index])
    return FilterResponse(filters, scipy.fft.fft(filters, axis=1))
