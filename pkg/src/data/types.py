"""
核心数据模型
所有类型构造后只读，可在并行任务之间安全共享
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.utils.errors import ValidationError

Box = Tuple[Tuple[int, int], Tuple[int, int], Tuple[int, int]]


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    """复制为指定类型并设为只读"""
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid:
    """笛卡尔网格 (N_x, N_y, N_z)，二维数据 N_z = 1"""

    dims: Tuple[int, int, int]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) == 2:
            dims = dims + (1,)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValidationError(f"网格尺寸必须为正整数: {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def D(self) -> int:
        return 3 if self.dims[2] > 1 else 2

    @property
    def N(self) -> int:
        return int(np.prod(self.dims))

    def coarsen(self, factor: int) -> "Grid":
        """按因子降采样（二维时 z 轴不变），每轴至少保留 1 个点"""
        nz = self.dims[2] if self.D == 2 else max(1, int(round(self.dims[2] / factor)))
        return Grid((max(1, int(round(self.dims[0] / factor))),
                     max(1, int(round(self.dims[1] / factor))), nz))


@dataclass(frozen=True)
class SamplingMask:
    """采样模板 flags[k_x, k_y, k_z, t]，acs_box 为每轴半开区间，所有帧相同"""

    grid: Grid
    flags: np.ndarray
    acs_box: Box

    def __post_init__(self):
        flags = np.asarray(self.flags)
        if flags.dtype != np.bool_:
            if not np.all(np.isin(flags, (0, 1))):
                raise ValidationError("采样模板只能包含 0/1")
        flags = _frozen(flags, np.bool_)
        if flags.ndim != 4 or flags.shape[:3] != self.grid.dims:
            raise ValidationError(f"采样模板尺寸 {flags.shape} 与网格 {self.grid.dims} 不符")
        box = tuple((int(a), int(b)) for a, b in self.acs_box)
        for (start, stop), n in zip(box, self.grid.dims):
            if not 0 <= start < stop <= n:
                raise ValidationError(f"ACS区域 {box} 超出网格 {self.grid.dims}")
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "acs_box", box)
        if not np.all(flags[self.acs_slices]):
            raise ValidationError("ACS区域必须在每一帧都被完整采样")

    @property
    def frames(self) -> int:
        return self.flags.shape[3]

    @property
    def acs_slices(self) -> Tuple[slice, slice, slice]:
        return tuple(slice(a, b) for a, b in self.acs_box)

    @property
    def acs_shape(self) -> Tuple[int, int, int]:
        return tuple(b - a for a, b in self.acs_box)

    def per_frame_counts(self) -> np.ndarray:
        """每帧采样点数 M(t)"""
        return self.flags.reshape(-1, self.frames).sum(axis=0)

    @property
    def acceleration(self) -> float:
        """加速因子 R = N·T / Σ_t M(t)"""
        return self.grid.N * self.frames / float(self.per_frame_counts().sum())


@dataclass(frozen=True)
class KtDataset:
    """(k,t)-space 数据 samples[k_x, k_y, k_z, q, t]"""

    grid: Grid
    samples: np.ndarray
    mask: SamplingMask

    def __post_init__(self):
        samples = _frozen(self.samples, np.complex128)
        if samples.ndim != 5 or samples.shape[:3] != self.grid.dims:
            raise ValidationError(f"数据尺寸 {samples.shape} 与网格 {self.grid.dims} 不符")
        if samples.shape[4] != self.mask.frames or self.mask.grid != self.grid:
            raise ValidationError("数据与采样模板的帧数或网格不一致")
        off_mask = ~self.mask.flags[:, :, :, None, :]
        if np.any(np.broadcast_to(off_mask, samples.shape) & (samples != 0)):
            raise ValidationError("未采样位置的数据必须为零")
        object.__setattr__(self, "samples", samples)

    @property
    def coils(self) -> int:
        return self.samples.shape[3]

    @property
    def frames(self) -> int:
        return self.samples.shape[4]


@dataclass(frozen=True)
class DynamicImage:
    """动态图像 values[x, y, z, t]"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.complex128)
        if values.ndim != 4 or values.shape[:3] != self.grid.dims:
            raise ValidationError(f"图像尺寸 {values.shape} 与网格 {self.grid.dims} 不符")
        if not np.all(np.isfinite(values)):
            raise ValidationError("动态图像包含非有限值")
        object.__setattr__(self, "values", values)

    @property
    def frames(self) -> int:
        return self.values.shape[3]


@dataclass(frozen=True)
class SensitivityMaps:
    """线圈灵敏度 values[x, y, z, q]"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.complex128)
        if values.ndim != 4 or values.shape[:3] != self.grid.dims:
            raise ValidationError(f"灵敏度尺寸 {values.shape} 与网格 {self.grid.dims} 不符")
        if not np.all(np.isfinite(values)):
            raise ValidationError("灵敏度包含非有限值")
        object.__setattr__(self, "values", values)

    @property
    def coils(self) -> int:
        return self.values.shape[3]

    def support(self) -> np.ndarray:
        """非零线圈向量所在体素"""
        return np.any(self.values != 0, axis=3)


@dataclass(frozen=True)
class RoiMask:
    """感兴趣区域 flags[x, y, z]"""

    grid: Grid
    flags: np.ndarray

    def __post_init__(self):
        flags = _frozen(self.flags, np.bool_)
        if flags.shape != self.grid.dims:
            raise ValidationError(f"ROI尺寸 {flags.shape} 与网格 {self.grid.dims} 不符")
        object.__setattr__(self, "flags", flags)

    @classmethod
    def full(cls, grid: Grid) -> "RoiMask":
        return cls(grid, np.ones(grid.dims, dtype=bool))

    def require_nonempty(self):
        if not np.any(self.flags):
            raise ValidationError("ROI 至少需要一个体素")


@dataclass(frozen=True)
class StmSet:
    """时空图 maps[x, y, z, l, t]，每个体素的 L 个时间向量正交归一"""

    grid: Grid
    maps: np.ndarray
    eigvals: np.ndarray
    local_components: Optional[np.ndarray] = None

    def __post_init__(self):
        maps = _frozen(self.maps, np.complex128)
        if maps.ndim != 5 or maps.shape[:3] != self.grid.dims or maps.shape[3] < 1:
            raise ValidationError(f"时空图尺寸 {maps.shape} 与网格 {self.grid.dims} 不符")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "eigvals", _frozen(self.eigvals, np.float64))
        if self.local_components is not None:
            object.__setattr__(self, "local_components", _frozen(self.local_components, np.int32))

    @property
    def components(self) -> int:
        return self.maps.shape[3]

    @property
    def frames(self) -> int:
        return self.maps.shape[4]

    def truncate(self, L: int) -> "StmSet":
        """保留前 L 个分量（按特征值升序，嵌套子空间）"""
        if not 1 <= L <= self.components:
            raise ValidationError(f"分量数 L={L} 超出 [1, {self.components}]")
        local = None if self.local_components is None else np.minimum(self.local_components, L)
        return StmSet(self.grid, self.maps[:, :, :, :L], self.eigvals[..., :L], local)


@dataclass(frozen=True)
class NullspaceProjector:
    """零空间投影矩阵 W = N Nᴴ 及秩信息"""

    W: np.ndarray
    rank_estimate: int
    method: str
    threshold: float
    sketch_dim: Optional[int] = None
    spectrum: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        W = _frozen(self.W, np.complex128)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValidationError(f"投影矩阵必须为方阵: {W.shape}")
        if self.method not in ("exact", "sketched"):
            raise ValidationError(f"未知的零空间方法: {self.method}")
        object.__setattr__(self, "W", W)

    @property
    def filter_count(self) -> int:
        """滤波器个数 R = |Λ|T − r_C"""
        return self.W.shape[0] - int(self.rank_estimate)


@dataclass(frozen=True)
class ImageStack:
    """实数图像堆栈 values[x, y, z, k]，用于特征值图、t-score 图"""

    grid: Grid
    values: np.ndarray
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 3:
            values = values[..., None]
        values = _frozen(values, np.float64)
        if values.shape[:3] != self.grid.dims:
            raise ValidationError(f"图像堆栈尺寸 {values.shape} 与网格 {self.grid.dims} 不符")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))
