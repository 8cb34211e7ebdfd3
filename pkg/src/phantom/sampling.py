"""
回顾性欠采样模板
中心 ACS 区域 + 每帧平移的等间距相位编码线，读出方向全采样
"""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.data.types import Grid, SamplingMask
from src.utils.errors import ValidationError
from src.utils.fft import center_slices
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)


class MaskSpec(BaseModel):
    """
    欠采样模板参数，列表按相位编码轴 (k_y[, k_z]) 给出
    """

    acs: List[int] = Field(..., min_length=1, max_length=2)
    extra_lines: List[int] = Field(default_factory=lambda: [0])
    stride: Optional[List[int]] = None

    @model_validator(mode="after")
    def _check_lengths(self):
        if len(self.extra_lines) != len(self.acs):
            raise ValueError("extra_lines 与 acs 长度必须一致")
        if self.stride is not None and len(self.stride) != len(self.acs):
            raise ValueError("stride 与 acs 长度必须一致")
        if any(n < 1 for n in self.acs) or any(n < 0 for n in self.extra_lines):
            raise ValueError("ACS 尺寸必须为正，附加线数不能为负")
        return self


def _line_positions(extent: int, acs_range: tuple, n_lines: int, stride: int, t: int) -> np.ndarray:
    """
    计算第 t 帧的附加相位编码线位置

    附加线在 ACS 以外的位置中等间距分布，并按 t·stride 在这些位置上循环平移

    Args:
        extent: 轴长度
        acs_range: ACS 半开区间
        n_lines: 附加线数
        stride: 每帧平移步长
        t: 帧序号
    """
    outside = np.setdiff1d(np.arange(extent), np.arange(*acs_range))
    if n_lines == 0 or outside.size == 0:
        return np.zeros(0, dtype=int)
    n_lines = min(n_lines, outside.size)
    base = np.floor(np.arange(n_lines) * outside.size / n_lines).astype(int)
    return outside[(base + t * stride) % outside.size]


def shift_period(extent: int, acs: int, n_lines: int) -> int:
    """每个位置至少被采样一次所需的帧数（步长为 1 时）"""
    if n_lines == 0:
        return 0
    return int(np.ceil((extent - acs) / n_lines))


def generate_mask(grid: Grid, frames: int, spec: MaskSpec) -> SamplingMask:
    """
    生成欠采样模板

    三维约定：k_y 附加线覆盖全部 (k_x, k_z)，k_z 附加线覆盖全部 (k_x, k_y)，与 ACS 重叠只计一次

    Args:
        grid: 网格
        frames: 帧数 T
        spec: 模板参数

    Returns:
        SamplingMask
    """
    pe_axes = [1] if grid.D == 2 else [1, 2]
    if len(spec.acs) != len(pe_axes):
        raise ValidationError(f"{grid.D}D 网格需要 {len(pe_axes)} 个相位编码轴参数")
    acs_shape = [grid.dims[0]] + list(spec.acs) + ([1] if grid.D == 2 else [])
    if any(a > n for a, n in zip(acs_shape, grid.dims)):
        raise ValidationError(f"ACS 尺寸 {acs_shape} 超出网格 {grid.dims}")

    slices = center_slices(grid.dims, acs_shape)
    acs_box = tuple((s.start, s.stop) for s in slices)
    stride = spec.stride or [1] * len(pe_axes)

    flags = np.zeros(grid.dims + (frames,), dtype=bool)
    flags[slices] = True
    for t in range(frames):
        for i, axis in enumerate(pe_axes):
            lines = _line_positions(grid.dims[axis], acs_box[axis], spec.extra_lines[i], stride[i], t)
            index = [slice(None)] * 3
            index[axis] = lines
            frame = flags[..., t]
            frame[tuple(index)] = True

    mask = SamplingMask(grid, flags, acs_box)
    periods = [shift_period(grid.dims[a], spec.acs[i], spec.extra_lines[i]) for i, a in enumerate(pe_axes)]
    logger.info("欠采样模板: R = %.4f, 平移周期 %s 帧", mask.acceleration, periods)
    return mask
