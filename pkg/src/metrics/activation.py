"""
任务激活 t-score 图

逐体素对 task 帧与 rest 帧的幅度做 Welch 双样本 t 检验；
每个块边界之后丢弃前 2 帧过渡帧。正值表示 task > rest
"""

from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import stats

from src.data.types import DynamicImage, ImageStack
from src.utils.errors import ValidationError

DEFAULT_TRANSITION = 2
LABELS = ("task", "rest")


class TaskParadigm(BaseModel):
    """块设计：blocks 为 (起始帧, 结束帧, 标签)，帧序号从 0 开始、区间左闭右开，依次铺满 [0, T)"""

    frames: int = Field(..., ge=2)
    blocks: List[Tuple[int, int, str]]

    @model_validator(mode="after")
    def _check_tiling(self):
        position = 0
        for start, end, label in self.blocks:
            if label not in LABELS:
                raise ValueError(f"未知的块标签: {label}")
            if start != position or end <= start:
                raise ValueError(f"块 ({start}, {end}) 与前一块不连续或为空")
            position = end
        if position != self.frames:
            raise ValueError(f"块设计覆盖 {position} 帧，应为 {self.frames}")
        return self

    @classmethod
    def alternating(cls, frames: int, block: int, start_with: str = "rest") -> "TaskParadigm":
        """等长交替块"""
        if start_with not in LABELS:
            raise ValidationError(f"start_with 只能是 {LABELS}")
        if block < 1:
            raise ValidationError("块长度必须为正")
        other = "task" if start_with == "rest" else "rest"
        blocks = []
        for i, start in enumerate(range(0, frames, block)):
            blocks.append((start, min(start + block, frames), start_with if i % 2 == 0 else other))
        return cls(frames=frames, blocks=blocks)

    def frame_labels(self, transition: int = DEFAULT_TRANSITION) -> np.ndarray:
        """逐帧标签数组，过渡帧为空字符串"""
        labels = np.full(self.frames, "", dtype=object)
        for i, (start, end, label) in enumerate(self.blocks):
            skip = 0 if i == 0 else transition
            labels[min(start + skip, end): end] = label
        return labels


def tscore_map(series: DynamicImage, paradigm: TaskParadigm,
               transition: int = DEFAULT_TRANSITION) -> ImageStack:
    """
    Welch t 统计量图

    Args:
        series: 动态图像
        paradigm: 块设计
        transition: 块边界后丢弃的帧数

    Returns:
        单层 ImageStack；0/0 的体素记为 0
    """
    if series.frames != paradigm.frames:
        raise ValidationError(f"图像帧数 {series.frames} 与块设计 {paradigm.frames} 不一致")
    labels = paradigm.frame_labels(transition)
    task = labels == "task"
    rest = labels == "rest"
    if task.sum() < 2 or rest.sum() < 2:
        raise ValidationError("每种条件至少需要 2 帧")

    magnitude = np.abs(series.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        result = stats.ttest_ind(magnitude[..., task], magnitude[..., rest], axis=-1, equal_var=False)
    t = np.nan_to_num(np.asarray(result.statistic, dtype=float), nan=0.0, posinf=0.0, neginf=0.0)
    return ImageStack(series.grid, t, ("tscore",))


def activation_contrast(tmap: ImageStack, region: np.ndarray, support: np.ndarray = None) -> float:
    """区域内平均 t 值与区域外（限于 support）平均 t 值之比"""
    values = tmap.values[..., 0]
    region = np.asarray(region, dtype=bool)
    outside = ~region if support is None else (~region & np.asarray(support, dtype=bool))
    if not region.any() or not outside.any():
        raise ValidationError("激活区域或其外部为空")
    inside_mean = float(np.mean(values[region]))
    outside_mean = float(np.mean(np.abs(values[outside])))
    return inside_mean / outside_mean if outside_mean > 0 else float("inf")
