"""
核支撑 Λ：椭球（‖ℓ‖₂ ≤ Rad）或矩形（‖ℓ‖_∞ ≤ Rad）整数偏移集合
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from src.utils.errors import ValidationError

SHAPES = ("ellipsoid", "rectangle")


@dataclass(frozen=True)
class KernelSupport:
    """核支撑，offsets 为按字典序排序的 (|Λ|, 3) 整数数组（二维时 z 分量为 0）"""

    shape: str
    radius: int
    D: int
    offsets: np.ndarray

    @property
    def size(self) -> int:
        return self.offsets.shape[0]

    def difference_offsets(self) -> np.ndarray:
        """所有偏移对的差 ℓ − ℓ′，形状 (|Λ|, |Λ|, 3)"""
        return self.offsets[:, None, :] - self.offsets[None, :, :]


def build_support(shape: str, Rad: int, D: int) -> KernelSupport:
    """
    枚举核支撑偏移

    Args:
        shape: ellipsoid 或 rectangle
        Rad: 半径
        D: 空间维度 2 或 3

    Returns:
        KernelSupport
    """
    if shape not in SHAPES:
        raise ValidationError(f"未知的核形状: {shape}")
    if Rad < 1:
        raise ValidationError(f"核半径 Rad={Rad} 必须不小于 1")
    if D not in (2, 3):
        raise ValidationError(f"空间维度 D={D} 必须为 2 或 3")

    rng = range(-Rad, Rad + 1)
    z_range = rng if D == 3 else (0,)
    offsets = []
    for ell in product(rng, rng, z_range):
        if shape == "ellipsoid" and sum(v * v for v in ell) > Rad * Rad:
            continue
        offsets.append(ell)
    # product 按字典序生成，偏移天然有序且唯一
    return KernelSupport(shape, int(Rad), int(D), np.array(offsets, dtype=np.int64))
