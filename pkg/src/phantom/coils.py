"""
合成线圈灵敏度
平滑的复高斯包络，支撑内逐体素平方和归一化为 1
"""

from typing import Optional

import numpy as np

from src.data.types import Grid, SensitivityMaps
from src.utils.errors import ValidationError


def generate_sensitivities(grid: Grid, Q: int, seed: int,
                           support: Optional[np.ndarray] = None) -> SensitivityMaps:
    """
    生成线圈灵敏度

    Args:
        grid: 网格
        Q: 线圈数
        seed: 随机种子（决定线圈相位与位置扰动）
        support: 支撑掩码，默认整个视野

    Returns:
        SensitivityMaps，支撑内 Σ_q |c_q(x)|² = 1
    """
    if Q < 1:
        raise ValidationError(f"线圈数 Q={Q} 必须为正")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    coords = np.meshgrid(*[(np.arange(n) - n // 2) / max(n / 2.0, 1.0) for n in grid.dims],
                         indexing="ij")
    width = 0.9

    values = np.zeros(grid.dims + (Q,), dtype=np.complex128)
    for q in range(Q):
        angle = 2 * np.pi * q / Q + rng.uniform(-0.2, 0.2)
        center = [1.1 * np.cos(angle), 1.1 * np.sin(angle), 0.0]
        if grid.D == 3:
            center[2] = rng.uniform(-0.5, 0.5)
        r2 = sum((c - c0) ** 2 for c, c0 in zip(coords, center))
        envelope = np.exp(-r2 / (2 * width ** 2))
        slope = rng.uniform(-0.5, 0.5, size=3)
        phase = rng.uniform(-np.pi, np.pi) + sum(s * c for s, c in zip(slope, coords))
        values[..., q] = envelope * np.exp(1j * phase)

    values /= np.sqrt(np.sum(np.abs(values) ** 2, axis=-1, keepdims=True))
    if support is not None:
        values *= np.asarray(support, dtype=bool)[..., None]
    return SensitivityMaps(grid, values)
