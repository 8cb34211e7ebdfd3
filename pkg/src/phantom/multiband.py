"""
多频带动态体模生成器

ρ(x,t) = a_0(x)·e^{iφ_0(x)} + Σ_{j≥1} a_j(x)·exp(i2π f_j(x) t + i φ_j(x)) + 噪声
第 0 个频带为静态分量，其余频带的幅度按 dynamic_amplitude 缩放，频率不超过 max_frequency；
所有参数场经高斯低通滤波，在空间上平滑变化
"""

from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.ndimage import gaussian_filter

from src.data.types import DynamicImage, Grid, RoiMask
from src.utils.errors import ValidationError
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

GATE_WIDTH = 0.15
MAX_REDRAWS = 20


class TaskActivation(BaseModel):
    """方块激活：在平滑区域内按 rest/task 交替叠加幅度"""

    center: Tuple[float, float, float] = (0.25, 0.0, 0.0)
    radius: float = Field(4.0, gt=0)
    amplitude: float = Field(0.5, ge=0)
    block_length: int = Field(20, ge=1)
    start_with: str = "rest"

    @field_validator("start_with")
    @classmethod
    def _check_label(cls, value):
        if value not in ("task", "rest"):
            raise ValueError("start_with 只能是 task 或 rest")
        return value

    def boxcar(self, frames: int) -> np.ndarray:
        """任务帧为 1，休息帧为 0"""
        block_index = np.arange(frames) // self.block_length
        task_first = self.start_with == "task"
        return ((block_index % 2 == 0) == task_first).astype(float)


class MultibandSpec(BaseModel):
    """多频带体模参数（JSON 字段与此一致）"""

    dims: Tuple[int, ...]
    frames: int = Field(..., ge=2)
    j_max: int = Field(4, ge=1)
    min_bands: int = Field(1, ge=1)
    smoothness: float = Field(4.0, gt=0)
    noise_sigma: float = Field(0.0, ge=0)
    exact_mode: bool = True
    frequency_drift: float = Field(0.0, ge=0, lt=0.5)
    dynamic_amplitude: float = Field(0.35, ge=0)
    max_frequency: float = Field(0.25, gt=0, le=0.5)
    base_frequencies: Optional[List[float]] = None
    object_radius: float = Field(0.8, gt=0, le=1.0)
    task: Optional[TaskActivation] = None

    @model_validator(mode="after")
    def _check_consistency(self):
        Grid(self.dims)
        if self.frames < 2 * self.j_max:
            raise ValueError(f"帧数 T={self.frames} 必须不小于 2·J_max={2 * self.j_max}")
        if self.min_bands > self.j_max:
            raise ValueError("min_bands 不能大于 j_max")
        if self.base_frequencies is not None:
            if len(self.base_frequencies) != self.j_max:
                raise ValueError("base_frequencies 长度必须等于 j_max")
            if any(not -0.5 <= f < 0.5 for f in self.base_frequencies):
                raise ValueError("频率必须位于 [-1/2, 1/2)")
            if self.base_frequencies[0] != 0:
                raise ValueError("第 0 个频带是静态分量，频率必须为 0")
        return self

    @property
    def grid(self) -> Grid:
        return Grid(self.dims)


class PhantomTruth(NamedTuple):
    """体模及其真值参数"""

    image: DynamicImage
    band_count: np.ndarray
    frequencies: np.ndarray
    amplitudes: np.ndarray
    roi: RoiMask
    activation: Optional[np.ndarray]


# ==================== 随机参数场 ====================

def _streams(seed: int, count: int) -> List[np.random.Generator]:
    """基于计数器的 Philox 随机流，每个参数场一条，与并行方式无关"""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def _smooth_field(rng: np.random.Generator, grid: Grid, sigma: float) -> np.ndarray:
    """低通滤波的随机场，线性缩放到 [-1, 1]"""
    noise = rng.standard_normal(grid.dims)
    sigmas = (sigma, sigma, sigma if grid.D == 3 else 0.0)
    field = gaussian_filter(noise, sigmas, mode="wrap")
    span = field.max() - field.min()
    if span == 0:
        return np.zeros(grid.dims)
    return 2.0 * (field - field.min()) / span - 1.0


def _object_support(grid: Grid, radius: float) -> np.ndarray:
    """椭圆（椭球）物体支撑"""
    axes = []
    for n in grid.dims:
        half = max(n / 2.0, 1.0)
        axes.append((np.arange(n) - n // 2) / half)
    xx, yy, zz = np.meshgrid(*axes, indexing="ij")
    r2 = xx ** 2 + yy ** 2 + (zz ** 2 if grid.D == 3 else 0.0)
    return r2 <= radius ** 2


def _circular_distance(a, b):
    """频率之间的循环距离"""
    diff = np.abs(np.asarray(a) - np.asarray(b)) % 1.0
    return np.minimum(diff, 1.0 - diff)


def _required_gap(spec: MultibandSpec, i: int, j: int) -> float:
    """两个频带中心的最小间距：各自的漂移量之和再加一个 DFT 格点（静态频带不漂移）"""
    drift = spec.frequency_drift
    return (drift if i > 0 else 0.0) + (drift if j > 0 else 0.0) + 1.0 / spec.frames


def _well_separated(spec: MultibandSpec, freqs: np.ndarray) -> bool:
    return all(
        _circular_distance(freqs[i], freqs[j]) >= _required_gap(spec, i, j)
        for i in range(len(freqs)) for j in range(i + 1, len(freqs))
    )


def _candidate_bins(spec: MultibandSpec) -> np.ndarray:
    """|b| ≤ max_frequency·T 的非零 DFT 格点"""
    T = spec.frames
    bins = np.arange(-(T // 2), T - T // 2)
    return bins[(bins != 0) & (np.abs(bins) <= spec.max_frequency * T + 1e-9)]


def _draw_base_frequencies(spec: MultibandSpec, rng: np.random.Generator) -> np.ndarray:
    """
    选择各频带的中心频率：逐个在与已选频带间距足够的候选格点中抽取，无解时整体重抽

    Returns:
        长度 J_max 的频率数组（第 0 个频带固定在 0，即静态分量）
    """
    T = spec.frames
    if spec.base_frequencies is not None:
        freqs = np.asarray(spec.base_frequencies, dtype=float)
        if spec.exact_mode:
            freqs = np.round(freqs * T) / T
        if _well_separated(spec, freqs):
            return freqs
        logger.warning("给定的中心频率间距不足，重新抽取")

    bins = _candidate_bins(spec)
    if len(bins) < spec.j_max - 1:
        raise ValidationError(f"max_frequency={spec.max_frequency} 内只有 {len(bins)} 个非零格点，"
                              f"不足以放下 {spec.j_max - 1} 个动态频带")
    for attempt in range(MAX_REDRAWS):
        candidates = bins / T
        if not spec.exact_mode:
            candidates = candidates + rng.uniform(-0.5, 0.5, size=candidates.shape) / T
        freqs = [0.0]
        for j in range(1, spec.j_max):
            feasible = [f for f in candidates
                        if all(_circular_distance(f, g) >= _required_gap(spec, i, j) for i, g in enumerate(freqs))]
            if not feasible:
                break
            freqs.append(float(rng.choice(feasible)))
        if len(freqs) == spec.j_max:
            if attempt > 0:
                logger.warning("频率碰撞，已抖动重新生成 %d 次", attempt)
            return np.asarray(freqs)
    raise ValidationError("无法生成互不碰撞的频带中心，请减小 frequency_drift 或 j_max，或增大 max_frequency")


# ==================== 体模生成 ====================

def generate_phantom_truth(spec: MultibandSpec, seed: int) -> PhantomTruth:
    """
    生成多频带体模及真值参数

    Args:
        spec: 体模参数
        seed: 随机种子

    Returns:
        PhantomTruth
    """
    grid = spec.grid
    T, J = spec.frames, spec.j_max
    rng_freq, rng_level, rng_texture, rng_noise, _, *slot_rngs = _streams(seed, 5 + 3 * J)

    support = _object_support(grid, spec.object_radius)
    texture = 0.7 + 0.3 * _smooth_field(rng_texture, grid, spec.smoothness)
    magnitude = support * texture

    # 平滑的频带计数场与门控
    level = spec.min_bands + (J - spec.min_bands) * 0.5 * (
        _smooth_field(rng_level, grid, 2 * spec.smoothness) + 1.0
    )
    base = _draw_base_frequencies(spec, rng_freq)

    t = np.arange(T)
    values = np.zeros(grid.dims + (T,), dtype=np.complex128)
    frequencies = np.zeros((J,) + grid.dims)
    amplitudes = np.zeros((J,) + grid.dims)
    band_count = np.zeros(grid.dims, dtype=np.int32)
    static = None
    for j in range(J):
        rng_amp, rng_phase, rng_drift = slot_rngs[3 * j: 3 * j + 3]
        gate = 0.5 * (1.0 + np.tanh((level - j - 0.5) / GATE_WIDTH))
        band_count += (gate > 0.5).astype(np.int32)
        scale = 1.0 if j == 0 else spec.dynamic_amplitude
        amp = scale * magnitude * (0.75 + 0.25 * _smooth_field(rng_amp, grid, spec.smoothness)) * gate
        phase = np.pi * _smooth_field(rng_phase, grid, spec.smoothness)
        if j == 0:
            freq = np.zeros(grid.dims)
            static = amp * np.exp(1j * phase)
        else:
            freq = base[j] + spec.frequency_drift * _smooth_field(rng_drift, grid, spec.smoothness)
            if spec.exact_mode:
                freq = np.round(freq * T) / T
        frequencies[j] = freq
        amplitudes[j] = amp
        values += (amp * np.exp(1j * phase))[..., None] * np.exp(2j * np.pi * freq[..., None] * t)

    # 激活按比例调制静态分量
    activation = None
    if spec.task is not None:
        activation = _activation_region(grid, spec.task)
        boxcar = spec.task.boxcar(T)
        values += (spec.task.amplitude * activation * static)[..., None] * boxcar

    if spec.noise_sigma > 0:
        noise = rng_noise.standard_normal(values.shape) + 1j * rng_noise.standard_normal(values.shape)
        values += spec.noise_sigma / np.sqrt(2.0) * noise

    logger.debug("体模生成完成: 网格 %s, T=%d, J_max=%d", grid.dims, T, J)
    return PhantomTruth(
        image=DynamicImage(grid, values),
        band_count=band_count * support,
        frequencies=frequencies,
        amplitudes=amplitudes,
        roi=RoiMask(grid, support),
        activation=activation,
    )


def _activation_region(grid: Grid, task: TaskActivation) -> np.ndarray:
    """平滑的激活区域权重（高斯团）"""
    coords = np.meshgrid(*[np.arange(n) - n // 2 for n in grid.dims], indexing="ij")
    r2 = np.zeros(grid.dims)
    for axis, c in enumerate(coords):
        if grid.dims[axis] == 1:
            continue
        center = task.center[axis] * grid.dims[axis] / 2.0
        r2 = r2 + (c - center) ** 2
    return np.exp(-r2 / (2.0 * task.radius ** 2))


def generate_phantom(spec: MultibandSpec, seed: int) -> DynamicImage:
    """生成多频带动态体模（给定种子时结果确定）"""
    return generate_phantom_truth(spec, seed).image
