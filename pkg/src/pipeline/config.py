"""
流水线配置 RunConfig
所有范围检查在任何计算之前完成
"""

from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator

from src.phantom.multiband import MultibandSpec
from src.phantom.sampling import MaskSpec
from src.recon.config import ReconConfig
from src.utils.config_loader import load_model, read_json
from src.utils.errors import ValidationError

METHODS = ("zerofill", "datashare", "stm-tikhonov", "stm-loraks", "psf", "lps")
Method = Literal["zerofill", "datashare", "stm-tikhonov", "stm-loraks", "psf", "lps"]


class AcquisitionConfig(BaseModel):
    """采集：线圈数、噪声（σ 或按 ROI 信号均方根给出的 SNR）、可选线圈压缩"""

    coils: int = Field(1, ge=1)
    sigma: float = Field(0.0, ge=0)
    snr_db: Optional[float] = None
    compress_to: Optional[int] = Field(None, ge=1)
    estimate_maps: bool = False
    map_frames: Literal["all", "first"] = "all"


class KernelConfig(BaseModel):
    shape: Literal["ellipsoid", "rectangle"] = "ellipsoid"
    radius: int = Field(3, ge=1)


class NullspaceConfig(BaseModel):
    method: Literal["exact", "sketched"] = "sketched"
    tau: float = Field(1e-3, gt=0, lt=1)
    mu: float = Field(2.0, ge=2, le=6)
    seed: int = 0
    pilot_frames: Optional[int] = Field(None, ge=1)


class MapsConfig(BaseModel):
    L: int = Field(4, ge=1)
    coarse: int = Field(2, ge=1)
    threshold: Optional[float] = Field(None, gt=0)
    iters: int = Field(30, ge=0)
    squarings: int = Field(4, ge=0)


class ReconStageConfig(BaseModel):
    methods: List[Method] = Field(default_factory=lambda: ["zerofill", "datashare", "stm-tikhonov"])
    settings: ReconConfig = Field(default_factory=ReconConfig)
    lambdas: Optional[List[float]] = None
    L_psf: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_lambdas(self):
        if self.lambdas is not None and (not self.lambdas or any(lam <= 0 for lam in self.lambdas)):
            raise ValueError("λ 扫描网格必须非空且全为正")
        return self


class MetricsConfig(BaseModel):
    npr_max_L: int = Field(8, ge=1)
    eigen_count: int = Field(10, ge=1)
    tscore: bool = False
    per_frame: bool = False


class SketchStudyConfig(BaseModel):
    multipliers: List[float] = Field(default_factory=lambda: [2.0, 3.0, 4.0])
    realizations: int = Field(5, ge=1)

    @model_validator(mode="after")
    def _check_multipliers(self):
        if not self.multipliers or any(not 2 <= mu <= 6 for mu in self.multipliers):
            raise ValueError("草图倍数 μ 必须位于 [2, 6]")
        return self


class RunConfig(BaseModel):
    """端到端运行配置（JSON 字段与此一致）"""

    name: str = "run"
    seed: int = 0
    phantom: Union[MultibandSpec, str]
    mask: MaskSpec
    acquisition: AcquisitionConfig = Field(default_factory=AcquisitionConfig)
    kernel: KernelConfig = Field(default_factory=KernelConfig)
    nullspace: NullspaceConfig = Field(default_factory=NullspaceConfig)
    maps: MapsConfig = Field(default_factory=MapsConfig)
    recon: ReconStageConfig = Field(default_factory=ReconStageConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    sketch_study: Optional[SketchStudyConfig] = None
    output_dir: Optional[str] = None
    render_pdf: bool = False

    @model_validator(mode="after")
    def _check_ranges(self):
        if isinstance(self.phantom, MultibandSpec):
            T = self.phantom.frames
            if self.maps.L > T:
                raise ValueError(f"分量数 L={self.maps.L} 不能超过帧数 T={T}")
            if self.recon.L_psf is not None and self.recon.L_psf > T:
                raise ValueError(f"PSF 阶数 {self.recon.L_psf} 不能超过帧数 T={T}")
        if self.acquisition.compress_to is not None and self.acquisition.compress_to > self.acquisition.coils:
            raise ValueError("压缩后的线圈数不能超过原线圈数")
        if self.acquisition.estimate_maps and self.acquisition.coils < 2:
            raise ValueError("估计灵敏度至少需要 2 个线圈")
        return self

    @property
    def phantom_spec(self) -> MultibandSpec:
        if not isinstance(self.phantom, MultibandSpec):
            raise ValidationError("体模参数尚未解析，请使用 load_run_config")
        return self.phantom


def load_run_config(source: Union[str, Path, dict, RunConfig]) -> RunConfig:
    """
    读取并校验运行配置；phantom 为路径时相对配置文件所在目录解析

    Args:
        source: JSON 路径、字典或 RunConfig

    Returns:
        phantom 已解析为 MultibandSpec 的 RunConfig
    """
    base = Path(".")
    if isinstance(source, (str, Path)):
        base = Path(source).parent
        source = read_json(source)
    config = load_model(RunConfig, source)
    if isinstance(config.phantom, str):
        phantom_path = Path(config.phantom)
        if not phantom_path.is_absolute():
            phantom_path = base / phantom_path
        data = config.model_dump()
        data["phantom"] = read_json(phantom_path)
        config = load_model(RunConfig, data)
    return config


# ==================== 内置配置 ====================

CONFIG_DIR = Path(__file__).parent / "configs"


def bundled_configs() -> List[str]:
    """内置配置名列表"""
    return sorted(p.stem for p in CONFIG_DIR.glob("*.json"))


def resolve_config_path(name_or_path: Union[str, Path]) -> Path:
    """
    解析配置位置：已存在的文件路径原样返回，否则按内置配置名查找

    Args:
        name_or_path: JSON 路径或内置配置名（如 phantom2d-smoke）

    Returns:
        配置文件路径
    """
    path = Path(name_or_path)
    if path.is_file():
        return path
    bundled = CONFIG_DIR / f"{path.stem}.json"
    if bundled.is_file():
        return bundled
    raise ValidationError(f"找不到配置: {name_or_path}（内置配置: {', '.join(bundled_configs())}）")


class PhantomJob(BaseModel):
    """phantom gen 的输入：体模参数，可选的采样模板、线圈数与噪声"""

    phantom: MultibandSpec
    mask: Optional[MaskSpec] = None
    coils: int = Field(1, ge=1)
    sigma: float = Field(0.0, ge=0)


def load_phantom_job(source: Union[str, Path, dict]) -> PhantomJob:
    """读取 phantom gen 配置；顶层没有 phantom 键时整体视为 MultibandSpec"""
    if isinstance(source, (str, Path)):
        source = read_json(source)
    if "phantom" not in source:
        source = {"phantom": source}
    return load_model(PhantomJob, source)
