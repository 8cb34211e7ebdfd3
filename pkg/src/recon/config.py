"""
重建配置
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, Field

from src.utils.config_loader import load_model


class ReconConfig(BaseModel):
    """重建参数（JSON 字段与此一致）"""

    regularizer: Literal["none", "tikhonov", "structured_lowrank"] = "tikhonov"
    lam: float = Field(1e-3, ge=0)
    iters: int = Field(50, ge=0)
    tol: float = Field(1e-6, ge=0)
    krylov: Literal["cr", "cg"] = "cr"

    # 结构化低秩（MM 迭代）
    loraks_radius: int = Field(2, ge=1)
    loraks_rank: Optional[int] = Field(None, ge=1)
    rank_schedule: Optional[List[int]] = None
    loraks_tau: float = Field(0.02, gt=0, lt=1)
    outer_iters: int = Field(8, ge=1)
    outer_tol: float = Field(1e-4, ge=0)

    # 低秩 + 稀疏
    lam_l: float = Field(1e-2, ge=0)
    lam_s: float = Field(1e-2, ge=0)
    lps_iters: int = Field(60, ge=1)

    def with_lambda(self, lam: float) -> "ReconConfig":
        """返回只改变 λ 的副本"""
        return load_model(ReconConfig, {**self.model_dump(), "lam": float(lam)})
