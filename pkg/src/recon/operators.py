"""
前向算子与时间模型

A：逐帧线圈加权、DFT、欠采样
M：时间模型展开，STM 为逐体素 Σ_l s_l(x,t)·ρ_l(x)，PSF 为 Σ_l φ_l(t)·ρ_l(x)
"""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from src.data.types import DynamicImage, Grid, KtDataset, SamplingMask, SensitivityMaps, StmSet
from src.utils.errors import ValidationError
from src.utils.fft import fftc, ifftc

ORTHONORMAL_TOL = 1e-6


# ==================== 前向算子 ====================

@dataclass(frozen=True)
class ForwardOp:
    """多线圈欠采样编码算子"""

    maps: SensitivityMaps
    mask: SamplingMask
    workers: Optional[int] = None

    def __post_init__(self):
        if self.maps.grid != self.mask.grid:
            raise ValidationError("灵敏度与采样模板的网格不一致")

    @property
    def grid(self):
        return self.mask.grid

    @property
    def coils(self) -> int:
        return self.maps.coils

    @property
    def frames(self) -> int:
        return self.mask.frames

    @property
    def image_shape(self) -> Tuple[int, ...]:
        return self.grid.dims + (self.frames,)

    @property
    def data_shape(self) -> Tuple[int, ...]:
        return self.grid.dims + (self.coils, self.frames)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """(x,y,z,T) 图像 → (k_x,k_y,k_z,Q,T) 数据"""
        coil_images = x[:, :, :, None, :] * self.maps.values[..., None]
        return fftc(coil_images, workers=self.workers) * self.mask.flags[:, :, :, None, :]

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """(k_x,k_y,k_z,Q,T) 数据 → (x,y,z,T) 图像"""
        masked = y * self.mask.flags[:, :, :, None, :]
        coil_images = ifftc(masked, workers=self.workers)
        return np.sum(np.conj(self.maps.values)[..., None] * coil_images, axis=3)

    def normal(self, x: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(x))


def apply_forward(op: ForwardOp, rho: DynamicImage) -> KtDataset:
    """前向算子作用于动态图像"""
    if rho.grid != op.grid or rho.frames != op.frames:
        raise ValidationError(f"图像尺寸 {rho.values.shape} 与算子 {op.image_shape} 不一致")
    return KtDataset(op.grid, op.forward(rho.values), op.mask)


def apply_adjoint(op: ForwardOp, data: KtDataset) -> DynamicImage:
    """伴随算子作用于 (k,t) 数据"""
    if data.samples.shape != op.data_shape:
        raise ValidationError(f"数据尺寸 {data.samples.shape} 与算子 {op.data_shape} 不一致")
    return DynamicImage(op.grid, op.adjoint(data.samples))


def operator_norm_bound(op: ForwardOp) -> float:
    """‖A‖² 的上界 max_x Σ_q |c_q(x)|²（DFT 单位化，欠采样为投影）"""
    return float(np.max(np.sum(np.abs(op.maps.values) ** 2, axis=3)))


# ==================== 时间模型 ====================

@dataclass(frozen=True)
class TemporalModel:
    """
    时间模型

    kind="stm" 时 maps[x,y,z,l,t] 为逐体素正交归一的时空图；
    kind="psf" 时 basis[t,l] 为全局正交归一的时间基
    """

    kind: str
    maps: Optional[np.ndarray] = None
    basis: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "stm":
            if self.maps is None or self.maps.ndim != 5:
                raise ValidationError("STM 模型需要 (x,y,z,L,T) 时空图")
        elif self.kind == "psf":
            if self.basis is None or self.basis.ndim != 2:
                raise ValidationError("PSF 模型需要 (T,L) 时间基")
            gram = np.conj(self.basis.T) @ self.basis
            if np.max(np.abs(gram - np.eye(gram.shape[0]))) > ORTHONORMAL_TOL:
                raise ValidationError("PSF 时间基的列必须正交归一")
        else:
            raise ValidationError(f"未知的时间模型: {self.kind}")

    @classmethod
    def from_stm(cls, stm: StmSet, use_local: bool = False) -> "TemporalModel":
        """
        由 StmSet 构造模型；use_local 时按 L(x) 把超出的分量置零
        """
        maps = np.array(stm.maps)
        if use_local and stm.local_components is not None:
            keep = np.arange(stm.components)[None, None, None, :] < stm.local_components[..., None]
            maps = maps * keep[..., None]
        return cls("stm", maps=maps)

    @classmethod
    def from_basis(cls, basis: np.ndarray) -> "TemporalModel":
        return cls("psf", basis=np.asarray(basis, dtype=np.complex128))

    @property
    def components(self) -> int:
        return self.maps.shape[3] if self.kind == "stm" else self.basis.shape[1]

    @property
    def frames(self) -> int:
        return self.maps.shape[4] if self.kind == "stm" else self.basis.shape[0]

    def truncate(self, L: int) -> "TemporalModel":
        """保留前 L 个分量（嵌套子空间）"""
        if not 1 <= L <= self.components:
            raise ValidationError(f"分量数 L={L} 超出 [1, {self.components}]")
        if self.kind == "stm":
            return TemporalModel("stm", maps=self.maps[:, :, :, :L])
        return TemporalModel("psf", basis=self.basis[:, :L])

    def expand(self, components: np.ndarray) -> np.ndarray:
        """(x,y,z,L) 分量图像 → (x,y,z,T) 动态图像"""
        if components.shape[-1] != self.components:
            raise ValidationError(f"分量数 {components.shape[-1]} 与模型 L={self.components} 不一致")
        if self.kind == "stm":
            return np.einsum("xyzlt,xyzl->xyzt", self.maps, components)
        return np.einsum("tl,xyzl->xyzt", self.basis, components)

    def adjoint(self, image: np.ndarray) -> np.ndarray:
        """(x,y,z,T) 动态图像 → (x,y,z,L) 分量图像"""
        if self.kind == "stm":
            return np.einsum("xyzlt,xyzt->xyzl", np.conj(self.maps), image)
        return np.einsum("tl,xyzt->xyzl", np.conj(self.basis), image)


def expand_model(model: TemporalModel, components: np.ndarray) -> DynamicImage:
    """把 L 个分量图像展开为动态图像"""
    components = np.asarray(components, dtype=np.complex128)
    if components.ndim != 4:
        raise ValidationError(f"分量图像必须为 (x,y,z,L)，当前 {components.shape}")
    return DynamicImage(Grid(components.shape[:3]), model.expand(components))


def adjoint_model(model: TemporalModel, image: DynamicImage) -> np.ndarray:
    """expand_model 的伴随"""
    if image.frames != model.frames:
        raise ValidationError(f"帧数 {image.frames} 与模型 T={model.frames} 不一致")
    return model.adjoint(image.values)


# ==================== 伴随检验 ====================

def _random_complex(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def dot_test(forward: Callable[[np.ndarray], np.ndarray], adjoint: Callable[[np.ndarray], np.ndarray],
             x_shape: Tuple[int, ...], y_shape: Tuple[int, ...], seed: int = 0) -> float:
    """
    随机向量伴随检验

    Returns:
        |⟨Ax, y⟩ − ⟨x, Aᴴy⟩| / (‖Ax‖·‖y‖ + ‖x‖·‖Aᴴy‖)
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    x = _random_complex(rng, x_shape)
    y = _random_complex(rng, y_shape)
    Ax, Ahy = forward(x), adjoint(y)
    lhs, rhs = np.vdot(y, Ax), np.vdot(Ahy, x)
    scale = np.linalg.norm(Ax) * np.linalg.norm(y) + np.linalg.norm(x) * np.linalg.norm(Ahy)
    if scale == 0:
        return 0.0
    return float(abs(lhs - rhs) / scale)
