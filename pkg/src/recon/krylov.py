"""
Hermitian 半正定法方程的 Krylov 求解器

variant="cr"：共轭残差法（残差范数单调不增）
variant="cg"：经典共轭梯度
"""

from typing import Callable, List, NamedTuple, Optional

import numpy as np

from src.utils.errors import NumericalError, ValidationError
from src.utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

VARIANTS = ("cr", "cg")
# 曲率相对于 ‖p‖·‖Ap‖ 低于此值视为舍入误差
CURVATURE_TOL = 1e-10


class KrylovResult(NamedTuple):
    """求解结果：解、逐次残差范数、迭代次数、是否达到容差"""

    x: np.ndarray
    residuals: List[float]
    iterations: int
    converged: bool


def _inner(a: np.ndarray, b: np.ndarray) -> complex:
    return np.vdot(a, b)


class ConjugateGradient:
    """Krylov 子空间求解器"""

    def __init__(self, variant: str = "cr", max_iters: int = 50, tol: float = 1e-6):
        """
        Args:
            variant: cr 或 cg
            max_iters: 最大迭代次数
            tol: 相对残差容差 ‖r‖/‖b‖
        """
        if variant not in VARIANTS:
            raise ValidationError(f"未知的 Krylov 方法: {variant}")
        if max_iters < 0 or tol < 0:
            raise ValidationError("迭代次数与容差不能为负")
        self.variant = variant
        self.max_iters = int(max_iters)
        self.tol = float(tol)

    def _check_curvature(self, value: complex, p: np.ndarray, Ap: np.ndarray) -> bool:
        """曲率为负时报错；返回 False 表示曲率为零（Krylov 子空间耗尽）"""
        scale = np.linalg.norm(p) * np.linalg.norm(Ap)
        curvature = float(np.real(value))
        if curvature < -CURVATURE_TOL * max(scale, 1e-300):
            raise NumericalError(f"法方程非半正定（曲率 {curvature:.3e}），请检查前向算子与伴随是否一致")
        return curvature > CURVATURE_TOL * scale

    def solve(self, apply: Callable[[np.ndarray], np.ndarray], rhs: np.ndarray,
              x0: Optional[np.ndarray] = None) -> KrylovResult:
        """
        求解 A x = b

        Args:
            apply: A 的作用
            rhs: 右端项 b
            x0: 初值，默认 0

        Returns:
            KrylovResult
        """
        b_norm = float(np.linalg.norm(rhs))
        x = np.zeros_like(rhs, dtype=np.complex128) if x0 is None else np.array(x0, dtype=np.complex128)
        if b_norm == 0:
            return KrylovResult(np.zeros_like(x), [0.0], 0, True)
        r = rhs - apply(x) if x0 is not None else np.array(rhs, dtype=np.complex128)
        residuals = [float(np.linalg.norm(r))]
        if residuals[-1] <= self.tol * b_norm:
            return KrylovResult(x, residuals, 0, True)
        if self.variant == "cr":
            return self._conjugate_residual(apply, x, r, residuals, b_norm)
        return self._conjugate_gradient(apply, x, r, residuals, b_norm)

    def _conjugate_gradient(self, apply, x, r, residuals, b_norm) -> KrylovResult:
        p = r.copy()
        rr = float(np.real(_inner(r, r)))
        for it in range(1, self.max_iters + 1):
            Ap = apply(p)
            pAp = _inner(p, Ap)
            if not self._check_curvature(pAp, p, Ap):
                return KrylovResult(x, residuals, it - 1, False)
            alpha = rr / float(np.real(pAp))
            x = x + alpha * p
            r = r - alpha * Ap
            rr_new = float(np.real(_inner(r, r)))
            residuals.append(float(np.sqrt(rr_new)))
            if residuals[-1] <= self.tol * b_norm:
                return KrylovResult(x, residuals, it, True)
            p = r + (rr_new / rr) * p
            rr = rr_new
        return KrylovResult(x, residuals, self.max_iters, False)

    def _conjugate_residual(self, apply, x, r, residuals, b_norm) -> KrylovResult:
        Ar = apply(r)
        rAr = _inner(r, Ar)
        if not self._check_curvature(rAr, r, Ar):
            return KrylovResult(x, residuals, 0, False)
        p, Ap = r.copy(), Ar.copy()
        for it in range(1, self.max_iters + 1):
            ApAp = float(np.real(_inner(Ap, Ap)))
            if ApAp == 0:
                return KrylovResult(x, residuals, it - 1, False)
            alpha = float(np.real(rAr)) / ApAp
            x = x + alpha * p
            r = r - alpha * Ap
            residuals.append(float(np.linalg.norm(r)))
            if residuals[-1] <= self.tol * b_norm:
                return KrylovResult(x, residuals, it, True)
            Ar = apply(r)
            rAr_new = _inner(r, Ar)
            if not self._check_curvature(rAr_new, r, Ar):
                return KrylovResult(x, residuals, it, False)
            beta = float(np.real(rAr_new)) / float(np.real(rAr))
            p = r + beta * p
            Ap = Ar + beta * Ap
            rAr = rAr_new
        logger.debug("Krylov 未在 %d 次迭代内达到容差，相对残差 %.3e", self.max_iters, residuals[-1] / b_norm)
        return KrylovResult(x, residuals, self.max_iters, False)
