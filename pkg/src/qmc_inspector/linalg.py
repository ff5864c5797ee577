"""
稠密 Hermitian 矩阵内核：特征分解、支撑子空间上的矩阵函数、范数与极分解。

所有矩阵函数都经过完整的特征分解计算，"逆" 与 "对数" 只作用在支撑子空间上
(即伪逆与限制在支撑上的对数)。
"""

from dataclasses import dataclass
from typing import Callable, Literal, Optional

import numpy as np
import scipy.linalg

from .utils import (
    DEFAULT_TOLERANCES,
    NegativeEigenvalue,
    NonFinite,
    NonHermitian,
    logger,
)

MACHEPS = np.finfo(float).eps

NormKind = Literal["trace", "operator", "frobenius"]


@dataclass(frozen=True)
class EigenSystem:
    """特征值按降序排列，特征向量为对应的列。"""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.conj().T


def as_matrix(M) -> np.ndarray:
    """转换为复数方阵，并检查 NaN/Inf。"""
    m = np.asarray(M, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"需要二维矩阵，实际维数为 {m.ndim}")
    if not np.all(np.isfinite(m)):
        raise NonFinite("矩阵中包含 NaN 或 Inf")
    return m


def default_support_tol(dim: int) -> float:
    return DEFAULT_TOLERANCES.support_scale * dim * MACHEPS


def hermitize(M, tol: float = DEFAULT_TOLERANCES.hermitian) -> np.ndarray:
    """返回 (M + M*)/2；非对称程度超过 tol·‖M‖_F 时报错。"""
    m = as_matrix(M)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"需要方阵，实际形状为 {m.shape}")
    asym = np.linalg.norm(m - m.conj().T, "fro")
    scale = np.linalg.norm(m, "fro")
    if asym > tol * scale:
        raise NonHermitian(f"矩阵不是 Hermitian: ‖M − M*‖_F = {asym:.3e}")
    return (m + m.conj().T) / 2


def eig_hermitian(M, tol: float = DEFAULT_TOLERANCES.hermitian) -> EigenSystem:
    h = hermitize(M, tol)
    w, v = np.linalg.eigh(h)
    return EigenSystem(eigenvalues=w[::-1].copy(), eigenvectors=v[:, ::-1].copy())


def support_mask(eigenvalues: np.ndarray, support_tol: float) -> np.ndarray:
    if eigenvalues.size == 0:
        return np.zeros(0, dtype=bool)
    scale = float(np.max(np.abs(eigenvalues)))
    if scale == 0.0:
        return np.zeros(eigenvalues.shape, dtype=bool)
    lam_min = float(np.min(eigenvalues))
    if lam_min < -support_tol * scale:
        raise NegativeEigenvalue(
            f"矩阵不是半正定的: λ_min = {lam_min:.3e}, λ_max = {scale:.3e}"
        )
    return eigenvalues > support_tol * scale


def mat_func(
    M,
    f: Callable[[np.ndarray], np.ndarray],
    support_tol: Optional[float] = None,
) -> np.ndarray:
    """
    对半正定矩阵 M 在其支撑上应用标量函数 f。

    λ ≤ support_tol·λ_max 的特征值视为精确的零，f 不作用于它们 (结果在核上为零)。
    f 返回实数时结果为 Hermitian；返回复数时 (复幂) 结果不做对称化。
    """
    eig = eig_hermitian(M)
    dim = eig.eigenvalues.size
    tol = default_support_tol(dim) if support_tol is None else support_tol
    mask = support_mask(eig.eigenvalues, tol)
    fv = np.asarray(f(eig.eigenvalues[mask]))
    values = np.zeros(dim, dtype=complex)
    values[mask] = fv
    q = eig.eigenvectors
    out = (q * values) @ q.conj().T
    if np.iscomplexobj(fv) and np.any(fv.imag != 0):
        return out
    return (out + out.conj().T) / 2


def herm_func(M, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """对任意 Hermitian 矩阵的全部特征值应用 f (不做支撑截断)。"""
    eig = eig_hermitian(M)
    q = eig.eigenvectors
    out = (q * np.asarray(f(eig.eigenvalues), dtype=complex)) @ q.conj().T
    return (out + out.conj().T) / 2


def support_projector(M, support_tol: Optional[float] = None) -> np.ndarray:
    return mat_func(M, np.ones_like, support_tol)


def rank(M, support_tol: Optional[float] = None) -> int:
    eig = eig_hermitian(M)
    tol = default_support_tol(eig.eigenvalues.size) if support_tol is None else support_tol
    return int(np.count_nonzero(support_mask(eig.eigenvalues, tol)))


def is_full_rank(M, support_tol: Optional[float] = None) -> bool:
    return rank(M, support_tol) == as_matrix(M).shape[0]


def sqrtm_psd(M, support_tol: Optional[float] = None) -> np.ndarray:
    return mat_func(M, np.sqrt, support_tol)


def pinv_psd(M, support_tol: Optional[float] = None) -> np.ndarray:
    return mat_func(M, lambda x: 1.0 / x, support_tol)


def inv_sqrtm_psd(M, support_tol: Optional[float] = None) -> np.ndarray:
    return mat_func(M, lambda x: 1.0 / np.sqrt(x), support_tol)


def logm_psd(M, support_tol: Optional[float] = None) -> np.ndarray:
    return mat_func(M, np.log, support_tol)


def mat_power(M, p: complex, support_tol: Optional[float] = None) -> np.ndarray:
    """M^p 在支撑上的值，p 可以是复数：exp(p·log M)。"""
    return mat_func(M, lambda x: np.exp(p * np.log(x)), support_tol)


def norm(M, kind: NormKind = "trace") -> float:
    m = as_matrix(M)
    if kind == "frobenius":
        return float(np.linalg.norm(m, "fro"))
    s = np.linalg.svd(m, compute_uv=False)
    if kind == "trace":
        return float(np.sum(s))
    if kind == "operator":
        return float(np.max(s)) if s.size else 0.0
    raise ValueError(f"未知的范数类型: {kind}")


def trace_distance(X, Y) -> float:
    """‖X − Y‖₁ (不带 1/2 因子)。"""
    return norm(as_matrix(X) - as_matrix(Y), "trace")


def smallest_singular_value(M) -> float:
    s = np.linalg.svd(as_matrix(M), compute_uv=False)
    return float(np.min(s))


def inverse_norm(M) -> float:
    """‖M^{-1}‖_∞，即最小奇异值的倒数；奇异矩阵返回 inf。"""
    smin = smallest_singular_value(M)
    return float("inf") if smin == 0.0 else 1.0 / smin


def commutator(X, Y) -> np.ndarray:
    x, y = as_matrix(X), as_matrix(Y)
    return x @ y - y @ x


def polar_unitary(A):
    """
    极分解 A = W·P，P = (A*A)^{1/2}。

    通过 SVD 计算 (W = U·V*)，因此 A 奇异时 W 仍是酉矩阵。
    """
    a = as_matrix(A)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"极分解需要方阵，实际形状为 {a.shape}")
    w, p = scipy.linalg.polar(a, side="right")
    unitarity = np.linalg.norm(w.conj().T @ w - np.eye(a.shape[0]), "fro")
    if unitarity > a.shape[0] * 1e-12:
        logger.debug(f"极分解酉因子偏差 {unitarity:.3e}")
    return w, p
