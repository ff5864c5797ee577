"""
标量信息量：Umegaki 与 BS 相对熵、极大 f-散度、几何 Rényi 散度、条件互信息及三种 BS 条件互信息。

所有对数均为自然对数 (nats)，谱求和中约定 0·log 0 = 0。
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy.special import xlogy

from . import linalg
from .core import State, check_partition, embed_operator, von_neumann_entropy
from .utils import AlphaOutOfRange, SingularSigma, SpecMismatch, SupportViolation, logger

VARIANTS = ("os", "ts", "rev")

ScalarFunction = Callable[[np.ndarray], np.ndarray]


def xlogx(x: np.ndarray) -> np.ndarray:
    return xlogy(x, x)


def square(x: np.ndarray) -> np.ndarray:
    return x**2


def chi_square_like(x: np.ndarray) -> np.ndarray:
    return (x - 1.0) ** 2 / (x + 1.0)


# 饱和条件 (ii) 的抽查函数
SATURATION_FUNCTIONS: Dict[str, ScalarFunction] = {
    "xlogx": xlogx,
    "x^2": square,
    "(x-1)^2/(x+1)": chi_square_like,
}


@dataclass(frozen=True)
class DivergenceValue:
    value: float
    support_violation: bool = False

    @classmethod
    def infinite(cls) -> "DivergenceValue":
        return cls(math.inf, True)

    @property
    def is_finite(self) -> bool:
        return not self.support_violation

    def __float__(self) -> float:
        return self.value


def _same_spec(rho: State, sigma: State):
    if rho.spec != sigma.spec:
        raise SpecMismatch(f"两个态的规格不同: {rho.spec.labels} / {sigma.spec.labels}")


def support_leak(rho: np.ndarray, sigma: np.ndarray, support_tol: Optional[float] = None) -> float:
    """ρ 落在 supp σ 之外的权重 tr[(I − P_σ) ρ]。"""
    p = linalg.support_projector(sigma, support_tol)
    q = np.eye(p.shape[0]) - p
    return float(np.trace(q @ rho).real)


def _violates_support(rho: np.ndarray, sigma: np.ndarray, support_tol: Optional[float]) -> bool:
    dim = rho.shape[0]
    threshold = 10 * (linalg.default_support_tol(dim) if support_tol is None else support_tol)
    leak = support_leak(rho, sigma, support_tol)
    if leak > threshold:
        logger.debug(f"支撑条件不满足: 泄漏权重 {leak:.3e}")
        return True
    return False


def _maximal_f(rho: np.ndarray, sigma: np.ndarray, f: ScalarFunction, support_tol: Optional[float]) -> float:
    """tr[σ f([ρ/σ])]，[ρ/σ] = σ^{-1/2} ρ σ^{-1/2} 使用伪逆。"""
    s = linalg.inv_sqrtm_psd(sigma, support_tol)
    eig = linalg.eig_hermitian(s @ rho @ s)
    q = eig.eigenvectors
    weights = np.real(np.einsum("ij,jk,ki->i", q.conj().T, sigma, q))
    mu = np.clip(eig.eigenvalues, 0.0, None)
    return float(np.sum(np.real(f(mu)) * weights))


def relative_entropy_matrices(
    rho: np.ndarray, sigma: np.ndarray, support_tol: Optional[float] = None
) -> DivergenceValue:
    if _violates_support(rho, sigma, support_tol):
        return DivergenceValue.infinite()
    lam = np.clip(np.linalg.eigvalsh(linalg.hermitize(rho)), 0.0, None)
    first = float(np.sum(xlogy(lam, lam)))
    second = float(np.trace(rho @ linalg.logm_psd(sigma, support_tol)).real)
    return DivergenceValue(first - second)


def bs_entropy_matrices(
    rho: np.ndarray, sigma: np.ndarray, support_tol: Optional[float] = None
) -> DivergenceValue:
    if _violates_support(rho, sigma, support_tol):
        return DivergenceValue.infinite()
    return DivergenceValue(_maximal_f(rho, sigma, xlogx, support_tol))


def umegaki(rho: State, sigma: State, support_tol: Optional[float] = None) -> DivergenceValue:
    _same_spec(rho, sigma)
    return relative_entropy_matrices(rho.matrix, sigma.matrix, support_tol)


def bs_entropy(rho: State, sigma: State, support_tol: Optional[float] = None) -> DivergenceValue:
    _same_spec(rho, sigma)
    return bs_entropy_matrices(rho.matrix, sigma.matrix, support_tol)


def maximal_f_divergence(
    rho: State,
    sigma: State,
    f: ScalarFunction,
    restrict_to_support: bool = False,
    support_tol: Optional[float] = None,
) -> float:
    _same_spec(rho, sigma)
    if not restrict_to_support and not linalg.is_full_rank(sigma.matrix, support_tol):
        raise SingularSigma("σ 存在非平凡的核，且未要求限制到支撑上")
    return _maximal_f(rho.matrix, sigma.matrix, f, support_tol)


def geometric_renyi(rho: State, sigma: State, alpha: float) -> float:
    if not 1.0 < alpha <= 2.0:
        raise AlphaOutOfRange(f"α 必须位于 (1, 2]: {alpha}")
    q = maximal_f_divergence(rho, sigma, lambda x: np.power(x, alpha))
    return math.log(q) / (alpha - 1.0)


def cmi(rho: State, partition: Sequence[str]) -> float:
    """I(A:C|B) = S(AB) + S(BC) − S(ABC) − S(B)。"""
    a, b, c = check_partition(rho.spec, partition)
    s = von_neumann_entropy
    return s(rho.marginal([a, b])) + s(rho.marginal([b, c])) - s(rho) - s(rho.marginal([b]))


def bs_cmi(rho: State, partition: Sequence[str], variant: str = "os") -> float:
    a, b, c = check_partition(rho.spec, partition)
    if variant not in VARIANTS:
        raise ValueError(f"未知的 BS-CMI 变体: {variant} (可用: {', '.join(VARIANTS)})")
    d_c = rho.spec.dim_of(c)
    rho_ab = rho.marginal([a, b])
    rho_bc = rho.marginal([b, c])
    rho_b = rho.marginal([b])

    # 在各自规格中嵌入 X ⊗ I，保持标签顺序
    ab_tau = embed_operator(rho_ab.matrix, rho_ab.spec, rho.spec) / d_c
    b_tau = embed_operator(rho_b.matrix, rho_b.spec, rho_bc.spec) / d_c

    if variant == "os":
        first = bs_entropy_matrices(rho.matrix, ab_tau)
        second = bs_entropy_matrices(rho_bc.matrix, b_tau)
    elif variant == "ts":
        rho_c = rho.marginal([c])
        ab_c = embed_operator(rho_ab.matrix, rho_ab.spec, rho.spec) @ embed_operator(
            rho_c.matrix, rho_c.spec, rho.spec
        )
        b_c = embed_operator(rho_b.matrix, rho_b.spec, rho_bc.spec) @ embed_operator(
            rho_c.matrix, rho_c.spec, rho_bc.spec
        )
        first = bs_entropy_matrices(rho.matrix, ab_c)
        second = bs_entropy_matrices(rho_bc.matrix, b_c)
    else:
        first = bs_entropy_matrices(ab_tau, rho.matrix)
        second = bs_entropy_matrices(b_tau, rho_bc.matrix)

    if not (first.is_finite and second.is_finite):
        raise SupportViolation(f"BS-CMI ({variant}) 的支撑条件不满足，值为 +∞")
    return first.value - second.value
