"""
定量不等式的逐项求值：强化的数据处理不等式、反向 BS-CMI 的下界、
η-CMI 与反向 BS-CMI 之间的三条界，以及基于旋转映射 Φ^rot 的上界。

每个检查返回 BoundCheck (lhs, rhs, kind)，所有常数都由态本身计算。
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from . import linalg
from .core import KrausChannel, State, apply_channel, check_partition, embed_operator
from .divergences import bs_cmi, bs_entropy, cmi, umegaki
from .markov import eta_from_rho
from .recovery import QuadratureRule, bs_recover, petz_recover, phi_map, phi_rot
from .utils import SingularInput, SingularityError, logger

# (π/8)⁴
PI8_4 = (math.pi / 8) ** 4

# satisfied ⇔ margin ≥ −SLACK
SLACK = 1e-9

BoundKind = Literal["lower", "upper"]


@dataclass(frozen=True)
class BoundCheck:
    """lower: lhs ≥ rhs；upper: lhs ≤ rhs。margin 为不等式方向上的带符号余量。"""

    name: str
    lhs: float
    rhs: float
    kind: BoundKind = "lower"
    applicable: bool = True

    @property
    def margin(self) -> float:
        if not self.applicable:
            return math.nan
        if self.kind == "lower":
            return self.lhs - self.rhs
        return self.rhs - self.lhs

    @property
    def satisfied(self) -> bool:
        return self.applicable and self.margin >= -SLACK

    @property
    def status(self) -> str:
        if not self.applicable:
            return "not-applicable"
        return "satisfied" if self.satisfied else "violated"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "status": self.status,
        }


@dataclass(frozen=True)
class BoundReport:
    checks: Tuple[BoundCheck, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {"checks": [check.to_dict() for check in self.checks]}

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        rows = [[c.name, c.lhs, c.rhs, c.margin, c.status] for c in self.checks]
        return ["name", "lhs", "rhs", "margin", "status"], rows

    def summary(self) -> List[str]:
        counts: Dict[str, int] = {}
        for c in self.checks:
            counts[c.status] = counts.get(c.status, 0) + 1
        parts = ", ".join(f"{k}: {v}" for k, v in sorted(counts.items()))
        return [f"共 {len(self.checks)} 项检查 ({parts})"]


def _require_invertible(m: np.ndarray, what: str):
    if not linalg.is_full_rank(m):
        raise SingularInput(f"{what} 不可逆")


def _op_norm(m: np.ndarray) -> float:
    return linalg.norm(m, "operator")


def petz_dpi_lower_bound(rho: State, sigma: State, ch: KrausChannel) -> BoundCheck:
    """D(ρ‖σ) − D(Nρ‖Nσ) ≥ (π/8)⁴ ‖ρ^{-1}‖^{-2} ‖N(σ)^{-1}‖^{-2} ‖P∘N(ρ) − ρ‖₁⁴。"""
    n_rho, n_sigma = apply_channel(ch, rho), apply_channel(ch, sigma)
    _require_invertible(rho.matrix, "ρ")
    _require_invertible(n_sigma.matrix, "N(σ)")
    lhs = umegaki(rho, sigma).value - umegaki(n_rho, n_sigma).value
    recovered = petz_recover(sigma, ch, n_rho.matrix)
    rhs = (
        PI8_4
        * linalg.inverse_norm(rho.matrix) ** -2
        * linalg.inverse_norm(n_sigma.matrix) ** -2
        * linalg.trace_distance(recovered, rho.matrix) ** 4
    )
    return BoundCheck("petz_dpi_lower", lhs, rhs)


def bs_dpi_lower_bound(rho: State, sigma: State, ch: KrausChannel) -> BoundCheck:
    """D̂(ρ‖σ) − D̂(Tρ‖Tσ) ≥ (π/8)⁴ ‖ρ^{-1/2}σρ^{-1/2}‖^{-4} ‖ρ^{-1}‖^{-2} ‖B^ρ_T∘T(σ) − σ‖₁⁴。"""
    t_rho, t_sigma = apply_channel(ch, rho), apply_channel(ch, sigma)
    _require_invertible(rho.matrix, "ρ")
    _require_invertible(t_rho.matrix, "T(ρ)")
    lhs = bs_entropy(rho, sigma).value - bs_entropy(t_rho, t_sigma).value
    r_isqrt = linalg.inv_sqrtm_psd(rho.matrix)
    ratio = _op_norm(r_isqrt @ sigma.matrix @ r_isqrt)
    recovered = bs_recover(rho, ch, t_sigma.matrix)
    rhs = (
        PI8_4
        * ratio**-4
        * linalg.inverse_norm(rho.matrix) ** -2
        * linalg.trace_distance(recovered, sigma.matrix) ** 4
    )
    return BoundCheck("bs_dpi_lower", lhs, rhs)


def conditional_expectation_instance(
    rho: State, partition: Sequence[str]
) -> Tuple[State, State, KrausChannel]:
    """(ρ, ρ_AB ⊗ τ_C, X ↦ τ_A ⊗ tr_A X)：两个数据处理界在三体态上的标准实例。"""
    a, b, c = check_partition(rho.spec, partition)
    rho_ab = rho.marginal([a, b])
    sigma = State(rho.spec, embed_operator(rho_ab.matrix, rho_ab.spec, rho.spec) / rho.spec.dim_of(c))
    return rho, sigma, KrausChannel.replace_with_maximally_mixed(rho.spec, [a])


def bc_ratio(rho: State, b: str, c: str) -> float:
    """‖ρ_BC^{-1/2} ρ ρ_BC^{-1/2}‖_∞。"""
    rho_bc = rho.marginal([b, c])
    isq = embed_operator(linalg.inv_sqrtm_psd(rho_bc.matrix), rho_bc.spec, rho.spec)
    return _op_norm(isq @ rho.matrix @ isq)


def rev_cmi_lower_phi(rho: State, partition: Sequence[str]) -> BoundCheck:
    """Î^rev ≥ (π/8)⁴ ‖ρ_BC^{-1/2}ρρ_BC^{-1/2}‖^{-2} ‖Φ_{B→AB}(ρ_BC) − ρ‖₁⁴。"""
    a, b, c = check_partition(rho.spec, partition)
    _require_invertible(rho.matrix, "ρ")
    lhs = bs_cmi(rho, (a, b, c), "rev")
    phi = phi_map(rho, b, [a, b], rho.marginal([b, c])).matrix
    rhs = PI8_4 * bc_ratio(rho, b, c) ** -2 * linalg.trace_distance(phi, rho.matrix) ** 4
    return BoundCheck("rev_cmi_lower_phi", lhs, rhs)


@dataclass(frozen=True)
class _EtaTerms:
    i_rev: float
    i_eta: float
    d_a: int
    d_b: int
    d_c: int
    rho_b_inv: float
    rho_b_norm: float
    bc_ratio: float
    abc_inv_bc: float
    b_map_inv: float
    eta_inv: float
    eta_commutator: float

    @property
    def g1(self) -> float:
        return (
            self.bc_ratio
            * math.sqrt(self.rho_b_inv * self.rho_b_norm)
            * self.abc_inv_bc
            * self.b_map_inv
        )

    @property
    def g2(self) -> float:
        return PI8_4 * self.eta_inv**-2 * (1.0 / (self.d_a * self.d_b**2 * self.d_c)) ** 4

    @property
    def h(self) -> float:
        return 2 * self.d_b * math.sqrt(self.d_a * self.d_b * self.d_c) * self.g1

    @property
    def crossover(self) -> float:
        """I_η 超过该值时四次根上界比平方根上界更紧。"""
        return (4 / math.pi) ** 4 * (self.d_a * self.d_b * self.d_c) ** 2 * self.eta_inv**2


def _eta_terms(rho: State, partition: Sequence[str]) -> _EtaTerms:
    a, b, c = check_partition(rho.spec, partition)
    _require_invertible(rho.matrix, "ρ")
    d_a, d_b, d_c = (rho.spec.dim_of(x) for x in (a, b, c))
    rho_ab, rho_bc, rho_b = rho.marginal([a, b]), rho.marginal([b, c]), rho.marginal([b])
    eta = eta_from_rho(rho, b)

    def up(m: np.ndarray, spec) -> np.ndarray:
        return embed_operator(m, spec, rho.spec)

    abc_inv_bc = _op_norm(np.linalg.inv(rho.matrix) @ up(rho_bc.matrix, rho_bc.spec))
    b_map = up(rho_ab.matrix, rho_ab.spec) @ up(np.linalg.inv(rho_b.matrix), rho_b.spec) @ up(
        rho_bc.matrix, rho_bc.spec
    )
    eta_ab = up(eta.marginal([a, b]).matrix, rho_ab.spec)
    eta_bc = up(eta.marginal([b, c]).matrix, rho_bc.spec)
    return _EtaTerms(
        i_rev=bs_cmi(rho, (a, b, c), "rev"),
        i_eta=cmi(eta, (a, b, c)),
        d_a=d_a,
        d_b=d_b,
        d_c=d_c,
        rho_b_inv=linalg.inverse_norm(rho_b.matrix),
        rho_b_norm=_op_norm(rho_b.matrix),
        bc_ratio=bc_ratio(rho, b, c),
        abc_inv_bc=abc_inv_bc,
        b_map_inv=linalg.inverse_norm(b_map),
        eta_inv=linalg.inverse_norm(eta.matrix),
        eta_commutator=float(np.linalg.norm(linalg.commutator(eta_ab, eta_bc), "fro")),
    )


def eta_cmi_bounds(rho: State, partition: Sequence[str]) -> List[BoundCheck]:
    """
    η-CMI 与反向 BS-CMI 的三条界：
    下界:       Î^rev ≥ 2^{-8}(log min(d_A,d_C) + 1)^{-8} (d_B π / (8‖ρ_B^{-1}‖))⁴ ‖ρ_BC^{-1/2}ρρ_BC^{-1/2}‖^{-2} I_η⁸
    四次根上界: Î^rev ≤ g₂^{-1/4} g₁ I_η^{1/4}
    平方根上界: Î^rev ≤ h I_η^{1/2}
    两条上界只在 η 的边缘对易时适用。
    """
    t = _eta_terms(rho, partition)
    i_eta = max(t.i_eta, 0.0)
    lower = (
        2.0**-8
        * (math.log(min(t.d_a, t.d_c)) + 1) ** -8
        * (t.d_b * math.pi / (8 * t.rho_b_inv)) ** 4
        * t.bc_ratio**-2
        * i_eta**8
    )
    applicable = t.eta_commutator < 1e-8
    return [
        BoundCheck("eta_cmi_lower", t.i_rev, lower, "lower"),
        BoundCheck("eta_cmi_upper_quarter", t.i_rev, t.g2**-0.25 * t.g1 * i_eta**0.25, "upper", applicable),
        BoundCheck("eta_cmi_upper_half", t.i_rev, t.h * i_eta**0.5, "upper", applicable),
    ]


def eta_cmi_crossover_consistent(rho: State, partition: Sequence[str], rel_tol: float = 1e-9) -> bool:
    """四次根上界比平方根上界更紧 ⇔ I_η ≥ (4/π)⁴ (d_A d_B d_C)² ‖η^{-1}‖²。"""
    t = _eta_terms(rho, partition)
    i_eta = max(t.i_eta, 0.0)
    if i_eta == 0.0 or abs(i_eta / t.crossover - 1.0) < rel_tol:
        return True
    u1 = t.g2**-0.25 * t.g1 * i_eta**0.25
    u2 = t.h * i_eta**0.5
    return (u1 <= u2) == (i_eta >= t.crossover)


def rotated_recovery_upper(
    rho: State, partition: Sequence[str], rule: Optional[QuadratureRule] = None
) -> BoundCheck:
    """Î^rev ≤ (1/d_C) ‖ρ^{-1/2} ρ_AB^{1/2}‖² ‖(id_A ⊗ Φ^rot_{B→BC})(ρ_AB) − ρ‖₁。"""
    a, b, c = check_partition(rho.spec, partition)
    _require_invertible(rho.matrix, "ρ")
    lhs = bs_cmi(rho, (a, b, c), "rev")
    rho_ab = rho.marginal([a, b])
    ab_half = embed_operator(linalg.sqrtm_psd(rho_ab.matrix), rho_ab.spec, rho.spec)
    factor = _op_norm(linalg.inv_sqrtm_psd(rho.matrix) @ ab_half) ** 2
    rotated = phi_rot(rho, b, [b, c], rho_ab, rule).matrix
    rhs = factor / rho.spec.dim_of(c) * linalg.trace_distance(rotated, rho.matrix)
    return BoundCheck("rotated_recovery_upper", lhs, rhs, "upper")


def all_bounds(rho: State, partition: Sequence[str]) -> BoundReport:
    """对三体态运行全部检查；奇异输入使对应检查标记为不适用。"""
    checks: List[BoundCheck] = []
    instance = conditional_expectation_instance(rho, partition)

    runs = [
        ("petz_dpi_lower", lambda: [petz_dpi_lower_bound(*instance)]),
        ("bs_dpi_lower", lambda: [bs_dpi_lower_bound(*instance)]),
        ("rev_cmi_lower_phi", lambda: [rev_cmi_lower_phi(rho, partition)]),
        ("eta_cmi", lambda: eta_cmi_bounds(rho, partition)),
        ("rotated_recovery_upper", lambda: [rotated_recovery_upper(rho, partition)]),
    ]
    for name, run in runs:
        try:
            checks.extend(run())
        except SingularityError as e:
            logger.warning(f"{name}: {e}，标记为不适用")
            checks.append(BoundCheck(name, math.nan, math.nan, applicable=False))
    return BoundReport(tuple(checks))
