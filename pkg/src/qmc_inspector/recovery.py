"""
恢复映射与饱和判据。

一般信道上的 Petz 映射、BS 映射及其对称化版本；作用在带标签子系统上的三体特化
(P, B, B^sym, Φ, Φ^rot, 旋转 Petz)；饱和条件的四向检查、乘法域检验以及饱和对的构造。
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import linalg
from .core import (
    CPMap,
    KrausChannel,
    Operator,
    SeedLike,
    State,
    SystemSpec,
    apply_channel,
    embed_operator,
    random_state,
    random_state_mixed_marginal,
    random_unitary,
)
from .divergences import SATURATION_FUNCTIONS, bs_entropy, maximal_f_divergence, umegaki
from .utils import (
    DEFAULT_TOLERANCES,
    EtaBNotMaximallyMixed,
    InvariantViolation,
    NonUnital,
    SingularMarginal,
    SingularSigma,
    SpecMismatch,
    logger,
)


# --- 一般信道上的恢复映射 ---


def _check_channel_input(sigma: State, ch: KrausChannel):
    if sigma.spec != ch.in_spec:
        raise SpecMismatch(f"σ 的规格 {sigma.spec.labels} 与信道输入 {ch.in_spec.labels} 不符")


def _out_matrix(ch: KrausChannel, X) -> np.ndarray:
    x = X.matrix if isinstance(X, Operator) else np.asarray(X, dtype=complex)
    d = ch.out_spec.total_dim
    if x.shape != (d, d):
        raise SpecMismatch(f"输入形状 {x.shape} 与信道输出维数 {d} 不符")
    return x


def _require_in_support(t_sigma: np.ndarray, x: np.ndarray):
    p = linalg.support_projector(t_sigma)
    q = np.eye(p.shape[0]) - p
    leak = np.linalg.norm(q @ x, "fro") + np.linalg.norm(x @ q, "fro")
    scale = max(1.0, float(np.linalg.norm(x, "fro")))
    if leak > 10 * linalg.default_support_tol(p.shape[0]) * scale:
        raise SingularSigma(f"X 在 supp T(σ) 之外有分量 (泄漏 {leak:.3e})")


def petz_recover(sigma: State, ch: KrausChannel, X) -> np.ndarray:
    """σ^{1/2} T*(T(σ)^{-1/2} X T(σ)^{-1/2}) σ^{1/2}，逆均取支撑上的伪逆。"""
    _check_channel_input(sigma, ch)
    x = _out_matrix(ch, X)
    t_isqrt = linalg.inv_sqrtm_psd(ch.apply(sigma.matrix))
    s_sqrt = linalg.sqrtm_psd(sigma.matrix)
    return s_sqrt @ ch.adjoint(t_isqrt @ x @ t_isqrt) @ s_sqrt


def bs_recover(sigma: State, ch: KrausChannel, X) -> np.ndarray:
    """σ T*(T(σ)^{-1} X)。线性、保迹，但一般不保持正性甚至 Hermitian 性。"""
    _check_channel_input(sigma, ch)
    x = _out_matrix(ch, X)
    t_sigma = ch.apply(sigma.matrix)
    _require_in_support(t_sigma, x)
    return sigma.matrix @ ch.adjoint(linalg.pinv_psd(t_sigma) @ x)


def bs_recover_sym(sigma: State, ch: KrausChannel, X) -> np.ndarray:
    """(σ T*(T(σ)^{-1} X X* T(σ)^{-1}) σ)^{1/2}；对 Hermitian X 即 X² 版本。"""
    _check_channel_input(sigma, ch)
    x = _out_matrix(ch, X)
    t_sigma = ch.apply(sigma.matrix)
    _require_in_support(t_sigma, x)
    t_inv = linalg.pinv_psd(t_sigma)
    inner = sigma.matrix @ ch.adjoint(t_inv @ x @ x.conj().T @ t_inv) @ sigma.matrix
    return linalg.sqrtm_psd(linalg.hermitize(inner, 1e-8))


def petz_dual_map(sigma: State, ch: KrausChannel) -> CPMap:
    """T_σ(X) = T(σ)^{-1/2} T(σ^{1/2} X σ^{1/2}) T(σ)^{-1/2}，Kraus 族 T(σ)^{-1/2} K_i σ^{1/2}。"""
    _check_channel_input(sigma, ch)
    t_isqrt = linalg.inv_sqrtm_psd(ch.apply(sigma.matrix))
    s_sqrt = linalg.sqrtm_psd(sigma.matrix)
    return CPMap(ch.in_spec, ch.out_spec, tuple(t_isqrt @ k @ s_sqrt for k in ch.kraus))


# --- 三体特化：在带标签的腿上作用 ---


@dataclass(frozen=True, eq=False)
class _Legs:
    """source → target 的作用范围：X 定义在 x_spec 上，输出定义在 out_spec 上。"""

    source: str
    target: Tuple[str, ...]
    source_spec: SystemSpec
    target_spec: SystemSpec
    out_spec: SystemSpec
    x: np.ndarray

    def up(self, m: np.ndarray, spec: SystemSpec) -> np.ndarray:
        return embed_operator(m, spec, self.out_spec)


def _layout(ref: State, source: str, target: Iterable[str], X) -> _Legs:
    target = tuple(target)
    if source not in target:
        raise InvariantViolation(f"目标子系统 {list(target)} 必须包含源子系统 '{source}'")
    if not isinstance(X, Operator):
        raise SpecMismatch("输入必须是绑定了子系统规格的 Operator")
    x_labels = set(X.spec.labels)
    if source not in x_labels:
        raise SpecMismatch(f"输入算子不包含源子系统 '{source}'")
    added = set(target) - {source}
    if added & x_labels:
        raise SpecMismatch(f"输入算子已经包含目标子系统 {sorted(added & x_labels)}")
    out_spec = ref.spec.sub(x_labels | set(target))
    return _Legs(
        source=source,
        target=target,
        source_spec=ref.spec.sub([source]),
        target_spec=ref.spec.sub(target),
        out_spec=out_spec,
        x=embed_operator(X.matrix, X.spec, out_spec),
    )


def _marginals(ref: State, legs: _Legs) -> Tuple[np.ndarray, np.ndarray]:
    return ref.marginal([legs.source]).matrix, ref.marginal(legs.target).matrix


def _require_invertible(m: np.ndarray, what: str):
    if not linalg.is_full_rank(m):
        raise SingularMarginal(f"边缘态 {what} 不可逆")


def petz_map(ref: State, source: str, target: Iterable[str], X: Operator) -> Operator:
    """P_{S→T}(X) = ρ_T^{1/2} ρ_S^{-1/2} X ρ_S^{-1/2} ρ_T^{1/2}。"""
    legs = _layout(ref, source, target, X)
    rho_s, rho_t = _marginals(ref, legs)
    k = legs.up(linalg.sqrtm_psd(rho_t), legs.target_spec) @ legs.up(
        linalg.inv_sqrtm_psd(rho_s), legs.source_spec
    )
    return Operator(legs.out_spec, k @ legs.x @ k.conj().T)


def bs_map(ref: State, source: str, target: Iterable[str], X: Operator) -> Operator:
    """B_{S→T}(X) = ρ_T ρ_S^{-1} X。"""
    legs = _layout(ref, source, target, X)
    rho_s, rho_t = _marginals(ref, legs)
    k = legs.up(rho_t, legs.target_spec) @ legs.up(linalg.pinv_psd(rho_s), legs.source_spec)
    return Operator(legs.out_spec, k @ legs.x)


def bs_sym_map(ref: State, source: str, target: Iterable[str], X: Operator) -> Operator:
    """B^sym_{S→T}(X) = (ρ_T ρ_S^{-1} X X* ρ_S^{-1} ρ_T)^{1/2}。"""
    legs = _layout(ref, source, target, X)
    rho_s, rho_t = _marginals(ref, legs)
    k = legs.up(rho_t, legs.target_spec) @ legs.up(linalg.pinv_psd(rho_s), legs.source_spec)
    inner = k @ legs.x @ legs.x.conj().T @ k.conj().T
    return Operator(legs.out_spec, linalg.sqrtm_psd(linalg.hermitize(inner, 1e-8)))


def _phi_kernel(rho_s: np.ndarray, rho_t: np.ndarray, legs: _Legs) -> np.ndarray:
    """K = ρ_S^{1/2} (ρ_S^{-1/2} ρ_T ρ_S^{-1/2})^{1/2} ρ_S^{-1/2}，定义在 target 上。"""
    s_half = embed_operator(linalg.sqrtm_psd(rho_s), legs.source_spec, legs.target_spec)
    s_ihalf = embed_operator(linalg.inv_sqrtm_psd(rho_s), legs.source_spec, legs.target_spec)
    m = s_ihalf @ rho_t @ s_ihalf
    return s_half @ linalg.sqrtm_psd(m) @ s_ihalf


def phi_map(
    ref: State, source: str, target: Iterable[str], X: Operator, allow_singular: bool = False
) -> Operator:
    """
    Φ_{S→T}(X) = K X K*。

    源边缘态必须可逆；allow_singular=True 时改为支撑上的伪逆 (秩亏的 ρ_B)。
    """
    legs = _layout(ref, source, target, X)
    rho_s, rho_t = _marginals(ref, legs)
    if not allow_singular:
        _require_invertible(rho_s, legs.source)
    k = legs.up(_phi_kernel(rho_s, rho_t, legs), legs.target_spec)
    return Operator(legs.out_spec, k @ legs.x @ k.conj().T)


def polar_factor(ref: State, source: str, target: Iterable[str]) -> Operator:
    """ρ_T^{1/2} ρ_S^{-1/2} 的极分解酉因子 W，定义在 target 上。"""
    target = tuple(target)
    target_spec = ref.spec.sub(target)
    rho_s = ref.marginal([source]).matrix
    _require_invertible(rho_s, source)
    rho_t = ref.marginal(target).matrix
    a = linalg.sqrtm_psd(rho_t) @ embed_operator(
        linalg.inv_sqrtm_psd(rho_s), ref.spec.sub([source]), target_spec
    )
    w, _ = linalg.polar_unitary(a)
    return Operator(target_spec, w)


def phi_map_polar(ref: State, source: str, target: Iterable[str], X: Operator) -> Operator:
    """Φ 的 W 形式：ρ_T^{1/2} W ρ_S^{-1/2} X ρ_S^{-1/2} W* ρ_T^{1/2}。"""
    legs = _layout(ref, source, target, X)
    rho_s, rho_t = _marginals(ref, legs)
    w = polar_factor(ref, source, legs.target).matrix
    k = (
        linalg.sqrtm_psd(rho_t)
        @ w
        @ embed_operator(linalg.inv_sqrtm_psd(rho_s), legs.source_spec, legs.target_spec)
    )
    k = legs.up(k, legs.target_spec)
    return Operator(legs.out_spec, k @ legs.x @ k.conj().T)


# --- β₀ 积分规则 ---


def beta0_density(t):
    return np.pi / (2.0 * (np.cosh(np.pi * np.asarray(t, dtype=float)) + 1.0))


def beta0_cdf(t):
    """β₀ 的原函数 (1/2) tanh(πt/2)，在 ±∞ 处取 ±1/2。"""
    return 0.5 * np.tanh(np.pi * np.asarray(t, dtype=float) / 2.0)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """[−T, T] 上单位宽度分段的 Gauss–Legendre 规则，权重已乘以 β₀。"""

    nodes: np.ndarray
    weights: np.ndarray
    half_width: float = 12.0
    panels_per_unit: int = 1
    nodes_per_panel: int = 32

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape:
            raise InvariantViolation("积分节点与权重的数量不一致")
        if np.any(self.weights <= 0):
            raise InvariantViolation("积分权重必须为正")

    @classmethod
    def beta0(
        cls, half_width: float = 12.0, panels_per_unit: int = 1, nodes_per_panel: int = 32
    ) -> "QuadratureRule":
        x, w = leggauss(nodes_per_panel)
        n_panels = int(round(2 * half_width * panels_per_unit))
        edges = np.linspace(-half_width, half_width, n_panels + 1)
        nodes, weights = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid, half = (lo + hi) / 2, (hi - lo) / 2
            t = mid + half * x
            nodes.append(t)
            weights.append(half * w * beta0_density(t))
        rule = cls(
            nodes=np.concatenate(nodes),
            weights=np.concatenate(weights),
            half_width=half_width,
            panels_per_unit=panels_per_unit,
            nodes_per_panel=nodes_per_panel,
        )
        logger.debug(f"β₀ 积分规则: {rule.size} 个节点, 总权重 {rule.total_weight():.16f}")
        return rule

    def refined(self) -> "QuadratureRule":
        return QuadratureRule.beta0(self.half_width, 2 * self.panels_per_unit, self.nodes_per_panel)

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    def total_weight(self) -> float:
        return float(np.sum(self.weights))


class _Spectral:
    """半正定矩阵的特征分解缓存，用于反复计算复幂 M^p (只作用于支撑)。"""

    def __init__(self, m: np.ndarray):
        eig = linalg.eig_hermitian(m)
        tol = linalg.default_support_tol(eig.eigenvalues.size)
        self.mask = linalg.support_mask(eig.eigenvalues, tol)
        self.logs = np.zeros(eig.eigenvalues.size)
        self.logs[self.mask] = np.log(eig.eigenvalues[self.mask])
        self.q = eig.eigenvectors

    def power(self, p: complex) -> np.ndarray:
        values = np.where(self.mask, np.exp(p * self.logs), 0.0)
        return (self.q * values) @ self.q.conj().T


def phi_rot(
    ref: State,
    source: str,
    target: Iterable[str],
    X: Operator,
    rule: Optional[QuadratureRule] = None,
) -> Operator:
    """
    Φ^rot_{S→T}(X) = ∫ dt β₀(t) K_t X K_t*，K_t = ρ_S^{a} M^{a} ρ_S^{−a}，a = (1 − it)/2，
    M = ρ_S^{-1/2} ρ_T ρ_S^{-1/2}。积分由 rule 离散化。
    """
    rule = rule or QuadratureRule.beta0()
    legs = _layout(ref, source, target, X)
    rho_s, rho_t = _marginals(ref, legs)
    _require_invertible(rho_s, legs.source)

    s_up = legs.up(rho_s, legs.source_spec)
    s_ihalf = legs.up(linalg.inv_sqrtm_psd(rho_s), legs.source_spec)
    m_up = s_ihalf @ legs.up(rho_t, legs.target_spec) @ s_ihalf
    s_spec, m_spec = _Spectral(s_up), _Spectral(m_up)

    acc = np.zeros_like(legs.x)
    for t, w in zip(rule.nodes, rule.weights):
        a = (1.0 - 1j * t) / 2.0
        k = s_spec.power(a) @ m_spec.power(a) @ s_spec.power(-a)
        acc += w * (k @ legs.x @ k.conj().T)
    return Operator(legs.out_spec, acc)


def rotated_petz(
    eta_ref: State, source: str, target: Iterable[str], t: float, X: Operator
) -> Operator:
    """R^t_{S→T}(X) = d_S η_T^{1/2 − it} X η_T^{1/2 + it}，要求 η_S = τ_S。"""
    legs = _layout(eta_ref, source, target, X)
    eta_s, eta_t = _marginals(eta_ref, legs)
    d_s = eta_s.shape[0]
    gap = linalg.norm(eta_s - np.eye(d_s) / d_s, "trace")
    if gap > 1e-8:
        raise EtaBNotMaximallyMixed(f"η_{source} 不是最大混合态 (偏差 {gap:.3e})")
    k = legs.up(linalg.mat_power(eta_t, 0.5 - 1j * t), legs.target_spec)
    return Operator(legs.out_spec, d_s * (k @ legs.x @ k.conj().T))


# --- 饱和条件 ---


@dataclass(frozen=True)
class SaturationReport:
    d_gap: float
    bs_gap: float
    residual_b: float
    residual_bsym: float
    moment_gap: float
    f_gaps: Dict[str, float] = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCES.verdict

    @property
    def verdicts(self) -> Dict[str, bool]:
        tol = self.tolerance
        return {
            "i": abs(self.bs_gap) <= tol,
            "ii": all(abs(g) <= tol for g in self.f_gaps.values()) and abs(self.moment_gap) <= tol,
            "iii": self.residual_b <= tol,
            "iv": self.residual_bsym <= tol,
        }

    @property
    def saturated(self) -> bool:
        return all(self.verdicts.values())

    @property
    def consistent(self) -> bool:
        values = set(self.verdicts.values())
        return len(values) == 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d_gap": self.d_gap,
            "bs_gap": self.bs_gap,
            "residual_b": self.residual_b,
            "residual_bsym": self.residual_bsym,
            "moment_gap": self.moment_gap,
            "f_gaps": dict(self.f_gaps),
            "tolerance": self.tolerance,
            "verdicts": self.verdicts,
        }

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        rows: List[List[Any]] = [
            ["d_gap", self.d_gap],
            ["bs_gap", self.bs_gap],
            ["residual_b", self.residual_b],
            ["residual_bsym", self.residual_bsym],
            ["moment_gap", self.moment_gap],
        ]
        rows.extend([f"f_gap[{name}]", gap] for name, gap in self.f_gaps.items())
        return ["quantity", "value"], rows

    def summary(self) -> List[str]:
        marks = ", ".join(f"({k}) {'是' if v else '否'}" for k, v in self.verdicts.items())
        return [f"饱和条件: {marks}"]


def check_saturation(
    rho: State, sigma: State, ch: KrausChannel, tol: float = DEFAULT_TOLERANCES.verdict
) -> SaturationReport:
    _check_channel_input(sigma, ch)
    if not linalg.is_full_rank(sigma.matrix):
        raise SingularSigma("饱和检查要求 σ 可逆")
    t_rho, t_sigma = apply_channel(ch, rho), apply_channel(ch, sigma)

    d_gap = umegaki(rho, sigma).value - umegaki(t_rho, t_sigma).value
    bs_gap = bs_entropy(rho, sigma).value - bs_entropy(t_rho, t_sigma).value
    f_gaps = {
        name: maximal_f_divergence(rho, sigma, f)
        - maximal_f_divergence(t_rho, t_sigma, f, restrict_to_support=True)
        for name, f in SATURATION_FUNCTIONS.items()
    }

    def moment(r: np.ndarray, s: np.ndarray) -> float:
        return float(np.trace(r @ r @ linalg.pinv_psd(s)).real)

    moment_gap = moment(rho.matrix, sigma.matrix) - moment(t_rho.matrix, t_sigma.matrix)

    residual_b = linalg.trace_distance(bs_recover(sigma, ch, t_rho.matrix), rho.matrix)
    residual_bsym = linalg.trace_distance(bs_recover_sym(sigma, ch, t_rho.matrix), rho.matrix)

    report = SaturationReport(
        d_gap=d_gap,
        bs_gap=bs_gap,
        residual_b=residual_b,
        residual_bsym=residual_bsym,
        moment_gap=moment_gap,
        f_gaps=f_gaps,
        tolerance=tol,
    )
    if not report.consistent:
        logger.warning(f"饱和条件的判定不一致: {report.verdicts}")
    return report


def multiplicative_domain_check(
    N: CPMap, X, tol: float = DEFAULT_TOLERANCES.verdict
) -> Tuple[bool, np.ndarray]:
    """
    检查 N(X²) = N(X)²，并在成立时验证 Stinespring 交织关系 (Y ⊗ I_E) V = V X。

    返回 (是否在乘法域中, Y = N(X))。容差相对 max(1, ‖X‖_F²) 缩放。
    """
    if not N.is_unital():
        raise NonUnital(f"映射不是保单位的: ‖N(I) − I‖_F = {N.unitality_defect():.3e}")
    x = linalg.hermitize(X, 1e-8)
    y = N.apply(x)
    scale = max(1.0, float(np.linalg.norm(x, "fro")) ** 2)
    defect = float(np.linalg.norm(N.apply(x @ x) - y @ y, "fro"))
    in_domain = defect <= tol * scale
    if in_domain:
        v = N.stinespring()
        n_env = len(N.kraus)
        intertwine = float(np.linalg.norm(np.kron(y, np.eye(n_env)) @ v - v @ x, "fro"))
        if intertwine > tol * scale:
            logger.warning(f"乘法域检验通过但交织关系偏差为 {intertwine:.3e}")
            in_domain = False
    logger.debug(f"乘法域检验: ‖N(X²) − N(X)²‖_F = {defect:.3e}")
    return in_domain, y


# --- 饱和对的构造 ---


def construct_saturating_pair(
    block_dims: Sequence[Tuple[int, int]], env_dim: int, seed: SeedLike = 0
) -> Tuple[State, State, KrausChannel]:
    """
    构造使 BS 熵数据处理不等式取等号的 (ρ, σ, T)。

    在 K ⊗ E 上取 ρ₀ = (G^{1/2}S*⊗I)(⊕ η_n^L ⊗ η_n^{RE})(S G^{1/2}⊗I)，
    σ₀ = (G^{1/2}S*⊗I)(⊕ I_n^L ⊗ η_n^{RE})(S G^{1/2}⊗I)，其中 tr_E η_n^{RE} = I_n^R，
    再用随机酉 U 旋转，信道为 T = tr_E[U · U*]，从而 T(σ) = G。
    """
    dims = [(int(dl), int(dr)) for dl, dr in block_dims]
    if not dims or env_dim < 1 or any(dl < 1 or dr < 1 for dl, dr in dims):
        raise InvariantViolation(f"块维数与环境维数必须为正: {block_dims}, {env_dim}")
    rng = np.random.default_rng(seed)
    d_k = sum(dl * dr for dl, dr in dims)
    d_e = int(env_dim)

    s = random_unitary(d_k, rng)
    g = random_state(SystemSpec.from_pairs([("K", d_k)]), floor=0.1, seed=rng).matrix
    conj = np.kron(linalg.sqrtm_psd(g) @ s.conj().T, np.eye(d_e))

    core_rho = np.zeros((d_k * d_e, d_k * d_e), dtype=complex)
    core_sigma = np.zeros_like(core_rho)
    offset = 0
    for dl, dr in dims:
        eta_l = random_state(SystemSpec.from_pairs([("L", dl)]), floor=0.1, seed=rng).matrix
        # η^{RE}：第二个因子 E 上的偏迹为 I_R
        re_spec = SystemSpec.from_pairs([("R", dr), ("E", d_e)])
        eta_re = random_state_mixed_marginal(re_spec, "R", seed=rng).matrix * dr
        size = dl * dr * d_e
        sl = slice(offset * d_e, offset * d_e + size)
        core_rho[sl, sl] = np.kron(eta_l, eta_re)
        core_sigma[sl, sl] = np.kron(np.eye(dl), eta_re)
        offset += dl * dr

    rho0 = conj @ core_rho @ conj.conj().T
    sigma0 = conj @ core_sigma @ conj.conj().T
    rho0 = rho0 / np.trace(rho0).real
    sigma0 = sigma0 / np.trace(sigma0).real

    u = random_unitary(d_k * d_e, rng)
    in_spec = SystemSpec.from_pairs([("H", d_k * d_e)])
    out_spec = SystemSpec.from_pairs([("K", d_k)])
    rho = State(in_spec, u.conj().T @ rho0 @ u)
    sigma = State(in_spec, u.conj().T @ sigma0 @ u)
    ch = KrausChannel.from_isometry(u, in_spec, out_spec, d_e)
    logger.debug(f"饱和对: 块 {dims}, d_K = {d_k}, d_E = {d_e}")
    return rho, sigma, ch
