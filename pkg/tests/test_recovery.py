import numpy as np
import pytest

from qmc_inspector import linalg
from qmc_inspector.core import (
    KrausChannel,
    Operator,
    State,
    apply_channel,
    embed_operator,
    random_channel,
    random_state,
    tensor,
)
from qmc_inspector.markov import (
    bs_family_from_qmc,
    central_marginal,
    planted_decomposition,
    random_qmc,
    reconstruct,
)
from qmc_inspector.recovery import (
    QuadratureRule,
    beta0_cdf,
    bs_map,
    bs_recover,
    bs_recover_sym,
    check_saturation,
    construct_saturating_pair,
    multiplicative_domain_check,
    petz_dual_map,
    petz_map,
    petz_recover,
    phi_map,
    phi_map_polar,
    phi_rot,
    rotated_petz,
)
from qmc_inspector.utils import (
    EtaBNotMaximallyMixed,
    InvariantViolation,
    NonUnital,
    SingularMarginal,
    SingularSigma,
    SpecMismatch,
)

from .conftest import spec_of


def _ab_tau(rho):
    """ρ_AB ⊗ τ_C 与偏迹信道 tr_A。"""
    rho_ab = rho.marginal(["A", "B"])
    sigma = State(rho.spec, embed_operator(rho_ab.matrix, rho_ab.spec, rho.spec) / rho.spec.dim_of("C"))
    return sigma, KrausChannel.partial_trace(rho.spec, ["A"])


def _central_bs_qmc(seed):
    d = planted_decomposition(2, [(2, 1), (1, 2)], 2, seed=seed)
    eta = reconstruct(d, State.maximally_mixed(d.spec.sub(["B"])))
    return bs_family_from_qmc(eta, central_marginal(d, seed=seed, scalar_blocks=True))


# --- 一般信道上的恢复映射 ---


def test_petz_identity_channel():
    """恒等信道上 Petz 映射是恒等"""
    spec = spec_of(("A", 3))
    sigma = random_state(spec, floor=0.1, seed=1)
    x = random_state(spec, seed=2).matrix
    out = petz_recover(sigma, KrausChannel.identity(spec), x)
    assert np.allclose(out, x, atol=1e-10)


def test_recovery_maps_fix_sigma():
    """三种映射都把 T(σ) 恢复为 σ"""
    spec_in, spec_out = spec_of(("A", 4)), spec_of(("B", 2))
    ch = random_channel(spec_in, spec_out, 2, seed=3)
    sigma = random_state(spec_in, floor=0.1, seed=4)
    t_sigma = ch.apply(sigma.matrix)
    for recover in (petz_recover, bs_recover, bs_recover_sym):
        assert linalg.trace_distance(recover(sigma, ch, t_sigma), sigma.matrix) < 1e-9


def test_petz_recovers_qmc():
    """QMC 由 Petz 映射从 ρ_BC 精确恢复"""
    rho = random_qmc(2, [(2, 1), (1, 2)], 2, seed=5)
    sigma, ch = _ab_tau(rho)
    out = petz_recover(sigma, ch, rho.marginal(["B", "C"]).matrix)
    assert linalg.trace_distance(out, rho.matrix) < 1e-8


def test_petz_maps_states_to_states():
    """Petz 映射把态映为态"""
    spec_in, spec_out = spec_of(("A", 3)), spec_of(("B", 2))
    ch = random_channel(spec_in, spec_out, 3, seed=6)
    sigma = random_state(spec_in, floor=0.1, seed=7)
    out = petz_recover(sigma, ch, random_state(spec_out, seed=8).matrix)
    assert abs(np.trace(out) - 1) < 1e-10
    assert np.linalg.eigvalsh(linalg.hermitize(out))[0] > -1e-10


def test_bs_recover_identity_channel():
    """恒等信道上 BS 映射是恒等，对称版对半正定 X 也是"""
    spec = spec_of(("A", 2))
    sigma = random_state(spec, floor=0.1, seed=9)
    x = random_state(spec, seed=10).matrix
    ch = KrausChannel.identity(spec)
    assert np.allclose(bs_recover(sigma, ch, x), x)
    assert np.allclose(bs_recover_sym(sigma, ch, x), x, atol=1e-9)


def test_bs_recover_example(bs_example):
    """示例态满足 ρ = σ T*(T(σ)^{-1} ρ_BC)"""
    sigma, ch = _ab_tau(bs_example)
    out = bs_recover(sigma, ch, bs_example.marginal(["B", "C"]).matrix)
    assert linalg.trace_distance(out, bs_example.matrix) < 1e-9


def test_bs_recover_not_hermitian_preserving():
    """BS 映射的输出一般不是 Hermitian 矩阵"""
    spec_in, spec_out = spec_of(("A", 3)), spec_of(("B", 2))
    ch = random_channel(spec_in, spec_out, 2, seed=11)
    sigma = random_state(spec_in, floor=0.1, seed=12)
    rho = random_state(spec_in, seed=13)
    out = bs_recover(sigma, ch, ch.apply(rho.matrix))
    assert abs(np.trace(out) - 1) < 1e-10
    assert np.linalg.norm(out - out.conj().T) > 1e-6


def test_bs_recover_sym_is_positive():
    """对称化 BS 映射的输出半正定"""
    spec_in, spec_out = spec_of(("A", 3)), spec_of(("B", 2))
    ch = random_channel(spec_in, spec_out, 2, seed=14)
    sigma = random_state(spec_in, floor=0.1, seed=15)
    out = bs_recover_sym(sigma, ch, ch.apply(random_state(spec_in, seed=16).matrix))
    assert np.linalg.eigvalsh(out)[0] > -1e-10


def test_bs_recover_support_leak():
    """X 落在 supp T(σ) 之外时报错"""
    spec = spec_of(("A", 2))
    sigma = State(spec, np.diag([1.0, 0.0]))
    with pytest.raises(SingularSigma):
        bs_recover(sigma, KrausChannel.identity(spec), np.eye(2) / 2)


def test_recover_spec_mismatch():
    """σ 与信道输入规格不符时报错"""
    sigma = State.maximally_mixed(spec_of(("A", 2)))
    ch = KrausChannel.identity(spec_of(("A", 3)))
    with pytest.raises(SpecMismatch):
        petz_recover(sigma, ch, np.eye(3) / 3)


# --- 三体特化 ---


def test_phi_map_product_collapse():
    """ρ_A ⊗ ρ_B 上 Φ_{B→AB}(X) = ρ_A ⊗ X"""
    rho_a = random_state(spec_of(("A", 2)), seed=17)
    rho_b = random_state(spec_of(("B", 3)), floor=0.1, seed=18)
    ref = tensor(rho_a, rho_b)
    x = Operator(spec_of(("B", 3)), random_state(spec_of(("B", 3)), seed=19).matrix)
    out = phi_map(ref, "B", ["A", "B"], x)
    assert np.allclose(out.matrix, np.kron(rho_a.matrix, x.matrix), atol=1e-10)


def test_phi_map_recovers_example(bs_example):
    """示例态由 Φ_{B→AB} 从 ρ_BC 精确恢复"""
    out = phi_map(bs_example, "B", ["A", "B"], bs_example.marginal(["B", "C"]))
    assert out.labels == ["A", "B", "C"]
    assert linalg.trace_distance(out.matrix, bs_example.matrix) < 1e-8


def test_phi_map_matches_polar_form(random_tripartite):
    """Φ 与它的 W 形式一致"""
    for seed in range(10):
        rho = random_tripartite(seed)
        x = rho.marginal(["B", "C"])
        a = phi_map(rho, "B", ["A", "B"], x).matrix
        b = phi_map_polar(rho, "B", ["A", "B"], x).matrix
        assert linalg.trace_distance(a, b) < 1e-9


def test_phi_map_trace_bound(random_tripartite):
    """tr Φ(X) ≤ d_A ‖ρ_B^{-1}‖ tr X"""
    for seed in range(20):
        rho = random_tripartite(seed)
        x = random_state(rho.spec.sub(["B", "C"]), seed=seed + 100)
        out = phi_map(rho, "B", ["A", "B"], x)
        bound = 2 * linalg.inverse_norm(rho.marginal(["B"]).matrix)
        assert np.trace(out.matrix).real <= bound + 1e-10


def test_phi_map_singular_marginal():
    """ρ_B 奇异时 Φ 报错，允许伪逆时照常计算"""
    tau = State.maximally_mixed(spec_of(("A", 2)))
    zero = State(spec_of(("B", 2)), np.diag([1.0, 0.0]))
    rho = tensor(tensor(tau, zero), State.maximally_mixed(spec_of(("C", 2))))
    with pytest.raises(SingularMarginal):
        phi_map(rho, "B", ["A", "B"], rho.marginal(["B", "C"]))
    out = phi_map(rho, "B", ["A", "B"], rho.marginal(["B", "C"]), allow_singular=True)
    assert linalg.trace_distance(out.matrix, rho.matrix) < 1e-10


def test_layout_rejects_bad_legs(bs_example):
    """目标不含源、输入缺少源或已含目标时报错"""
    x = bs_example.marginal(["B", "C"])
    with pytest.raises(InvariantViolation):
        petz_map(bs_example, "B", ["A"], x)
    with pytest.raises(SpecMismatch):
        petz_map(bs_example, "B", ["A", "B"], bs_example.marginal(["C"]))
    with pytest.raises(SpecMismatch):
        petz_map(bs_example, "B", ["A", "B"], bs_example.marginal(["A", "B"]))


def test_tripartite_bs_map_on_example(bs_example):
    """B_{B→AB}(ρ_BC) = ρ_AB ρ_B^{-1} ρ_BC = ρ"""
    out = bs_map(bs_example, "B", ["A", "B"], bs_example.marginal(["B", "C"]))
    assert linalg.trace_distance(out.matrix, bs_example.matrix) < 1e-9


# --- β₀ 积分与 Φ^rot ---


def test_quadrature_weights_sum_to_one():
    """β₀ 积分规则的总权重为 1，且与闭式原函数一致"""
    rule = QuadratureRule.beta0()
    assert rule.total_weight() == pytest.approx(1.0, abs=1e-10)
    assert float(beta0_cdf(12.0) - beta0_cdf(-12.0)) == pytest.approx(1.0, abs=1e-15)
    assert rule.refined().size == 2 * rule.size


def test_phi_rot_commuting_equals_phi(spec222):
    """对角数据上 Φ^rot 等于 Φ"""
    rng = np.random.default_rng(20)
    p = rng.random(8) + 0.1
    rho = State(spec222, np.diag(p / p.sum()))
    x = rho.marginal(["B", "C"])
    a = phi_rot(rho, "B", ["A", "B"], x).matrix
    b = phi_map(rho, "B", ["A", "B"], x).matrix
    assert linalg.trace_distance(a, b) < 1e-9


def test_phi_rot_self_convergence(random_tripartite):
    """节点加密后 Φ^rot 的变化小于 1e-9"""
    rho = random_tripartite(21)
    x = rho.marginal(["B", "C"])
    rule = QuadratureRule.beta0()
    a = phi_rot(rho, "B", ["A", "B"], x, rule).matrix
    b = phi_rot(rho, "B", ["A", "B"], x, rule.refined()).matrix
    assert linalg.trace_distance(a, b) < 1e-9
    assert np.linalg.norm(a - a.conj().T) < 1e-10


def test_phi_rot_equals_phi_on_central_bs_qmc():
    """ρ_B 位于中心的 BS-QMC 上 Φ^rot 与 Φ 都精确恢复"""
    for seed in range(5):
        rho = _central_bs_qmc(seed)
        x = rho.marginal(["B", "C"])
        a = phi_rot(rho, "B", ["A", "B"], x).matrix
        b = phi_map(rho, "B", ["A", "B"], x).matrix
        assert linalg.trace_distance(a, b) < 1e-7
        assert linalg.trace_distance(a, rho.matrix) < 1e-7


def test_rotated_petz():
    """t=0 时等于 Petz 映射，对易边缘时与 t 无关且保迹"""
    eta = random_qmc(2, [(2, 1), (1, 2)], 2, seed=22)
    x = eta.marginal(["B", "C"])
    r0 = rotated_petz(eta, "B", ["A", "B"], 0.0, x).matrix
    assert linalg.trace_distance(r0, petz_map(eta, "B", ["A", "B"], x).matrix) < 1e-10
    for t in (-1.0, 1.0):
        rt = rotated_petz(eta, "B", ["A", "B"], t, x).matrix
        assert linalg.trace_distance(rt, r0) < 1e-9
        assert abs(np.trace(rt) - 1) < 1e-10


def test_rotated_petz_requires_maximally_mixed_b(bs_example):
    """η_B 不是最大混合态时报错"""
    with pytest.raises(EtaBNotMaximallyMixed):
        rotated_petz(bs_example, "B", ["A", "B"], 0.5, bs_example.marginal(["B", "C"]))


# --- 饱和条件 ---


def test_saturation_trivial_pair():
    """σ = ρ 时全部差值为 0，四个条件都成立"""
    spec = spec_of(("A", 2), ("B", 2))
    rho = random_state(spec, floor=0.1, seed=23)
    ch = KrausChannel.partial_trace(spec, ["A"])
    report = check_saturation(rho, rho, ch)
    assert abs(report.d_gap) < 1e-10 and abs(report.bs_gap) < 1e-10
    assert report.saturated


@pytest.mark.parametrize(
    "blocks, env_dim",
    [([(1, 2)], 2), ([(2, 1), (1, 2)], 2), ([(1, 1), (2, 1)], 3)],
)
def test_constructed_pairs_saturate(blocks, env_dim):
    """构造的饱和对满足四个条件与 BS 不动点"""
    for seed in range(5):
        rho, sigma, ch = construct_saturating_pair(blocks, env_dim, seed=seed)
        report = check_saturation(rho, sigma, ch)
        assert report.saturated, report.to_dict()
        assert report.bs_gap >= -1e-9
        fixed = bs_recover(sigma, ch, apply_channel(ch, rho).matrix)
        assert linalg.trace_distance(fixed, rho.matrix) < 1e-8


def test_random_pairs_fail_jointly():
    """随机的 (ρ, σ, T) 四个条件同时不成立"""
    spec = spec_of(("A", 2), ("B", 2))
    ch = KrausChannel.partial_trace(spec, ["A"])
    for seed in range(20):
        rho = random_state(spec, floor=0.05, seed=2 * seed)
        sigma = random_state(spec, floor=0.05, seed=2 * seed + 1)
        report = check_saturation(rho, sigma, ch)
        assert not any(report.verdicts.values())
        assert report.d_gap >= -1e-9 and report.bs_gap >= -1e-9


SATURATING_CONFIGS = [([(1, 2)], 2), ([(2, 1), (1, 2)], 2), ([(1, 1), (2, 1)], 3), ([(1, 2), (2, 1)], 3)]


def test_saturation_sweep():
    """100 个构造的饱和对都饱和，[ρ/σ] 都落在 T_σ 的乘法域中"""
    for seed in range(100):
        blocks, env_dim = SATURATING_CONFIGS[seed % len(SATURATING_CONFIGS)]
        rho, sigma, ch = construct_saturating_pair(blocks, env_dim, seed=seed)
        report = check_saturation(rho, sigma, ch)
        assert report.saturated, (seed, report.to_dict())
        s = linalg.inv_sqrtm_psd(sigma.matrix)
        ok, _ = multiplicative_domain_check(petz_dual_map(sigma, ch), s @ rho.matrix @ s)
        assert ok, seed


def test_random_pair_sweep():
    """100 个随机对上四个条件都不成立"""
    spec = spec_of(("A", 2), ("B", 2))
    ch = KrausChannel.partial_trace(spec, ["A"])
    for seed in range(100):
        rho = random_state(spec, floor=0.05, seed=1000 + 2 * seed)
        sigma = random_state(spec, floor=0.05, seed=1001 + 2 * seed)
        assert not any(check_saturation(rho, sigma, ch).verdicts.values()), seed



def test_saturation_requires_invertible_sigma():
    """σ 奇异时报错"""
    spec = spec_of(("A", 2))
    sigma = State(spec, np.diag([1.0, 0.0]))
    with pytest.raises(SingularSigma):
        check_saturation(sigma, sigma, KrausChannel.identity(spec))


# --- 乘法域 ---


def test_multiplicative_domain_identity():
    """恒等映射下任何 X 都在乘法域中"""
    spec = spec_of(("A", 3))
    x = np.diag([1.0, -2.0, 0.5])
    ok, y = multiplicative_domain_check(KrausChannel.identity(spec), x)
    assert ok and np.allclose(y, x)


def test_multiplicative_domain_rejects_non_unital():
    """完全求迹到一维不保单位，报错"""
    ch = KrausChannel.partial_trace(spec_of(("A", 2)), ["A"])
    with pytest.raises(NonUnital):
        multiplicative_domain_check(ch, np.eye(2))


def test_multiplicative_domain_generic_fails():
    """一般的保单位映射上随机 X 不在乘法域中"""
    spec = spec_of(("A", 2), ("B", 2))
    tau = KrausChannel.replace_with_maximally_mixed(spec, ["A"])
    x = linalg.hermitize(random_state(spec, seed=24).matrix)
    ok, _ = multiplicative_domain_check(tau, x)
    assert not ok


def test_ratio_in_multiplicative_domain_of_petz_dual():
    """饱和对的 [ρ/σ] 落在 T_σ 的乘法域中"""
    for seed in range(3):
        rho, sigma, ch = construct_saturating_pair([(2, 1), (1, 2)], 2, seed=seed)
        s = linalg.inv_sqrtm_psd(sigma.matrix)
        ok, _ = multiplicative_domain_check(petz_dual_map(sigma, ch), s @ rho.matrix @ s)
        assert ok
