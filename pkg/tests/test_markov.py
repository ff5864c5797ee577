import numpy as np
import pytest

from qmc_inspector import linalg
from qmc_inspector.core import State, random_state, random_state_mixed_marginal
from qmc_inspector.markov import (
    DecompositionB,
    block_structures,
    bs_family_from_qmc,
    builtin_example,
    central_marginal,
    certify,
    eta_from_rho,
    hamiltonian_form,
    planted_decomposition,
    qmc_within_bs_check,
    random_bs_qmc,
    random_qmc,
    reconstruct,
    search_bs_not_qmc,
    structure_decompose,
)
from qmc_inspector.utils import (
    EtaBNotMaximallyMixed,
    InvariantViolation,
    NotBSQMC,
    NotCommutingMarginals,
)

from .conftest import spec_of

ABC = ("A", "B", "C")


def test_builtin_example_is_a_state(bs_example):
    """内置示例是 2⊗2⊗2 上迹为 1 的实对称态"""
    assert bs_example.labels == ["A", "B", "C"]
    assert np.trace(bs_example.matrix).real == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(bs_example.matrix, bs_example.matrix.T)


def test_eta_has_maximally_mixed_b(bs_example):
    """ρ_B 可逆时 η_B = τ_B"""
    eta = eta_from_rho(bs_example, "B")
    assert np.allclose(eta.marginal(["B"]).matrix, np.eye(2) / 2, atol=1e-12)


# --- 认证 ---


def test_certify_example(bs_example):
    """示例态是 BS-QMC 但不是 QMC"""
    report = certify(bs_example, ABC)
    assert report.summary()[0] == "BS-QMC: yes, QMC: no"
    assert report.res_b < 1e-9 and report.res_phi < 1e-8
    assert report.res_petz > 1e-4
    assert report.cmi > 1e-4
    assert not report.marginal


def test_certify_product(product_state):
    """乘积态两者都是"""
    report = certify(product_state, ABC)
    assert report.summary()[0] == "BS-QMC: yes, QMC: yes"
    assert report.res_petz < 1e-10


def test_certify_ghz(ghz):
    """GHZ 态两者都不是"""
    report = certify(ghz, ABC)
    assert not report.verdict_bsqmc and not report.verdict_qmc


def test_bs_qmc_equivalent_conditions():
    """构造的 BS-QMC 上五个等价条件同时成立"""
    for seed in range(10):
        rho = random_bs_qmc(2, [(2, 1), (1, 2)], 2, seed=seed)
        report = certify(rho, ABC)
        assert report.verdict_bsqmc
        assert report.res_bsym < 1e-8
        assert report.res_phi < 1e-8
        assert abs(report.bs_cmi_rev) < 1e-8
        assert report.eta_commutator < 1e-8
        assert report.product_form_residual < 1e-8
        assert report.res_eta_petz < 1e-8
        assert abs(report.cmi_eta) < 1e-8


def test_generic_states_fail_every_condition(random_tripartite):
    """随机满秩态上五个条件同时不成立"""
    for seed in range(10):
        report = certify(random_tripartite(seed), ABC)
        assert not report.verdict_bsqmc and not report.verdict_qmc
        assert min(report.res_b, report.res_bsym, report.res_phi) > 1e-6
        assert report.bs_cmi_rev > 1e-8
        assert report.eta_commutator > 1e-6
        assert report.product_form_residual > 1e-6


def test_cert_report_dict(bs_example):
    """报告字典包含全部残差与判定"""
    data = certify(bs_example, ABC).to_dict()
    assert data["verdict_bsqmc"] is True and data["verdict_qmc"] is False
    assert {"res_petz", "res_b", "res_bsym", "res_phi", "cmi", "bs_cmi_rev"} <= set(data)


# --- 块结构 ---


def test_block_structures():
    """d_B = 2 有三种块结构，每种的维数之和都是 d_B"""
    assert sorted(block_structures(2)) == sorted([((2, 1),), ((1, 2),), ((1, 1), (1, 1))])
    for d_b in (3, 4):
        structures = block_structures(d_b)
        assert len(set(structures)) == len(structures)
        assert all(sum(dl * dr for dl, dr in s) == d_b for s in structures)


@pytest.mark.parametrize(
    "blocks",
    [
        [(2, 1), (1, 2)],
        [(1, 1), (1, 1)],
        [(2, 2)],
        [(1, 3)],
        [(1, 2), (1, 1)],
        [(1, 1), (1, 1), (1, 1), (1, 1)],
    ],
)
def test_structure_round_trip(blocks):
    """植入的块结构被分解恢复，重构回到原态"""
    rho = random_bs_qmc(2, blocks, 2, seed=1)
    d = structure_decompose(rho, ABC, seed=2)
    assert sorted(d.block_dims) == sorted(blocks)
    assert sum(blk.weight for blk in d.blocks) == pytest.approx(1.0, abs=1e-10)
    u = d.U_B
    assert np.allclose(u @ u.conj().T, np.eye(u.shape[0]), atol=1e-8)
    rebuilt = reconstruct(d, rho.marginal(["B"]))
    assert linalg.trace_distance(rebuilt.matrix, rho.matrix) < 1e-6


def test_decompose_builtin_example(bs_example):
    """示例态的中心数值上只有平凡部分时也能分解"""
    d = structure_decompose(bs_example, ABC, seed=0)
    assert sum(dl * dr for dl, dr in d.block_dims) == 2
    rebuilt = reconstruct(d, bs_example.marginal(["B"]))
    assert linalg.trace_distance(rebuilt.matrix, bs_example.matrix) < 1e-7


def test_bs_qmc_sweep_over_block_structures():
    """200 个 d_B ≤ 4 的随机 BS-QMC：各条件一致，块结构与重构都能恢复"""
    structures = block_structures(2) + block_structures(3) + block_structures(4)
    recovered = 0
    for seed in range(200):
        blocks = list(structures[seed % len(structures)])
        rho = random_bs_qmc(2, blocks, 2, seed=seed)
        report = certify(rho, ABC)
        assert report.verdict_bsqmc
        assert abs(report.bs_cmi_rev) <= 1e-8
        assert report.eta_commutator <= 1e-8
        within = qmc_within_bs_check(rho, ABC)
        assert within.verdict_iv == report.verdict_qmc
        assert within.verdict_v == report.verdict_qmc
        try:
            d = structure_decompose(rho, ABC, seed=seed, require_certificate=False)
        except NotBSQMC:
            continue
        rebuilt = reconstruct(d, rho.marginal(["B"]))
        assert linalg.trace_distance(rebuilt.matrix, rho.matrix) < 1e-7
        if sorted(d.block_dims) == sorted(blocks):
            recovered += 1
    assert recovered >= 195


def test_non_bs_qmc_sweep():
    """200 个随机满秩态上各条件同时不成立，分解被拒绝"""
    for seed in range(200):
        d_b = 2 + seed % 3
        rho = random_state(spec_of(("A", 2), ("B", d_b), ("C", 2)), floor=0.05, seed=seed)
        report = certify(rho, ABC)
        assert not report.verdict_bsqmc and not report.verdict_qmc
        assert report.bs_cmi_rev > 1e-8
        assert report.eta_commutator > 1e-8
        with pytest.raises(NotBSQMC):
            structure_decompose(rho, ABC, require_certificate=False)


def test_structure_decompose_rejects_non_bs_qmc(random_tripartite):
    """未通过认证的态不能分解"""
    with pytest.raises(NotBSQMC):
        structure_decompose(random_tripartite(3), ABC)


def test_decomposition_invariants():
    """块维数之和与权重之和必须一致"""
    d = planted_decomposition(2, [(1, 2)], 2, seed=4)
    with pytest.raises(InvariantViolation):
        DecompositionB(d.spec, d.partition, d.U_B, d.blocks + d.blocks)


def test_reconstruct_with_maximally_mixed_b_is_qmc():
    """η_B = τ_B 的重构是 QMC"""
    eta = random_qmc(2, [(2, 1), (1, 2)], 2, seed=5)
    assert np.allclose(eta.marginal(["B"]).matrix, np.eye(4) / 4, atol=1e-10)
    report = certify(eta, ABC)
    assert report.verdict_qmc and report.verdict_bsqmc


# --- 由 QMC 生成 BS-QMC ---


def test_bs_family_marginal_and_certificate():
    """族成员的 B 边缘就是 X_B，且是 BS-QMC"""
    d = planted_decomposition(2, [(2, 1), (1, 2)], 2, seed=6)
    eta = reconstruct(d, State.maximally_mixed(d.spec.sub(["B"])))
    x_b = central_marginal(d, seed=7)
    rho = bs_family_from_qmc(eta, x_b)
    assert linalg.trace_distance(rho.marginal(["B"]).matrix, x_b.matrix) < 1e-8
    report = certify(rho, ABC)
    assert report.verdict_bsqmc and report.verdict_qmc


def test_bs_family_rejects_bad_eta():
    """η_B 不是最大混合或 η 的边缘不对易时报错"""
    spec = spec_of(("A", 2), ("B", 2), ("C", 2))
    x_b = State.maximally_mixed(spec.sub(["B"]))
    with pytest.raises(EtaBNotMaximallyMixed):
        bs_family_from_qmc(builtin_example(), x_b)
    eta = random_state_mixed_marginal(spec, "B", seed=8)
    with pytest.raises(NotCommutingMarginals):
        bs_family_from_qmc(eta, x_b)


def test_hamiltonian_form():
    """H_AB 与 H_BC 对易并重构原态"""
    rho = random_bs_qmc(2, [(2, 1), (1, 2)], 2, seed=9)
    form = hamiltonian_form(rho, ABC)
    assert form.commutator_norm < 1e-7
    assert form.reconstruction_residual < 1e-7
    assert form.h_ab.labels == ["A", "B"] and form.h_bc.labels == ["B", "C"]


def test_hamiltonian_form_requires_bs_qmc(random_tripartite):
    """非 BS-QMC 报错"""
    with pytest.raises(NotBSQMC):
        hamiltonian_form(random_tripartite(10), ABC)


# --- BS-QMC 中的 QMC ---


def test_qmc_within_bs_on_example(bs_example):
    """示例态的两个 QMC 判据都不成立"""
    report = qmc_within_bs_check(bs_example, ABC)
    assert report.unitarity_defect < 1e-8
    assert not report.verdict_iv and not report.verdict_v


def test_qmc_within_bs_on_qmc():
    """ρ_B 位于中心时两个判据都成立"""
    d = planted_decomposition(2, [(2, 1), (1, 2)], 2, seed=11)
    eta = reconstruct(d, State.maximally_mixed(d.spec.sub(["B"])))
    rho = bs_family_from_qmc(eta, central_marginal(d, seed=12, scalar_blocks=True))
    report = qmc_within_bs_check(rho, ABC)
    assert report.verdict_iv and report.verdict_v
    assert max(report.rotated_commutators.values()) < 1e-7


# --- 反例搜索 ---


def test_search_finds_bs_qmc_that_is_not_qmc():
    """2⊗2⊗2 上的随机 BS-QMC 中存在非 QMC 的实例"""
    hits = search_bs_not_qmc((2, 2, 2), 30)
    assert hits
    for hit in hits:
        assert hit.blocks == ((1, 1), (1, 1))
        report = certify(hit.state, ABC)
        assert report.verdict_bsqmc and not report.verdict_qmc


def test_search_is_deterministic():
    """相同的种子区间给出相同的结果"""
    a = search_bs_not_qmc((2, 2, 2), 10, start=5)
    b = search_bs_not_qmc((2, 2, 2), 10, start=5)
    assert [h.seed for h in a] == [h.seed for h in b]
    for x, y in zip(a, b):
        assert np.array_equal(x.state.matrix, y.state.matrix)


def test_search_with_loose_tolerance_is_empty():
    """容差很大时没有命中"""
    assert search_bs_not_qmc((2, 2, 2), 10, tol=1.0) == []
