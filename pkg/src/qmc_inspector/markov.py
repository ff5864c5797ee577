"""
(BS-)量子马尔可夫链的结构：η 对应、认证、块结构分解与重构、由 QMC 生成 BS-QMC 族、
Hamiltonian 形式、BS-QMC 中的 QMC 判据，以及内置的 8×8 示例态。
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from . import linalg
from .core import (
    Operator,
    SeedLike,
    State,
    SystemSpec,
    check_partition,
    embed_operator,
    partial_trace_matrix,
    permute_systems,
    random_state,
    random_state_mixed_marginal,
    random_unitary,
)
from .divergences import bs_cmi, cmi
from .recovery import bs_map, bs_sym_map, petz_map, phi_map, polar_factor
from .utils import (
    DEFAULT_TOLERANCES,
    DimMismatch,
    EtaBNotMaximallyMixed,
    InconsistentCertificate,
    InvariantViolation,
    NotBSQMC,
    NotCommutingMarginals,
    RankDeficientMarginal,
    SupportViolation,
    logger,
)

Partition = Sequence[str]
BlockDims = Tuple[Tuple[int, int], ...]

# (iii) 的换位子只在有限个 t 上抽查
ROTATION_SAMPLES = (-1.0, -0.5, 0.0, 0.5, 1.0)


def _up(state: Operator, full_spec: SystemSpec) -> np.ndarray:
    return embed_operator(state.matrix, state.spec, full_spec)


# --- η 对应 ---


def eta_from_rho(rho: State, b_label: str) -> State:
    """η = tr[P_B]^{-1} ρ_B^{-1/2} ρ ρ_B^{-1/2}；ρ_B 可逆时即 (1/d_B) ρ_B^{-1/2} ρ ρ_B^{-1/2}。"""
    rho_b = rho.marginal([b_label])
    r = linalg.rank(rho_b.matrix)
    isq = embed_operator(linalg.inv_sqrtm_psd(rho_b.matrix), rho_b.spec, rho.spec)
    if r < rho_b.dim:
        logger.debug(f"ρ_{b_label} 秩亏 ({r}/{rho_b.dim})，限制到支撑子空间")
    return State(rho.spec, linalg.hermitize(isq @ rho.matrix @ isq / r))


# --- 认证 ---


@dataclass(frozen=True)
class CertReport:
    res_petz: float
    res_b: float
    res_bsym: float
    res_phi: float
    cmi: float
    bs_cmi_rev: float
    eta_commutator: float
    product_form_residual: float
    res_eta_petz: float
    cmi_eta: float
    verdict_qmc: bool
    verdict_bsqmc: bool
    marginal: bool = False
    tolerance: float = DEFAULT_TOLERANCES.verdict

    def to_dict(self) -> Dict[str, Any]:
        return {
            "res_petz": self.res_petz,
            "res_b": self.res_b,
            "res_bsym": self.res_bsym,
            "res_phi": self.res_phi,
            "cmi": self.cmi,
            "bs_cmi_rev": self.bs_cmi_rev,
            "eta_commutator": self.eta_commutator,
            "product_form_residual": self.product_form_residual,
            "res_eta_petz": self.res_eta_petz,
            "cmi_eta": self.cmi_eta,
            "verdict_qmc": self.verdict_qmc,
            "verdict_bsqmc": self.verdict_bsqmc,
            "marginal": self.marginal,
            "tolerance": self.tolerance,
        }

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        rows = [
            [key, value]
            for key, value in self.to_dict().items()
            if not isinstance(value, bool) and key != "tolerance"
        ]
        return ["quantity", "value"], rows

    def summary(self) -> List[str]:
        bsqmc = "yes" if self.verdict_bsqmc else "no"
        qmc = "yes" if self.verdict_qmc else "no"
        lines = [f"BS-QMC: {bsqmc}, QMC: {qmc}"]
        if self.marginal:
            lines.append(f"注意: 存在接近容差 {self.tolerance:g} 的残差，判定处于临界区")
        return lines


def certify(rho: State, partition: Partition, tol: float = DEFAULT_TOLERANCES.verdict) -> CertReport:
    a, b, c = check_partition(rho.spec, partition)
    rho_bc = rho.marginal([b, c])
    rho_b = rho.marginal([b])
    target = rho.matrix

    res_petz = linalg.trace_distance(petz_map(rho, b, [a, b], rho_bc).matrix, target)
    res_b = linalg.trace_distance(bs_map(rho, b, [a, b], rho_bc).matrix, target)
    res_bsym = linalg.trace_distance(bs_sym_map(rho, b, [a, b], rho_bc).matrix, target)
    res_phi = linalg.trace_distance(
        phi_map(rho, b, [a, b], rho_bc, allow_singular=True).matrix, target
    )

    try:
        rev = bs_cmi(rho, (a, b, c), "rev")
    except SupportViolation:
        rev = math.inf

    eta = eta_from_rho(rho, b)
    eta_ab = _up(eta.marginal([a, b]), rho.spec)
    eta_bc_state = eta.marginal([b, c])
    eta_bc = _up(eta_bc_state, rho.spec)
    eta_commutator = float(np.linalg.norm(linalg.commutator(eta_ab, eta_bc), "fro"))
    r = linalg.rank(rho_b.matrix)
    b_half = _up(Operator(rho_b.spec, linalg.sqrtm_psd(rho_b.matrix)), rho.spec)
    product_form = r**2 * b_half @ eta_ab @ eta_bc @ b_half
    product_form_residual = linalg.trace_distance(product_form, target)
    res_eta_petz = linalg.trace_distance(
        petz_map(eta, b, [a, b], eta_bc_state).matrix, eta.matrix
    )

    lo, hi = 0.1 * tol, 10 * tol
    bs_residuals = (res_b, res_bsym, res_phi)
    if any(x < lo for x in bs_residuals) and any(x > hi for x in bs_residuals):
        raise InconsistentCertificate(
            f"BS 恢复残差不一致: res_b = {res_b:.3e}, res_bsym = {res_bsym:.3e}, res_phi = {res_phi:.3e}"
        )
    verdict_bsqmc = res_b <= tol
    if res_petz < lo and res_b > hi:
        raise InconsistentCertificate(
            f"Petz 条件成立但 BS 条件不成立: res_petz = {res_petz:.3e}, res_b = {res_b:.3e}"
        )
    verdict_qmc = res_petz <= tol and verdict_bsqmc
    marginal = any(lo <= x <= hi for x in (res_petz,) + bs_residuals)
    if marginal:
        logger.warning(f"认证残差接近容差 {tol:g}，判定处于临界区")

    return CertReport(
        res_petz=res_petz,
        res_b=res_b,
        res_bsym=res_bsym,
        res_phi=res_phi,
        cmi=cmi(rho, (a, b, c)),
        bs_cmi_rev=rev,
        eta_commutator=eta_commutator,
        product_form_residual=product_form_residual,
        res_eta_petz=res_eta_petz,
        cmi_eta=cmi(eta, (a, b, c)),
        verdict_qmc=verdict_qmc,
        verdict_bsqmc=verdict_bsqmc,
        marginal=marginal,
        tolerance=tol,
    )


# --- 块结构分解 ---


@dataclass(frozen=True, eq=False)
class Block:
    d_left: int
    d_right: int
    weight: float
    eta_left: State
    eta_right: State

    @property
    def size(self) -> int:
        return self.d_left * self.d_right

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d_left": self.d_left,
            "d_right": self.d_right,
            "weight": self.weight,
            "eta_left": self.eta_left.to_dict(),
            "eta_right": self.eta_right.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class DecompositionB:
    """
    ρ = ρ_B^{1/2} U_B* (⊕_n d_B p_n η̃_{A B_n^L} ⊗ η̃_{B_n^R C}) U_B ρ_B^{1/2}。

    U_B 的行按块顺序排列：第 n 块占据 d_left·d_right 行，块内为 L ⊗ R 的乘积基。
    """

    spec: SystemSpec
    partition: Tuple[str, str, str]
    U_B: np.ndarray
    blocks: Tuple[Block, ...]

    def __post_init__(self):
        a, b, c = check_partition(self.spec, self.partition)
        d_b = self.spec.dim_of(b)
        blocks = tuple(self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if sum(blk.size for blk in blocks) != d_b:
            raise InvariantViolation(f"块维数之和 {sum(blk.size for blk in blocks)} 不等于 d_B = {d_b}")
        total = sum(blk.weight for blk in blocks)
        if abs(total - 1.0) > 1e-10:
            raise InvariantViolation(f"块权重之和必须为 1，实际为 {total:.12g}")
        u = np.array(self.U_B, dtype=complex)
        if u.shape != (d_b, d_b):
            raise DimMismatch(f"U_B 的形状 {u.shape} 与 d_B = {d_b} 不符")
        if np.linalg.norm(u @ u.conj().T - np.eye(d_b), "fro") > 1e-8:
            raise InvariantViolation("U_B 不是酉矩阵")
        u.setflags(write=False)
        object.__setattr__(self, "U_B", u)

    @property
    def block_dims(self) -> List[Tuple[int, int]]:
        return [(blk.d_left, blk.d_right) for blk in self.blocks]

    def isometries(self) -> List[np.ndarray]:
        """每块对应的 V_n: ⊕ 中的块 → H_B，即 U_B* 的列分段。"""
        v = self.U_B.conj().T
        out, offset = [], 0
        for blk in self.blocks:
            out.append(v[:, offset : offset + blk.size])
            offset += blk.size
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subsystems": self.spec.to_list(),
            "partition": list(self.partition),
            "U_B": {"re": self.U_B.real.tolist(), "im": self.U_B.imag.tolist()},
            "blocks": [blk.to_dict() for blk in self.blocks],
        }

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        rows = [[n, blk.d_left, blk.d_right, blk.weight] for n, blk in enumerate(self.blocks)]
        return ["block", "d_left", "d_right", "weight"], rows

    def summary(self) -> List[str]:
        dims = ", ".join(f"({dl},{dr})" for dl, dr in self.block_dims)
        return [f"块数: {len(self.blocks)}, 维数 (d_L, d_R): {dims}"]


def _span_basis(mats: Sequence[np.ndarray], tol: float) -> List[np.ndarray]:
    """线性张成空间的 Hilbert-Schmidt 正交基 (SVD 判秩)。"""
    if not mats:
        return []
    shape = mats[0].shape
    vecs = np.stack([m.reshape(-1) for m in mats], axis=1)
    u, s, _ = np.linalg.svd(vecs, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return []
    k = int(np.count_nonzero(s > tol * s[0]))
    return [u[:, i].reshape(shape) for i in range(k)]


def generate_algebra(generators: Sequence[np.ndarray], tol: float = 1e-9) -> List[np.ndarray]:
    """含单位元、对伴随与乘积封闭的 *-代数，返回 HS 正交基。"""
    r = generators[0].shape[0]
    seeds = [np.eye(r, dtype=complex)]
    for g in generators:
        n = np.linalg.norm(g, "fro")
        if n > 0:
            seeds.extend([g / n, g.conj().T / n])
    basis = _span_basis(seeds, tol)
    while True:
        products = [x @ y for x in basis for y in basis]
        grown = _span_basis(basis + products, tol)
        if len(grown) == len(basis):
            return grown
        basis = grown


def _kernel(system: np.ndarray, tol: float) -> np.ndarray:
    """零空间的正交基，奇异值阈值取 tol·max(1, s_max)。"""
    n = system.shape[1]
    _, s, vh = np.linalg.svd(system, full_matrices=True)
    cutoff = tol * max(1.0, float(s[0]) if s.size else 0.0)
    rank = int(np.count_nonzero(s > cutoff))
    return vh[rank:n].conj().T


def _center(basis: Sequence[np.ndarray], tol: float = 1e-9) -> List[np.ndarray]:
    system = np.vstack(
        [np.stack([(x @ y - y @ x).reshape(-1) for x in basis], axis=1) for y in basis]
    )
    coeffs = _kernel(system, tol)
    center = [sum(col[k] * basis[k] for k in range(len(basis))) for col in coeffs.T]
    if not center:
        # 单位元总在中心里
        r = basis[0].shape[0]
        logger.warning("中心的数值零空间为空，退回到单位元")
        center = [np.eye(r, dtype=complex) / math.sqrt(r)]
    return center


def _commutant_dim(basis: Sequence[np.ndarray], tol: float = 1e-9) -> int:
    r = basis[0].shape[0]
    system = np.vstack([np.kron(x, np.eye(r)) - np.kron(np.eye(r), x.T) for x in basis])
    return _kernel(system, tol).shape[1]


def _random_hermitian(basis: Sequence[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    h = np.zeros_like(basis[0])
    for x in basis:
        g1, g2 = rng.standard_normal(2)
        h = h + g1 * (x + x.conj().T) / 2 + g2 * (x - x.conj().T) / 2j
    n = linalg.norm(h, "operator")
    return h / n if n > 0 else h


def _clusters(values: np.ndarray, gap: float) -> List[np.ndarray]:
    """降序特征值按相邻间隔聚类。"""
    groups: List[List[int]] = [[0]]
    for i in range(1, values.size):
        if values[i - 1] - values[i] > gap:
            groups.append([i])
        else:
            groups[-1].append(i)
    return [np.array(g) for g in groups]


def _block_frame(
    algebra: Sequence[np.ndarray], q: np.ndarray, rng: np.random.Generator, cluster_tol: float
) -> Tuple[int, int, np.ndarray]:
    """
    在中心投影 q 对应的块内找到 L ⊗ R 乘积基。

    返回 (d_L, d_R, V)，V 的列按 (i, k) 的字典序排列。
    """
    m = q.shape[1]
    restricted = _span_basis([q.conj().T @ x @ q for x in algebra], 1e-9)
    d_l = int(round(math.sqrt(len(restricted))))
    if d_l * d_l != len(restricted) or m % d_l:
        raise NotBSQMC(f"块内代数维数 {len(restricted)} 与块大小 {m} 不构成矩阵块")
    d_r = m // d_l
    if d_l == 1:
        return 1, d_r, np.eye(m, dtype=complex)

    eig = linalg.eig_hermitian(_random_hermitian(restricted, rng))
    groups = _clusters(eig.eigenvalues, cluster_tol)
    if len(groups) != d_l or any(g.size != d_r for g in groups):
        raise NotBSQMC(f"块内本征空间结构异常: {[g.size for g in groups]}，期望 {d_l} × {d_r}")
    spaces = [eig.eigenvectors[:, g] for g in groups]

    first = spaces[0]
    for _ in range(8):
        s = sum(complex(*rng.standard_normal(2)) * x for x in restricted)
        links = [e @ e.conj().T @ s @ first for e in spaces[1:]]
        if all(linalg.smallest_singular_value(link) > 1e-8 for link in links):
            break
    else:
        raise NotBSQMC("无法在块内找到非退化的传递元")
    frames = [first] + [scipy.linalg.polar(link, side="right")[0] for link in links]
    return d_l, d_r, np.hstack(frames)


def structure_decompose(
    rho: State,
    partition: Partition,
    seed: SeedLike = 0,
    tol: float = DEFAULT_TOLERANCES.verdict,
    require_certificate: bool = True,
) -> DecompositionB:
    a, b, c = check_partition(rho.spec, partition)
    if require_certificate and not certify(rho, (a, b, c), tol).verdict_bsqmc:
        raise NotBSQMC("态未通过 BS-QMC 认证，无法分解")
    rng = np.random.default_rng(seed)
    spec = rho.spec.ordered([a, b, c])
    d_a, d_b, d_c = spec.dims

    eta = permute_systems(eta_from_rho(rho, b), [a, b, c])
    eta_ab = eta.marginal([a, b]).matrix
    eta_bc = eta.marginal([b, c]).matrix
    comm = np.linalg.norm(
        linalg.commutator(np.kron(eta_ab, np.eye(d_c)), np.kron(np.eye(d_a), eta_bc)), "fro"
    )
    if comm > tol:
        raise NotBSQMC(f"η_AB 与 η_BC 不对易: ‖[η_AB, η_BC]‖_F = {comm:.3e}")

    # 限制到 supp ρ_B
    rho_b = rho.marginal([b]).matrix
    eig_b = linalg.eig_hermitian(rho_b)
    r = linalg.rank(rho_b)
    support, kernel = eig_b.eigenvectors[:, :r], eig_b.eigenvectors[:, r:]
    j_ab = np.kron(np.eye(d_a), support)
    eta_ab_s = (j_ab.conj().T @ eta_ab @ j_ab).reshape(d_a, r, d_a, r)
    generators = [eta_ab_s[j, :, i, :] for i in range(d_a) for j in range(d_a)]
    algebra = generate_algebra(generators)
    center = _center(algebra)
    logger.debug(
        f"代数维数 {len(algebra)}, 换位代数维数 {_commutant_dim(algebra)}, 中心维数 {len(center)}"
    )

    z = linalg.eig_hermitian(_random_hermitian(center, rng))
    cluster_tol = DEFAULT_TOLERANCES.cluster
    found = []
    for group in _clusters(z.eigenvalues, cluster_tol):
        q = z.eigenvectors[:, group]
        d_l, d_r, frame = _block_frame(algebra, q, rng, cluster_tol)
        v = support @ q @ frame
        big = np.kron(np.kron(np.eye(d_a), v), np.eye(d_c))
        weight = float(np.trace(big.conj().T @ eta.matrix @ big).real)
        left_full = np.kron(np.eye(d_a), v).conj().T @ eta_ab @ np.kron(np.eye(d_a), v)
        right_full = np.kron(v, np.eye(d_c)).conj().T @ eta_bc @ np.kron(v, np.eye(d_c))
        x = partial_trace_matrix(left_full, [d_a, d_l, d_r], [0, 1])
        y = partial_trace_matrix(right_full, [d_l, d_r, d_c], [1, 2])
        block = Block(
            d_left=d_l,
            d_right=d_r,
            weight=weight,
            eta_left=State(_left_spec(spec, d_l), x / np.trace(x).real),
            eta_right=State(_right_spec(spec, d_r), y / np.trace(y).real),
        )
        found.append((block, v))

    if kernel.shape[1]:
        k = kernel.shape[1]
        block = Block(
            d_left=1,
            d_right=k,
            weight=0.0,
            eta_left=State.maximally_mixed(_left_spec(spec, 1)),
            eta_right=State.maximally_mixed(_right_spec(spec, k)),
        )
        found.append((block, kernel))

    found.sort(key=lambda item: (-item[0].size, -item[0].weight))
    # 权重按迹重新归一，消除舍入误差
    total = sum(blk.weight for blk, _ in found)
    blocks = tuple(
        Block(blk.d_left, blk.d_right, blk.weight / total, blk.eta_left, blk.eta_right)
        for blk, _ in found
    )
    u_b = np.hstack([v for _, v in found]).conj().T
    decomposition = DecompositionB(rho.spec, (a, b, c), u_b, blocks)

    residual = linalg.trace_distance(
        reconstruct(decomposition, rho.marginal([b])).matrix, rho.matrix
    )
    logger.debug(f"分解得到 {len(blocks)} 个块 {decomposition.block_dims}, 重构残差 {residual:.3e}")
    if residual > 1e-6:
        raise NotBSQMC(f"块结构分解的重构残差过大: {residual:.3e}")
    return decomposition


def _left_spec(spec: SystemSpec, d_l: int) -> SystemSpec:
    a, b, _ = spec.labels
    return SystemSpec.from_pairs([(a, spec.dim_of(a)), (f"{b}_L", d_l)])


def _right_spec(spec: SystemSpec, d_r: int) -> SystemSpec:
    _, b, c = spec.labels
    return SystemSpec.from_pairs([(f"{b}_R", d_r), (c, spec.dim_of(c))])


def reconstruct(d: DecompositionB, rho_b: State) -> State:
    a, b, c = d.partition
    spec = d.spec.ordered([a, b, c])
    d_a, d_b, d_c = spec.dims
    if rho_b.dim != d_b:
        raise DimMismatch(f"ρ_B 的维数 {rho_b.dim} 与 d_B = {d_b} 不符")
    r = linalg.rank(rho_b.matrix)
    eta = np.zeros((spec.total_dim, spec.total_dim), dtype=complex)
    for blk, v in zip(d.blocks, d.isometries()):
        if blk.weight == 0.0:
            continue
        w = np.kron(np.kron(np.eye(d_a), v), np.eye(d_c))
        eta += blk.weight * (w @ np.kron(blk.eta_left.matrix, blk.eta_right.matrix) @ w.conj().T)
    b_half = np.kron(np.kron(np.eye(d_a), linalg.sqrtm_psd(rho_b.matrix)), np.eye(d_c))
    out = State(spec, linalg.hermitize(r * b_half @ eta @ b_half, 1e-8))
    return permute_systems(out, d.spec.labels)


# --- 构造 QMC 与 BS-QMC ---


def block_structures(d_b: int) -> List[BlockDims]:
    """所有满足 Σ d_L·d_R = d_B 的 (d_L, d_R) 多重集。"""
    pairs = sorted(
        [(l, m // l) for m in range(1, d_b + 1) for l in range(1, m + 1) if m % l == 0],
        reverse=True,
    )
    results: List[BlockDims] = []

    def extend(remaining: int, start: int, current: List[Tuple[int, int]]):
        if remaining == 0:
            results.append(tuple(current))
            return
        for idx in range(start, len(pairs)):
            dl, dr = pairs[idx]
            if dl * dr <= remaining:
                extend(remaining - dl * dr, idx, current + [pairs[idx]])

    extend(d_b, 0, [])
    return results


def planted_decomposition(
    a_dim: int,
    blocks: Sequence[Tuple[int, int]],
    c_dim: int,
    seed: SeedLike = 0,
    labels: Tuple[str, str, str] = ("A", "B", "C"),
) -> DecompositionB:
    """随机 U_B 与随机因子态 (B_n^L / B_n^R 边缘为最大混合)，p_n = d_L d_R / d_B。"""
    rng = np.random.default_rng(seed)
    a, b, c = labels
    d_b = sum(dl * dr for dl, dr in blocks)
    spec = SystemSpec.from_pairs([(a, a_dim), (b, d_b), (c, c_dim)])
    u_b = random_unitary(d_b, rng)
    planted = []
    for dl, dr in blocks:
        left_spec, right_spec = _left_spec(spec, dl), _right_spec(spec, dr)
        left = random_state_mixed_marginal(left_spec, f"{b}_L", seed=rng)
        right = random_state_mixed_marginal(right_spec, f"{b}_R", seed=rng)
        planted.append(
            Block(
                d_left=dl,
                d_right=dr,
                weight=dl * dr / d_b,
                eta_left=left,
                eta_right=right,
            )
        )
    return DecompositionB(spec, (a, b, c), u_b, tuple(planted))


def random_qmc(
    a_dim: int,
    blocks: Sequence[Tuple[int, int]],
    c_dim: int,
    seed: SeedLike = 0,
    labels: Tuple[str, str, str] = ("A", "B", "C"),
) -> State:
    """η_B = τ_B 且具有给定块结构的 QMC。"""
    d = planted_decomposition(a_dim, blocks, c_dim, seed, labels)
    return reconstruct(d, State.maximally_mixed(d.spec.sub([labels[1]])))


def bs_family_from_qmc(
    eta: State, x_b: State, partition: Partition = ("A", "B", "C")
) -> State:
    """ρ = d_B² X_B^{1/2} η_AB η_BC X_B^{1/2}，输出满足 ρ_B = X_B。"""
    a, b, c = check_partition(eta.spec, partition)
    eta_b = eta.marginal([b])
    d_b = eta_b.dim
    gap = linalg.trace_distance(eta_b.matrix, np.eye(d_b) / d_b)
    if gap > 1e-8:
        raise EtaBNotMaximallyMixed(f"η_{b} 不是最大混合态 (偏差 {gap:.3e})")
    if x_b.spec.labels != [b] or x_b.dim != d_b:
        raise DimMismatch(f"X_B 必须是子系统 '{b}' (维数 {d_b}) 上的态")
    eta_ab = _up(eta.marginal([a, b]), eta.spec)
    eta_bc = _up(eta.marginal([b, c]), eta.spec)
    comm = float(np.linalg.norm(linalg.commutator(eta_ab, eta_bc), "fro"))
    if comm > 1e-8:
        raise NotCommutingMarginals(f"‖[η_AB, η_BC]‖_F = {comm:.3e}")

    x_half = embed_operator(linalg.sqrtm_psd(x_b.matrix), x_b.spec, eta.spec)
    m = linalg.hermitize(d_b**2 * x_half @ eta_ab @ eta_bc @ x_half, 1e-6)
    tr = float(np.trace(m).real)
    if abs(tr - 1.0) > 1e-8:
        raise NotBSQMC(f"η 不是 QMC：构造结果的迹为 {tr:.12g}")
    rho = State(eta.spec, m / tr)
    b_gap = linalg.trace_distance(rho.marginal([b]).matrix, x_b.matrix)
    res_b = linalg.trace_distance(bs_map(rho, b, [a, b], rho.marginal([b, c])).matrix, rho.matrix)
    if b_gap > 1e-8 or res_b > 1e-8:
        raise NotBSQMC(f"构造结果的后验检查失败: ‖ρ_B − X_B‖₁ = {b_gap:.3e}, res_b = {res_b:.3e}")
    return rho


def central_marginal(d: DecompositionB, seed: SeedLike = 0, scalar_blocks: bool = False) -> State:
    """
    X_B = U_B* (⊕_n q_n ρ̃_{B_n^L} ⊗ ρ̃_{B_n^R}) U_B。用它构造的族成员仍是 QMC。

    scalar_blocks=True 时每块取 I/(d_L d_R)，X_B 位于代数的中心。
    """
    rng = np.random.default_rng(seed)
    b = d.partition[1]
    b_spec = d.spec.sub([b])
    q = rng.dirichlet(np.ones(len(d.blocks)))
    x = np.zeros((b_spec.total_dim, b_spec.total_dim), dtype=complex)
    for weight, blk, v in zip(q, d.blocks, d.isometries()):
        if scalar_blocks:
            local = np.eye(blk.size) / blk.size
        else:
            left = random_state(SystemSpec.from_pairs([("L", blk.d_left)]), floor=0.1, seed=rng)
            right = random_state(SystemSpec.from_pairs([("R", blk.d_right)]), floor=0.1, seed=rng)
            local = np.kron(left.matrix, right.matrix)
        x += weight * (v @ local @ v.conj().T)
    return State(b_spec, x)


def random_bs_qmc(
    a_dim: int,
    blocks: Sequence[Tuple[int, int]],
    c_dim: int,
    seed: SeedLike = 0,
    labels: Tuple[str, str, str] = ("A", "B", "C"),
    floor: float = 0.1,
) -> State:
    rng = np.random.default_rng(seed)
    eta = random_qmc(a_dim, blocks, c_dim, rng, labels)
    x_b = random_state(eta.spec.sub([labels[1]]), floor=floor, seed=rng)
    return bs_family_from_qmc(eta, x_b, labels)


# --- Hamiltonian 形式与 BS-QMC 中的 QMC ---


@dataclass(frozen=True, eq=False)
class HamiltonianForm:
    h_ab: Operator
    h_bc: Operator
    commutator_norm: float
    reconstruction_residual: float


def hamiltonian_form(
    rho: State, partition: Partition, tol: float = DEFAULT_TOLERANCES.verdict
) -> HamiltonianForm:
    """H_AB = −log η_AB, H_BC = −log η_BC，ρ ∝ ρ_B^{1/2} e^{−H_AB − H_BC} ρ_B^{1/2}。"""
    a, b, c = check_partition(rho.spec, partition)
    if not certify(rho, (a, b, c), tol).verdict_bsqmc:
        raise NotBSQMC("Hamiltonian 形式只对 BS-QMC 有定义")
    eta = eta_from_rho(rho, b)
    eta_ab, eta_bc = eta.marginal([a, b]), eta.marginal([b, c])
    for name, m in (("η_AB", eta_ab), ("η_BC", eta_bc)):
        if not linalg.is_full_rank(m.matrix):
            raise RankDeficientMarginal(f"{name} 不满秩，−log 无定义")
    h_ab = Operator(eta_ab.spec, -linalg.logm_psd(eta_ab.matrix))
    h_bc = Operator(eta_bc.spec, -linalg.logm_psd(eta_bc.matrix))
    big_ab, big_bc = _up(h_ab, rho.spec), _up(h_bc, rho.spec)
    comm = float(np.linalg.norm(linalg.commutator(big_ab, big_bc), "fro"))

    rho_b = rho.marginal([b])
    b_half = embed_operator(linalg.sqrtm_psd(rho_b.matrix), rho_b.spec, rho.spec)
    rec = b_half @ linalg.herm_func(-(big_ab + big_bc), np.exp) @ b_half
    rec = rec / np.trace(rec).real
    return HamiltonianForm(
        h_ab=h_ab,
        h_bc=h_bc,
        commutator_norm=comm,
        reconstruction_residual=linalg.trace_distance(rec, rho.matrix),
    )


@dataclass(frozen=True, eq=False)
class QMCWithinBSReport:
    w_ab: Operator
    unitarity_defect: float
    residual_iv: float
    residual_v: float
    rotated_commutators: Dict[float, float] = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCES.verdict

    @property
    def verdict_iv(self) -> bool:
        return self.residual_iv <= self.tolerance

    @property
    def verdict_v(self) -> bool:
        return self.residual_v <= self.tolerance


def qmc_within_bs_check(
    rho: State, partition: Partition, tol: float = DEFAULT_TOLERANCES.verdict
) -> QMCWithinBSReport:
    """BS-QMC 何时是 QMC：W_AB η_BC W_AB* = η_BC，或 d_B^{-1} ρ_AB^{-1/2} ρ ρ_AB^{-1/2} = η_BC。"""
    a, b, c = check_partition(rho.spec, partition)
    if not certify(rho, (a, b, c), tol).verdict_bsqmc:
        raise NotBSQMC("只能对 BS-QMC 检查 QMC 条件")
    w = polar_factor(rho, b, [a, b])
    w_full = _up(w, rho.spec)
    eta = eta_from_rho(rho, b)
    eta_ab = _up(eta.marginal([a, b]), rho.spec)
    eta_bc = _up(eta.marginal([b, c]), rho.spec)
    rho_b = rho.marginal([b])
    d_b = linalg.rank(rho_b.matrix)

    residual_iv = linalg.trace_distance(w_full @ eta_bc @ w_full.conj().T, eta_bc)
    rho_ab = rho.marginal([a, b])
    ab_isqrt = embed_operator(linalg.inv_sqrtm_psd(rho_ab.matrix), rho_ab.spec, rho.spec)
    residual_v = linalg.trace_distance(ab_isqrt @ rho.matrix @ ab_isqrt / d_b, eta_bc)

    rotated = {}
    for t in ROTATION_SAMPLES:
        u = embed_operator(linalg.mat_power(rho_b.matrix, 1j * t), rho_b.spec, rho.spec)
        rotated[t] = float(
            np.linalg.norm(linalg.commutator(u @ eta_ab @ u.conj().T, eta_bc), "fro")
        )
    d = w.matrix.shape[0]
    return QMCWithinBSReport(
        w_ab=w,
        unitarity_defect=float(np.linalg.norm(w.matrix.conj().T @ w.matrix - np.eye(d), "fro")),
        residual_iv=residual_iv,
        residual_v=residual_v,
        rotated_commutators=rotated,
        tolerance=tol,
    )


# --- 内置示例 ---

# 2⊗2⊗2 上的 BS-QMC，它不是 QMC；矩阵为 (9/47)·M
_EXAMPLE_ENTRIES = {
    (0, 0): Fraction(1, 3),
    (1, 1): Fraction(4, 3),
    (2, 2): Fraction(2, 3),
    (3, 3): Fraction(4, 3),
    (4, 4): Fraction(1, 9),
    (5, 5): Fraction(1, 3),
    (6, 6): Fraction(4, 9),
    (7, 7): Fraction(2, 3),
    (1, 3): Fraction(-2, 3),
    (3, 1): Fraction(-2, 3),
    (4, 6): Fraction(1, 9),
    (6, 4): Fraction(1, 9),
}


def builtin_example() -> State:
    m = np.zeros((8, 8))
    for (i, j), value in _EXAMPLE_ENTRIES.items():
        m[i, j] = float(Fraction(9, 47) * value)
    return State(SystemSpec.from_pairs([("A", 2), ("B", 2), ("C", 2)]), m)


# --- 反例搜索 ---


@dataclass(frozen=True, eq=False)
class SearchHit:
    seed: int
    blocks: BlockDims
    state: State
    res_petz: float
    res_b: float
    path: Optional[str] = None


@dataclass(frozen=True, eq=False)
class SearchReport:
    dims: Tuple[int, int, int]
    seeds: int
    tolerance: float
    hits: Tuple[SearchHit, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dims": list(self.dims),
            "seeds": self.seeds,
            "tolerance": self.tolerance,
            "hits": [
                {
                    "seed": h.seed,
                    "blocks": [list(p) for p in h.blocks],
                    "res_petz": h.res_petz,
                    "res_b": h.res_b,
                    "path": h.path,
                }
                for h in self.hits
            ],
        }

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        rows = [
            [h.seed, " ".join(f"({dl},{dr})" for dl, dr in h.blocks), h.res_petz, h.res_b, h.path or ""]
            for h in self.hits
        ]
        return ["seed", "blocks", "res_petz", "res_b", "file"], rows

    def summary(self) -> List[str]:
        return [f"在 {self.seeds} 个种子中找到 {len(self.hits)} 个非 QMC 的 BS-QMC"]


def search_bs_not_qmc(
    dims: Tuple[int, int, int],
    seeds: int,
    tol: float = DEFAULT_TOLERANCES.verdict,
    start: int = 0,
    labels: Tuple[str, str, str] = ("A", "B", "C"),
) -> List[SearchHit]:
    """按种子逐个生成随机 BS-QMC，保留 Petz 残差超过 10·tol 的实例。"""
    d_a, d_b, d_c = dims
    structures = block_structures(d_b)
    hits = []
    for seed in range(start, start + seeds):
        rng = np.random.default_rng(seed)
        blocks = structures[int(rng.integers(len(structures)))]
        rho = random_bs_qmc(d_a, blocks, d_c, rng, labels)
        try:
            report = certify(rho, labels, tol)
        except InconsistentCertificate as e:
            logger.warning(f"种子 {seed}: {e}，跳过")
            continue
        if report.verdict_bsqmc and report.res_petz > 10 * tol:
            hits.append(SearchHit(seed, blocks, rho, report.res_petz, report.res_b))
    logger.debug(f"搜索完成: {len(hits)}/{seeds}")
    return hits
