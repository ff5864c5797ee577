"""
一维有限程平移不变自旋链：哈密顿量组装、Gibbs 态，以及 η-CMI 和反向 BS-CMI
随中间区域 |B| 变化的衰减实验。

整条链就是 A∪B∪C (开边界)，没有额外的环境格点。
"""

import json
import math
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import linalg
from .bounds import bc_ratio
from .core import State, SystemSpec
from .divergences import bs_cmi, cmi
from .markov import eta_from_rho
from .utils import (
    BadPartition,
    DimMismatch,
    InvariantViolation,
    NonHermitian,
    ParseError,
    TooLarge,
    logger,
)

# 精确对角化的维数上限
MAX_DIM = 4096

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

PARTITION = ("A", "B", "C")

# 低于该值的 CMI 属于本征值舍入噪声，记为 0
CMI_NOISE_FLOOR = 1e-12

# |B| 或 (|A|, |B|, |C|) 的序列
PartitionScheme = Sequence[Union[int, Tuple[int, int, int]]]


@dataclass(frozen=True, eq=False)
class InteractionTerm:
    width: int
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class InteractionSpec:
    """局部相互作用：每一项作用在 width 个相邻格点上，并沿链平移。"""

    local_dim: int
    terms: Tuple[InteractionTerm, ...]
    range: int
    strength: float

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.local_dim < 1 or self.range < 1:
            raise InvariantViolation(f"local_dim 与 range 必须为正: {self.local_dim}, {self.range}")
        for k, term in enumerate(self.terms):
            if not 1 <= term.width <= self.range:
                raise InvariantViolation(f"第 {k} 项的宽度 {term.width} 超出相互作用范围 R={self.range}")
            d = self.local_dim**term.width
            if term.matrix.shape != (d, d):
                raise DimMismatch(f"第 {k} 项的形状 {term.matrix.shape} 应为 ({d}, {d})")
            if np.linalg.norm(term.matrix - term.matrix.conj().T) > 1e-10:
                raise NonHermitian(f"第 {k} 项不是 Hermitian 矩阵")
            size = linalg.norm(term.matrix, "operator")
            if size > self.strength * (1 + 1e-12):
                raise InvariantViolation(f"第 {k} 项的范数 {size:.6g} 超过强度上限 J={self.strength:.6g}")


def _spec_from_terms(local_dim: int, terms: Sequence[Tuple[int, np.ndarray]], strength=None) -> InteractionSpec:
    items = tuple(InteractionTerm(w, np.asarray(m, dtype=complex)) for w, m in terms)
    if strength is None:
        strength = max((linalg.norm(t.matrix, "operator") for t in items), default=0.0)
    width = max((t.width for t in items), default=1)
    return InteractionSpec(local_dim, items, width, float(strength))


def tfim(J: float = 1.0, g: float = 1.0) -> InteractionSpec:
    """横场 Ising 模型：−J·ZZ − g·X。"""
    zz = np.kron(PAULI["Z"], PAULI["Z"])
    return _spec_from_terms(2, [(2, -J * zz), (1, -g * PAULI["X"])])


def xxz(J: float = 1.0, delta: float = 1.0) -> InteractionSpec:
    """XXZ 模型：J(XX + YY + Δ·ZZ)，Δ = 1 即 Heisenberg 模型。"""
    term = J * sum(
        (c * np.kron(PAULI[p], PAULI[p]) for p, c in (("X", 1.0), ("Y", 1.0), ("Z", delta))),
        np.zeros((4, 4), dtype=complex),
    )
    return _spec_from_terms(2, [(2, term)])


def load_interaction(path: Union[str, Path]) -> InteractionSpec:
    """
    从 JSON 文件读取自定义相互作用：
    {"local_dim": 2, "range": 2, "strength": 1.0,
     "terms": [{"width": 2, "re": [[...]], "im": [[...]]}]}
    "im" 可省略。
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"无法读取相互作用文件 {path}: {e}")
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: JSON 格式错误 (第 {e.lineno} 行, 第 {e.colno} 列): {e.msg}")
    if not isinstance(data, dict):
        raise ParseError("相互作用文件的顶层必须是 JSON 对象")
    try:
        local_dim = int(data["local_dim"])
        terms = []
        for item in data["terms"]:
            re = np.array(item["re"], dtype=float)
            im = np.array(item.get("im", np.zeros_like(re)), dtype=float)
            if re.shape != im.shape or re.ndim != 2:
                raise ParseError(f"'re' 与 'im' 必须是同形状的二维数组: {re.shape} / {im.shape}")
            terms.append(InteractionTerm(int(item["width"]), re + 1j * im))
        return InteractionSpec(local_dim, tuple(terms), int(data["range"]), float(data["strength"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"相互作用文件字段格式错误: {e}")


def build_hamiltonian(spec: InteractionSpec, n_sites: int) -> np.ndarray:
    """H = Σ_k Σ_x (平移到格点 x 的第 k 项)，开边界。"""
    d = spec.local_dim
    if n_sites < spec.range:
        raise InvariantViolation(f"格点数 {n_sites} 小于相互作用范围 {spec.range}")
    dim = d**n_sites
    if dim > MAX_DIM:
        raise TooLarge(f"总维数 {d}^{n_sites} = {dim} 超过上限 {MAX_DIM}")
    H = np.zeros((dim, dim), dtype=complex)
    for term in spec.terms:
        for start in range(n_sites - term.width + 1):
            left = np.eye(d**start)
            right = np.eye(d ** (n_sites - start - term.width))
            H += reduce(np.kron, [left, term.matrix, right])
    return H


def gibbs_state(H: np.ndarray, beta: float, spec: SystemSpec) -> State:
    """e^{−βH}/Z，谱分解后先平移最小本征值避免溢出。"""
    if beta <= 0:
        raise InvariantViolation(f"β 必须为正: {beta}")
    w, v = np.linalg.eigh(linalg.hermitize(H))
    weights = np.exp(-beta * (w - w[0]))
    weights = weights / weights.sum()
    return State(spec, (v * weights) @ v.conj().T)


def split_sizes(n_sites: int, size_b: int) -> Tuple[int, int, int]:
    """|A| = ⌈(N−|B|)/2⌉，|C| 取余下部分；A 与 C 都至少一个格点。"""
    rest = n_sites - size_b
    if size_b < 1 or rest < 2:
        raise BadPartition(f"N={n_sites} 的链无法划分出 |B|={size_b} 且 A、C 非空")
    size_a = math.ceil(rest / 2)
    return size_a, size_b, rest - size_a


# --- 衰减实验 ---


@dataclass(frozen=True)
class DecayRow:
    size_a: int
    size_b: int
    size_c: int
    i_eta: float
    i_rev: float
    bound_chain: float

    @property
    def margin(self) -> float:
        return self.bound_chain - self.i_eta


@dataclass(frozen=True)
class DecayCurve:
    n_sites: int
    beta: float
    rows: Tuple[DecayRow, ...]
    seed: Optional[int] = None

    def __post_init__(self):
        rows = tuple(sorted(self.rows, key=lambda r: r.size_b))
        for r in rows:
            if not all(math.isfinite(x) for x in (r.i_eta, r.i_rev, r.bound_chain)):
                raise InvariantViolation(f"|B|={r.size_b} 的结果包含非有限值")
        object.__setattr__(self, "rows", rows)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sites": self.n_sites,
            "beta": self.beta,
            "seed": self.seed,
            "rows": [
                {
                    "sizeA": r.size_a,
                    "sizeB": r.size_b,
                    "sizeC": r.size_c,
                    "I_eta": r.i_eta,
                    "I_rev": r.i_rev,
                    "bound_chain": r.bound_chain,
                }
                for r in self.rows
            ],
        }

    def table(self) -> Tuple[List[str], List[List[Any]]]:
        header = ["sizeA", "sizeB", "sizeC", "I_eta", "I_rev", "bound_chain"]
        rows = [[r.size_a, r.size_b, r.size_c, r.i_eta, r.i_rev, r.bound_chain] for r in self.rows]
        return header, rows

    def summary(self) -> List[str]:
        lines = [f"N={self.n_sites}, β={self.beta:g}"]
        for r in self.rows:
            status = "满足" if r.margin >= -1e-9 else "违反"
            lines.append(f"|B|={r.size_b}: I_η ≤ bound_chain {status} (余量 {r.margin:.3e})")
        return lines


def _chain_rhs(rho: State, i_rev: float) -> float:
    """I_η ≤ 4√(2(d_A+d_C+1)²/(d_B π)) ‖ρ_B^{-1}‖^{1/2} ‖ρ_BC^{-1/2}ρρ_BC^{-1/2}‖^{1/4} (Î^rev)^{1/8}。"""
    d_a, d_b, d_c = (rho.spec.dim_of(x) for x in PARTITION)
    prefactor = 4 * math.sqrt(2 * (d_a + d_c + 1) ** 2 / (d_b * math.pi))
    inv_b = linalg.inverse_norm(rho.marginal(["B"]).matrix)
    ratio = bc_ratio(rho, "B", "C")
    return prefactor * math.sqrt(inv_b) * ratio**0.25 * max(i_rev, 0.0) ** 0.125


def resolve_scheme(
    n_sites: int, partition_scheme: Optional[PartitionScheme] = None
) -> List[Tuple[int, int, int]]:
    """整数表示 |B| 并按平衡方式划分，(|A|, |B|, |C|) 三元组原样使用；默认 |B| = 1..N−2。"""
    if partition_scheme is None:
        partition_scheme = range(1, n_sites - 1)
    splits = []
    for item in partition_scheme:
        if isinstance(item, (int, np.integer)):
            splits.append(split_sizes(n_sites, int(item)))
            continue
        sizes = tuple(int(s) for s in item)
        if len(sizes) != 3 or min(sizes) < 1 or sum(sizes) != n_sites:
            raise BadPartition(f"划分 {sizes} 不是 N={n_sites} 的链上三段非空的连续区间")
        splits.append(sizes)
    return splits


def _denoise(value: float) -> float:
    # 两种 CMI 都非负，低于下限的值 (包括负的舍入误差) 记为 0
    return 0.0 if value < CMI_NOISE_FLOOR else value


def decay_experiment(
    spec: InteractionSpec,
    n_sites: int,
    beta: float,
    partition_scheme: Optional[PartitionScheme] = None,
    seed: Optional[int] = None,
) -> DecayCurve:
    """
    对每个划分计算 I_η、Î^rev 与有限尺寸界链。

    计算是确定性的，seed 只记录在结果里。低于 CMI_NOISE_FLOOR 的 CMI 记为 0。
    """
    splits = resolve_scheme(n_sites, partition_scheme)
    H = build_hamiltonian(spec, n_sites)
    d = spec.local_dim
    rows = []
    for sizes in splits:
        chain = SystemSpec.from_pairs(zip(PARTITION, (d**s for s in sizes)))
        rho = gibbs_state(H, beta, chain)
        eta = eta_from_rho(rho, "B")
        raw_eta = cmi(eta, PARTITION)
        raw_rev = bs_cmi(rho, PARTITION, "rev")
        i_eta, i_rev = _denoise(raw_eta), _denoise(raw_rev)
        rows.append(DecayRow(*sizes, i_eta, i_rev, _chain_rhs(rho, raw_rev)))
        logger.debug(f"|A|,|B|,|C| = {sizes}: I_η={raw_eta:.3e}, Î^rev={raw_rev:.3e}")
    return DecayCurve(n_sites, float(beta), tuple(rows), seed)
