import itertools
import json
import math
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
from scipy.special import xlogy
from scipy.stats import unitary_group

from . import linalg
from .utils import (
    DEFAULT_TOLERANCES,
    BadPartition,
    DimMismatch,
    DuplicateLabel,
    InvalidPermutation,
    InvariantViolation,
    NegativeEigenvalue,
    NonFinite,
    NotTracePreserving,
    ParseError,
    SpecMismatch,
    TraceNotOne,
    UnknownLabel,
)

SeedLike = Union[int, np.random.Generator]


@dataclass(frozen=True)
class Subsystem:
    label: str
    dim: int


@dataclass(frozen=True)
class SystemSpec:
    """有序的带标签子系统列表，定义张量积 Hilbert 空间。"""

    subsystems: Tuple[Subsystem, ...]

    def __post_init__(self):
        subs = tuple(self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        seen = set()
        for s in subs:
            if s.label in seen:
                raise DuplicateLabel(f"子系统标签重复: '{s.label}'")
            seen.add(s.label)
            if int(s.dim) != s.dim or s.dim < 1:
                raise InvariantViolation(f"子系统 '{s.label}' 的维数无效: {s.dim}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[str, int]]) -> "SystemSpec":
        return cls(tuple(Subsystem(label, int(dim)) for label, dim in pairs))

    @property
    def labels(self) -> List[str]:
        return [s.label for s in self.subsystems]

    @property
    def dims(self) -> List[int]:
        return [s.dim for s in self.subsystems]

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def index(self, label: str) -> int:
        for i, s in enumerate(self.subsystems):
            if s.label == label:
                return i
        raise UnknownLabel(f"未知的子系统标签: '{label}' (可用: {', '.join(self.labels)})")

    def dim_of(self, label: str) -> int:
        return self.subsystems[self.index(label)].dim

    def dim_of_all(self, labels: Iterable[str]) -> int:
        return math.prod(self.dim_of(label) for label in labels)

    def sub(self, labels: Iterable[str]) -> "SystemSpec":
        """保留给定标签，顺序与原规格一致。"""
        wanted = set(labels)
        for label in wanted:
            self.index(label)
        return SystemSpec(tuple(s for s in self.subsystems if s.label in wanted))

    def ordered(self, labels: Sequence[str]) -> "SystemSpec":
        """按给定顺序取出子系统。"""
        return SystemSpec(tuple(self.subsystems[self.index(label)] for label in labels))

    def concat(self, other: "SystemSpec") -> "SystemSpec":
        overlap = set(self.labels) & set(other.labels)
        if overlap:
            raise DuplicateLabel(f"张量积中标签重复: {sorted(overlap)}")
        return SystemSpec(self.subsystems + other.subsystems)

    def to_list(self) -> List[Dict[str, Any]]:
        return [{"label": s.label, "dim": s.dim} for s in self.subsystems]


def check_partition(spec: SystemSpec, partition: Sequence[str]) -> Tuple[str, str, str]:
    """检查 (A, B, C) 三个标签恰好划分了规格。"""
    parts = tuple(partition)
    if len(parts) != 3:
        raise BadPartition(f"划分必须恰好包含三个标签，实际为 {list(parts)}")
    if len(set(parts)) != 3 or sorted(parts) != sorted(spec.labels):
        raise BadPartition(
            f"划分 {list(parts)} 与子系统 {spec.labels} 不一致"
        )
    return parts  # type: ignore[return-value]


# --- 张量指标操作 (原始矩阵层面) ---


def partial_trace_matrix(matrix: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    n = len(dims)
    keep = sorted(keep)
    tensor = np.asarray(matrix).reshape(tuple(dims) * 2)
    rows = list(range(n))
    cols = [n + i if i in keep else i for i in range(n)]
    out = keep + [n + k for k in keep]
    reduced = np.einsum(tensor, rows + cols, out)
    d = math.prod(dims[k] for k in keep)
    return np.asarray(reduced).reshape(d, d)


def permute_matrix(matrix: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    n = len(dims)
    tensor = np.asarray(matrix).reshape(tuple(dims) * 2)
    axes = list(order) + [n + o for o in order]
    d = math.prod(dims)
    return tensor.transpose(axes).reshape(d, d)


def embed_operator(X: np.ndarray, x_spec: SystemSpec, full_spec: SystemSpec) -> np.ndarray:
    """X ⊗ I：X 作用于 x_spec 的各条腿，其余子系统上为恒等。"""
    for label in x_spec.labels:
        if full_spec.dim_of(label) != x_spec.dim_of(label):
            raise DimMismatch(f"子系统 '{label}' 的维数不一致")
    rest = [label for label in full_spec.labels if label not in x_spec.labels]
    current = x_spec.labels + rest
    m = np.kron(np.asarray(X), np.eye(full_spec.dim_of_all(rest)))
    dims = x_spec.dims + [full_spec.dim_of(label) for label in rest]
    order = [current.index(label) for label in full_spec.labels]
    return permute_matrix(m, dims, order)


@dataclass(frozen=True, eq=False)
class Operator:
    """绑定在 SystemSpec 上的算子 (不要求是态)。"""

    spec: SystemSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.spec.total_dim
        if m.shape != (d, d):
            raise DimMismatch(f"矩阵形状 {m.shape} 与总维数 {d} 不符")
        if not np.all(np.isfinite(m)):
            raise NonFinite("矩阵中包含 NaN 或 Inf")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def labels(self) -> List[str]:
        return self.spec.labels

    @property
    def dim(self) -> int:
        return self.spec.total_dim

    def _rebuild(self, spec: SystemSpec, matrix: np.ndarray):
        return type(self)(spec, matrix)

    def marginal(self, keep: Iterable[str]):
        return partial_trace(self, keep)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subsystems": self.spec.to_list(),
            "re": self.matrix.real.tolist(),
            "im": self.matrix.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Any):
        if not isinstance(data, dict):
            raise ParseError("状态文件的顶层必须是 JSON 对象")
        for key in ("subsystems", "re", "im"):
            if key not in data:
                raise ParseError(f"状态文件缺少字段 '{key}'")
        try:
            spec = SystemSpec.from_pairs((s["label"], s["dim"]) for s in data["subsystems"])
            re = np.array(data["re"], dtype=float)
            im = np.array(data["im"], dtype=float)
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"状态文件字段格式错误: {e}")
        if re.shape != im.shape or re.ndim != 2:
            raise ParseError(f"'re' 与 'im' 必须是同形状的二维数组: {re.shape} / {im.shape}")
        return cls(spec, re + 1j * im)


@dataclass(frozen=True, eq=False)
class State(Operator):
    """密度矩阵：Hermitian、半正定、迹为 1。"""

    def __post_init__(self):
        super().__post_init__()
        tol = DEFAULT_TOLERANCES
        m = linalg.hermitize(self.matrix, tol.hermitian)
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > tol.trace:
            raise TraceNotOne(f"态的迹必须为 1，实际为 {tr:.12g}")
        lam = np.linalg.eigvalsh(m)
        scale = float(np.max(np.abs(lam)))
        if lam[0] < -linalg.default_support_tol(self.dim) * scale:
            raise NegativeEigenvalue(f"态存在负特征值: λ_min = {lam[0]:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def maximally_mixed(cls, spec: SystemSpec) -> "State":
        d = spec.total_dim
        return cls(spec, np.eye(d) / d)


# --- 基本操作 ---


def partial_trace(s: Operator, keep: Iterable[str]):
    keep = list(keep)
    keep_idx = [s.spec.index(label) for label in keep]
    matrix = partial_trace_matrix(s.matrix, s.spec.dims, keep_idx)
    return s._rebuild(s.spec.sub(keep), matrix)


def tensor(a: Operator, b: Operator):
    spec = a.spec.concat(b.spec)
    matrix = np.kron(a.matrix, b.matrix)
    if isinstance(a, State) and isinstance(b, State):
        return State(spec, matrix)
    return Operator(spec, matrix)


def permute_systems(s: Operator, order: Sequence[str]):
    order = list(order)
    if sorted(order) != sorted(s.spec.labels) or len(set(order)) != len(order):
        raise InvalidPermutation(f"{order} 不是 {s.spec.labels} 的排列")
    idx = [s.spec.index(label) for label in order]
    matrix = permute_matrix(s.matrix, s.spec.dims, idx)
    return s._rebuild(s.spec.ordered(order), matrix)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    if dim == 1:
        return np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))
    return unitary_group.rvs(dim, random_state=rng)


def random_state(
    spec: SystemSpec,
    ensemble: str = "hilbert_schmidt",
    floor: float = 0.0,
    seed: SeedLike = 0,
) -> State:
    """Hilbert-Schmidt 系综随机态，再以权重 floor 混入最大混合态。"""
    if ensemble != "hilbert_schmidt":
        raise ValueError(f"不支持的系综: {ensemble}")
    if not 0.0 <= floor <= 1.0:
        raise InvariantViolation(f"floor 必须位于 [0, 1]: {floor}")
    rng = np.random.default_rng(seed)
    d = spec.total_dim
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    rho = g @ g.conj().T
    rho = rho / np.trace(rho).real
    rho = (1.0 - floor) * rho + floor * np.eye(d) / d
    return State(spec, rho)


def random_state_mixed_marginal(
    spec: SystemSpec, mixed: str, floor: float = 0.1, seed: SeedLike = 0
) -> State:
    """随机态，再用 Z_X^{-1/2} 夹乘使其在子系统 mixed 上的边缘为最大混合态。"""
    z = random_state(spec, floor=floor, seed=np.random.default_rng(seed))
    zm = z.marginal([mixed])
    c = embed_operator(linalg.inv_sqrtm_psd(zm.matrix), zm.spec, spec)
    return State(spec, linalg.hermitize(c @ z.matrix @ c) / zm.dim)


# --- 完全正映射与信道 ---


@dataclass(frozen=True, eq=False)
class CPMap:
    """Kraus 形式的完全正映射 X ↦ Σ K_i X K_i*。"""

    in_spec: SystemSpec
    out_spec: SystemSpec
    kraus: Tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.kraus)
        if not ops:
            raise InvariantViolation("Kraus 算子列表不能为空")
        shape = (self.out_spec.total_dim, self.in_spec.total_dim)
        for k in ops:
            if k.shape != shape:
                raise DimMismatch(f"Kraus 算子形状 {k.shape} 与 {shape} 不符")
            if not np.all(np.isfinite(k)):
                raise NonFinite("Kraus 算子中包含 NaN 或 Inf")
        object.__setattr__(self, "kraus", ops)

    def apply(self, X: np.ndarray) -> np.ndarray:
        x = np.asarray(X, dtype=complex)
        d = self.in_spec.total_dim
        if x.shape != (d, d):
            raise SpecMismatch(f"输入形状 {x.shape} 与输入空间维数 {d} 不符")
        return sum(k @ x @ k.conj().T for k in self.kraus)

    def adjoint(self, Y: np.ndarray) -> np.ndarray:
        y = np.asarray(Y, dtype=complex)
        d = self.out_spec.total_dim
        if y.shape != (d, d):
            raise SpecMismatch(f"输入形状 {y.shape} 与输出空间维数 {d} 不符")
        return sum(k.conj().T @ y @ k for k in self.kraus)

    def unitality_defect(self) -> float:
        s = sum(k @ k.conj().T for k in self.kraus)
        return float(np.linalg.norm(s - np.eye(self.out_spec.total_dim), "fro"))

    def trace_preservation_defect(self) -> float:
        s = sum(k.conj().T @ k for k in self.kraus)
        return float(np.linalg.norm(s - np.eye(self.in_spec.total_dim), "fro"))

    def is_unital(self, tol: float = 1e-10) -> bool:
        return self.unitality_defect() <= tol * math.sqrt(self.out_spec.total_dim)

    def stinespring(self) -> np.ndarray:
        """V = Σ_i K_i ⊗ |i⟩_E，环境基的顺序即 Kraus 列表的顺序。"""
        stacked = np.stack(self.kraus, axis=1)
        out_dim, n, in_dim = stacked.shape
        return stacked.reshape(out_dim * n, in_dim)


@dataclass(frozen=True, eq=False)
class KrausChannel(CPMap):
    """完全正且保迹的信道。"""

    def __post_init__(self):
        super().__post_init__()
        defect = self.trace_preservation_defect()
        if defect > 1e-10 * math.sqrt(self.in_spec.total_dim):
            raise NotTracePreserving(f"Kraus 族不保迹: ‖Σ K*K − I‖_F = {defect:.3e}")

    @classmethod
    def identity(cls, spec: SystemSpec) -> "KrausChannel":
        return cls(spec, spec, (np.eye(spec.total_dim),))

    @classmethod
    def partial_trace(cls, spec: SystemSpec, trace_out: Iterable[str]) -> "KrausChannel":
        """偏迹信道 tr_X，Kraus 族为 {⟨i|_X ⊗ I}。"""
        traced = set(trace_out)
        for label in traced:
            spec.index(label)
        ranges = [range(s.dim) if s.label in traced else [None] for s in spec.subsystems]
        ops = []
        for idx in itertools.product(*ranges):
            factors = [
                np.eye(s.dim) if i is None else np.eye(s.dim)[i : i + 1, :]
                for s, i in zip(spec.subsystems, idx)
            ]
            ops.append(reduce(np.kron, factors))
        kept = [label for label in spec.labels if label not in traced]
        return cls(spec, spec.sub(kept), tuple(ops))

    @classmethod
    def replace_with_maximally_mixed(cls, spec: SystemSpec, labels: Iterable[str]) -> "KrausChannel":
        """条件期望 X ↦ τ_X ⊗ tr_X(X)，将指定子系统替换为最大混合态。"""
        replaced = set(labels)
        for label in replaced:
            spec.index(label)
        ranges = [
            itertools.product(range(s.dim), repeat=2) if s.label in replaced else [None]
            for s in spec.subsystems
        ]
        ops = []
        for idx in itertools.product(*ranges):
            factors = []
            for s, pair in zip(spec.subsystems, idx):
                if pair is None:
                    factors.append(np.eye(s.dim))
                else:
                    i, j = pair
                    unit = np.zeros((s.dim, s.dim))
                    unit[j, i] = 1.0 / math.sqrt(s.dim)
                    factors.append(unit)
            ops.append(reduce(np.kron, factors))
        return cls(spec, spec, tuple(ops))

    @classmethod
    def from_isometry(
        cls, U: np.ndarray, in_spec: SystemSpec, out_spec: SystemSpec, env_dim: int
    ) -> "KrausChannel":
        """T = tr_E[U · U*]，K_i = (I ⊗ ⟨i|_E) U。"""
        u = np.asarray(U, dtype=complex)
        out_dim, in_dim = out_spec.total_dim, in_spec.total_dim
        if u.shape != (out_dim * env_dim, in_dim):
            raise DimMismatch(f"等距算子形状 {u.shape} 与 ({out_dim}·{env_dim}, {in_dim}) 不符")
        blocks = u.reshape(out_dim, env_dim, in_dim)
        return cls(in_spec, out_spec, tuple(blocks[:, i, :] for i in range(env_dim)))


def random_channel(
    in_spec: SystemSpec, out_spec: SystemSpec, n_kraus: int, seed: SeedLike = 0
) -> KrausChannel:
    """由随机 Stinespring 等距 (复高斯矩阵的 QR 分解) 得到的信道。"""
    d_in, d_out = in_spec.total_dim, out_spec.total_dim
    if d_out * n_kraus < d_in:
        raise InvariantViolation(f"Kraus 数 {n_kraus} 不足以构成从 {d_in} 到 {d_out} 的信道")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d_out * n_kraus, d_in)) + 1j * rng.standard_normal(
        (d_out * n_kraus, d_in)
    )
    q, _ = np.linalg.qr(g)
    return KrausChannel.from_isometry(q, in_spec, out_spec, n_kraus)


def apply_channel(ch: CPMap, s: State) -> State:
    if s.spec != ch.in_spec:
        raise SpecMismatch(f"态的规格 {s.spec.labels} 与信道输入 {ch.in_spec.labels} 不符")
    return State(ch.out_spec, ch.apply(s.matrix))


def apply_adjoint(ch: CPMap, X: np.ndarray) -> np.ndarray:
    return ch.adjoint(X)


def von_neumann_entropy(s: State, bits: bool = False) -> float:
    lam = np.clip(np.linalg.eigvalsh(s.matrix), 0.0, None)
    value = float(-np.sum(xlogy(lam, lam)))
    return value / math.log(2) if bits else value


# --- 状态文件读写 ---


def load_state(path: Union[str, Path]) -> State:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"无法读取状态文件 {path}: {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: JSON 格式错误 (第 {e.lineno} 行, 第 {e.colno} 列): {e.msg}")
    return State.from_dict(data)


def save_operator(op: Operator, path: Union[str, Path]):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(op.to_dict(), f, indent=2)
        f.write("\n")


save_state = save_operator
