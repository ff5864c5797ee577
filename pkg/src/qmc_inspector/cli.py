import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Tuple

import typer
from typing_extensions import Annotated

from . import bounds, divergences, markov, recovery, spinchain
from .core import State, load_state, save_operator, save_state, von_neumann_entropy
from .linalg import trace_distance
from .renderers import VALID_FORMATS, ValueReport, get_renderer
from .utils import DEFAULT_TOLERANCES, InspectorError, logger, setup_logging

app = typer.Typer(
    help="三体量子态的 Markov 结构检查工具：BS 熵、条件互信息、恢复映射、结构分解与定量界。",
    add_completion=False,
)


def version_callback(value: bool):
    if value:
        from . import __version__

        typer.echo(f"qmc-inspector v{__version__}")
        raise typer.Exit()


# --- 公共选项 ---

StateOption = Annotated[
    Path,
    typer.Option("--state", "-s", help="状态文件 (JSON)。", exists=True, dir_okay=False),
]
PartitionOption = Annotated[
    str, typer.Option("--partition", "-p", help="三体划分的子系统标签，如 A,B,C。")
]
TolOption = Annotated[
    float, typer.Option("--tol", help="判定容差。")
]
SeedOption = Annotated[int, typer.Option("--seed", help="随机种子。")]
FormatOption = Annotated[
    str, typer.Option("-f", "--format", help="输出格式: json, csv, text。")
]
OutOption = Annotated[
    Optional[Path], typer.Option("-o", "--out", help="将结果写入文件而不是标准输出。")
]


def _fail(message: str, code: int = 2):
    typer.secho(f"错误: {message}", fg=typer.colors.RED, err=True)
    raise typer.Exit(code)


@contextmanager
def _handle_errors():
    try:
        yield
    except InspectorError as e:
        _fail(str(e), e.exit_code)
    except typer.Exit:
        raise
    except Exception as e:
        logger.error(f"运行过程中发生错误: {e}")
        raise typer.Exit(1)


def _check_format(format: str):
    if format not in VALID_FORMATS:
        _fail(f"格式 '{format}' 无效。可用格式: {', '.join(VALID_FORMATS)}")


def _check_tol(tol: float):
    if not tol > 0:
        _fail(f"容差必须为正: {tol}")


def _parse_partition(text: str) -> Tuple[str, str, str]:
    labels = tuple(s.strip() for s in text.split(","))
    if len(labels) != 3 or not all(labels):
        _fail(f"划分必须是三个逗号分隔的标签，如 A,B,C: '{text}'")
    return labels


def _parse_dims(text: str) -> Tuple[int, int, int]:
    try:
        dims = tuple(int(s) for s in text.split(","))
    except ValueError:
        dims = ()
    if len(dims) != 3 or min(dims) < 1:
        _fail(f"维数必须是三个逗号分隔的正整数，如 2,2,2: '{text}'")
    return dims


def _emit(report: Any, format: str, out: Optional[Path] = None):
    renderer = get_renderer(format)
    if out:
        with open(out, "w", encoding="utf-8", newline="") as f:
            renderer.render(report, f)
        logger.info(f"结果已写入: {out}")
    else:
        renderer.render(report, sys.stdout)


@app.callback()
def main(
    quiet: Annotated[
        bool, typer.Option("-q", "--quiet", help="安静模式，仅显示警告与错误。")
    ] = False,
    version: Annotated[
        Optional[bool],
        typer.Option(
            "--version", callback=version_callback, is_eager=True, help="显示版本信息。"
        ),
    ] = None,
):
    """
    QMC Inspector - 量子 Markov 链与 BS 熵的数值工具

    示例:

      qmc-inspector certify --state data/example31.json

      qmc-inspector bscmi --state state.json --variant all -f json

      qmc-inspector spinchain --model tfim --sites 6 --beta 1
    """
    setup_logging(quiet)


# --- 熵与散度 ---


@app.command()
def entropy(
    state: StateOption,
    sigma: Annotated[
        Optional[Path],
        typer.Option("--sigma", help="参考态文件；给出时计算 ρ 与 σ 之间的散度。", exists=True, dir_okay=False),
    ] = None,
    alpha: Annotated[float, typer.Option("--alpha", help="几何 Rényi 散度的阶数，(1, 2]。")] = 2.0,
    bits: Annotated[bool, typer.Option("--bits", help="熵以比特为单位 (默认 nats)。")] = False,
    format: FormatOption = "text",
    out: OutOption = None,
):
    """计算 von Neumann 熵与各单体边缘的熵；给出 --sigma 时计算 D、D̂ 与几何 Rényi 散度。"""
    _check_format(format)
    with _handle_errors():
        rho = load_state(state)
        values = {"S": von_neumann_entropy(rho, bits)}
        for label in rho.labels:
            values[f"S({label})"] = von_neumann_entropy(rho.marginal([label]), bits)
        if sigma is not None:
            ref = load_state(sigma)
            values["D"] = float(divergences.umegaki(rho, ref))
            values["D_BS"] = float(divergences.bs_entropy(rho, ref))
            values[f"D_geo_{alpha:g}"] = divergences.geometric_renyi(rho, ref, alpha)
        unit = "bits" if bits else "nats"
        _emit(ValueReport(values, f"熵 ({unit}): {state}"), format, out)


@app.command()
def cmi(
    state: StateOption,
    partition: PartitionOption = "A,B,C",
    format: FormatOption = "text",
    out: OutOption = None,
):
    """计算条件互信息 I(A:C|B)。"""
    _check_format(format)
    labels = _parse_partition(partition)
    with _handle_errors():
        rho = load_state(state)
        _emit(ValueReport({"cmi": divergences.cmi(rho, labels)}), format, out)


@app.command()
def bscmi(
    state: StateOption,
    partition: PartitionOption = "A,B,C",
    variant: Annotated[
        str, typer.Option("--variant", help="BS-CMI 变体: os, ts, rev, all。")
    ] = "all",
    format: FormatOption = "text",
    out: OutOption = None,
):
    """计算 BS 条件互信息的三种变体。"""
    _check_format(format)
    labels = _parse_partition(partition)
    if variant != "all" and variant not in divergences.VARIANTS:
        _fail(f"变体 '{variant}' 无效。可用: {', '.join(divergences.VARIANTS)}, all")
    variants = divergences.VARIANTS if variant == "all" else (variant,)
    with _handle_errors():
        rho = load_state(state)
        values = {f"bs_cmi_{v}": divergences.bs_cmi(rho, labels, v) for v in variants}
        _emit(ValueReport(values), format, out)


# --- 结构 ---


@app.command()
def certify(
    state: StateOption,
    partition: PartitionOption = "A,B,C",
    tol: TolOption = DEFAULT_TOLERANCES.verdict,
    format: FormatOption = "text",
    out: OutOption = None,
):
    """
    检查态是否为 QMC / BS-QMC。

    判定结果是数据而非错误：计算成功时退出码总是 0。
    """
    _check_format(format)
    _check_tol(tol)
    labels = _parse_partition(partition)
    with _handle_errors():
        rho = load_state(state)
        _emit(markov.certify(rho, labels, tol), format, out)


@app.command()
def decompose(
    state: StateOption,
    partition: PartitionOption = "A,B,C",
    tol: TolOption = DEFAULT_TOLERANCES.verdict,
    seed: SeedOption = 0,
    format: FormatOption = "text",
    out: OutOption = None,
):
    """求 BS-QMC 在 B 上的块直和分解。"""
    _check_format(format)
    _check_tol(tol)
    labels = _parse_partition(partition)
    with _handle_errors():
        rho = load_state(state)
        _emit(markov.structure_decompose(rho, labels, seed=seed, tol=tol), format, out)


RECOVERY_MAPS = ("petz", "bs", "bssym", "phi", "phirot")


def _recover_one(name: str, rho: State, labels: Tuple[str, str, str]):
    a, b, c = labels
    rho_bc = rho.marginal([b, c])
    if name == "petz":
        return recovery.petz_map(rho, b, [a, b], rho_bc)
    if name == "bs":
        return recovery.bs_map(rho, b, [a, b], rho_bc)
    if name == "bssym":
        return recovery.bs_sym_map(rho, b, [a, b], rho_bc)
    if name == "phi":
        return recovery.phi_map(rho, b, [a, b], rho_bc, allow_singular=True)
    return recovery.phi_rot(rho, b, [a, b], rho_bc)


@app.command()
def recover(
    state: StateOption,
    partition: PartitionOption = "A,B,C",
    map: Annotated[
        str, typer.Option("--map", help="恢复映射: petz, bs, bssym, phi, phirot, all。")
    ] = "all",
    format: FormatOption = "text",
    out: Annotated[
        Optional[Path],
        typer.Option("-o", "--out", help="将恢复出的算子写入文件 (仅限单个映射)。"),
    ] = None,
):
    """把恢复映射作用在 ρ_BC 上，报告与 ρ 的迹距离。"""
    _check_format(format)
    labels = _parse_partition(partition)
    if map != "all" and map not in RECOVERY_MAPS:
        _fail(f"映射 '{map}' 无效。可用: {', '.join(RECOVERY_MAPS)}, all")
    if map == "all" and out is not None:
        _fail("--out 需要指定单个映射 (--map)")
    names = RECOVERY_MAPS if map == "all" else (map,)
    with _handle_errors():
        rho = load_state(state)
        values = {}
        for name in names:
            recovered = _recover_one(name, rho, labels)
            values[f"res_{name}"] = trace_distance(recovered.matrix, rho.matrix)
            if out is not None:
                save_operator(recovered, out)
                logger.info(f"恢复算子已写入: {out}")
        _emit(ValueReport(values, "‖R(ρ_BC) − ρ‖₁"), format)


@app.command(name="bounds")
def bounds_command(
    state: StateOption,
    partition: PartitionOption = "A,B,C",
    format: FormatOption = "text",
    out: OutOption = None,
):
    """在三体态上逐项求值全部定量不等式。"""
    _check_format(format)
    labels = _parse_partition(partition)
    with _handle_errors():
        rho = load_state(state)
        _emit(bounds.all_bounds(rho, labels), format, out)


# --- 实验 ---


@app.command()
def search(
    dims: Annotated[str, typer.Option("--dims", help="A,B,C 的维数，如 2,2,2。")] = "2,2,2",
    seeds: Annotated[int, typer.Option("--seeds", help="尝试的种子个数。")] = 100,
    seed: Annotated[int, typer.Option("--seed", help="起始种子。")] = 0,
    tol: TolOption = DEFAULT_TOLERANCES.verdict,
    format: FormatOption = "text",
    out: Annotated[
        Optional[Path],
        typer.Option("-o", "--out", help="把找到的每个态写成 bsqmc_<seed>.json 的目录。"),
    ] = None,
):
    """搜索是 BS-QMC 但不是 QMC 的三体态。"""
    _check_format(format)
    _check_tol(tol)
    shape = _parse_dims(dims)
    if seeds < 0:
        _fail(f"种子个数不能为负: {seeds}")
    with _handle_errors():
        hits = markov.search_bs_not_qmc(shape, seeds, tol, start=seed)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            saved = []
            for hit in hits:
                path = out / f"bsqmc_{hit.seed}.json"
                save_state(hit.state, path)
                saved.append(replace(hit, path=str(path)))
            hits = saved
            logger.info(f"{len(hits)} 个态已写入目录: {out}")
        _emit(markov.SearchReport(shape, seeds, tol, tuple(hits)), format)


MODELS = ("tfim", "heisenberg", "custom")


@app.command(name="spinchain")
def spinchain_command(
    model: Annotated[str, typer.Option("--model", help="模型: tfim, heisenberg, custom。")] = "tfim",
    interaction: Annotated[
        Optional[Path],
        typer.Option("--interaction", help="custom 模型的相互作用文件 (JSON)。", exists=True, dir_okay=False),
    ] = None,
    sites: Annotated[int, typer.Option("--sites", "-N", help="链长 N。")] = 6,
    beta: Annotated[float, typer.Option("--beta", help="逆温度 β。")] = 1.0,
    coupling: Annotated[float, typer.Option("--coupling", help="耦合常数 J。")] = 1.0,
    field: Annotated[float, typer.Option("--field", help="TFIM 的横场 g。")] = 1.0,
    b_min: Annotated[int, typer.Option("--b-min", help="|B| 的最小值。")] = 1,
    b_max: Annotated[Optional[int], typer.Option("--b-max", help="|B| 的最大值，默认 N−2。")] = None,
    seed: SeedOption = 0,
    format: FormatOption = "csv",
    out: OutOption = None,
):
    """Gibbs 态上 I_η 与 Î^rev 随 |B| 的衰减实验。"""
    _check_format(format)
    if model not in MODELS:
        _fail(f"模型 '{model}' 无效。可用: {', '.join(MODELS)}")
    if model == "custom" and interaction is None:
        _fail("custom 模型需要 --interaction 文件")
    if not beta > 0:
        _fail(f"β 必须为正: {beta}")
    upper = sites - 2 if b_max is None else b_max
    with _handle_errors():
        if model == "tfim":
            spec = spinchain.tfim(coupling, field)
        elif model == "heisenberg":
            spec = spinchain.xxz(coupling, 1.0)
        else:
            spec = spinchain.load_interaction(interaction)
        logger.info(f"模型 {model}, N={sites}, β={beta:g}, |B| ∈ [{b_min}, {upper}]")
        curve = spinchain.decay_experiment(spec, sites, beta, range(b_min, upper + 1), seed=seed)
        _emit(curve, format, out)


@app.command(name="example31")
def example(
    format: FormatOption = "text",
    out: Annotated[
        Optional[Path], typer.Option("-o", "--out", help="把内置示例态写入该文件。")
    ] = None,
):
    """认证内置的 2⊗2⊗2 示例态：它是 BS-QMC 但不是 QMC。"""
    _check_format(format)
    with _handle_errors():
        rho = markov.builtin_example()
        if out is not None:
            save_state(rho, out)
            logger.info(f"示例态已写入: {out}")
        _emit(markov.certify(rho, ("A", "B", "C")), format)


if __name__ == "__main__":
    app()
