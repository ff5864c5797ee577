import json

import numpy as np
from typer.testing import CliRunner

from qmc_inspector.cli import app
from qmc_inspector.core import State, load_state, random_state
from qmc_inspector.markov import builtin_example, certify

from .conftest import DATA_DIR, spec_of

runner = CliRunner()

EXAMPLE = str(DATA_DIR / "example31.json")
PRODUCT = str(DATA_DIR / "product.json")


def invoke(*args):
    return runner.invoke(app, ["-q", *map(str, args)])


def test_cli_help_and_version():
    """帮助信息与版本号"""
    result = runner.invoke(app, ["--help"])
    assert result.exit_code == 0
    assert "certify" in result.stdout and "spinchain" in result.stdout

    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert result.stdout.startswith("qmc-inspector v")


def test_certify_bundled_states():
    """内置示例是 BS-QMC 但不是 QMC，乘积态两者都是"""
    result = invoke("certify", "--state", EXAMPLE)
    assert result.exit_code == 0
    assert "BS-QMC: yes, QMC: no" in result.stdout

    result = invoke("certify", "--state", PRODUCT)
    assert result.exit_code == 0
    assert "BS-QMC: yes, QMC: yes" in result.stdout


def test_certify_json_output(tmp_path):
    out = tmp_path / "cert.json"
    result = invoke("certify", "--state", EXAMPLE, "-f", "json", "--out", out)
    assert result.exit_code == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["verdict_bsqmc"] is True and data["verdict_qmc"] is False
    assert data["res_petz"] > 1e-4


def test_cli_error_handling(tmp_path):
    """解析错误、无效参数与不变量错误的退出码"""
    bad = tmp_path / "bad.json"
    bad.write_text('{"subsystems": [\n  {"label": "A", "dim": 2},\n  oops\n]}', encoding="utf-8")
    result = invoke("certify", "--state", bad)
    assert result.exit_code == 2
    assert "第 3 行" in result.output

    # 无效格式
    result = invoke("certify", "--state", EXAMPLE, "--format", "yaml")
    assert result.exit_code == 2
    assert "无效" in result.output

    # 无效划分
    result = invoke("cmi", "--state", EXAMPLE, "--partition", "A,B")
    assert result.exit_code == 2

    # 迹不为 1
    unnormalized = tmp_path / "trace.json"
    unnormalized.write_text(
        json.dumps({"subsystems": [{"label": "A", "dim": 2}], "re": [[1, 0], [0, 1]], "im": [[0, 0], [0, 0]]}),
        encoding="utf-8",
    )
    result = invoke("entropy", "--state", unnormalized)
    assert result.exit_code == 3

    # 未知标签
    result = invoke("cmi", "--state", EXAMPLE, "--partition", "A,B,D")
    assert result.exit_code == 3


def test_entropy_and_divergences(tmp_path, state_file):
    """熵、边缘熵与给出 --sigma 时的三种散度"""
    sigma = state_file(State.maximally_mixed(spec_of(("A", 2), ("B", 2), ("C", 2))), "tau.json")
    out = tmp_path / "entropy.json"
    result = invoke("entropy", "--state", EXAMPLE, "--sigma", sigma, "-f", "json", "--out", out)
    assert result.exit_code == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    assert {"S", "S(A)", "S(B)", "S(C)", "D", "D_BS", "D_geo_2"} <= set(data)
    assert data["D_BS"] >= data["D"] - 1e-10
    # D(ρ‖τ) = log 8 − S(ρ)
    assert abs(data["D"] - (np.log(8) - data["S"])) < 1e-10


def test_cmi_and_bscmi(tmp_path):
    out = tmp_path / "bscmi.json"
    result = invoke("bscmi", "--state", EXAMPLE, "-f", "json", "--out", out)
    assert result.exit_code == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    assert set(data) == {"bs_cmi_os", "bs_cmi_ts", "bs_cmi_rev"}
    assert all(abs(v) < 1e-8 for v in data.values())

    out = tmp_path / "cmi.json"
    result = invoke("cmi", "--state", EXAMPLE, "-f", "json", "--out", out)
    assert result.exit_code == 0
    assert json.loads(out.read_text(encoding="utf-8"))["cmi"] > 1e-4

    result = invoke("bscmi", "--state", EXAMPLE, "--variant", "xx")
    assert result.exit_code == 2


def test_decompose_example(tmp_path):
    out = tmp_path / "decomposition.json"
    result = invoke("decompose", "--state", EXAMPLE, "-f", "json", "--out", out)
    assert result.exit_code == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    assert len(data["blocks"]) >= 1
    assert sum(b["d_left"] * b["d_right"] for b in data["blocks"]) == 2


def test_decompose_rejects_generic_state(state_file):
    path = state_file(random_state(spec_of(("A", 2), ("B", 2), ("C", 2)), floor=0.05, seed=1))
    result = invoke("decompose", "--state", path)
    assert result.exit_code == 3


def test_recover(tmp_path):
    """恢复残差，以及把单个映射的输出写成算子文件"""
    out = tmp_path / "recover.json"
    result = invoke("recover", "--state", EXAMPLE, "-f", "json", "--out", out, "--map", "phi")
    assert result.exit_code == 0
    recovered = json.loads(out.read_text(encoding="utf-8"))
    assert np.allclose(np.array(recovered["re"]), builtin_example().matrix.real, atol=1e-8)

    result = invoke("recover", "--state", EXAMPLE)
    assert result.exit_code == 0
    for name in ("res_petz", "res_bs", "res_bssym", "res_phi", "res_phirot"):
        assert name in result.stdout

    result = invoke("recover", "--state", EXAMPLE, "--out", out)
    assert result.exit_code == 2


def test_bounds_csv(tmp_path, state_file):
    path = state_file(random_state(spec_of(("A", 2), ("B", 2), ("C", 2)), floor=0.05, seed=2))
    out = tmp_path / "bounds.csv"
    result = invoke("bounds", "--state", path, "-f", "csv", "--out", out)
    assert result.exit_code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "name,lhs,rhs,margin,status"
    assert len(lines) == 8
    assert not any(line.endswith(",violated") for line in lines)


def test_search_writes_certifiable_states(tmp_path):
    """每个写出的态重新读入后仍是 BS-QMC 而不是 QMC"""
    out_dir = tmp_path / "hits"
    result = invoke("search", "--dims", "2,2,2", "--seeds", "30", "--out", out_dir)
    assert result.exit_code == 0
    files = sorted(out_dir.glob("bsqmc_*.json"))
    assert files
    for path in files:
        report = certify(load_state(path), ("A", "B", "C"))
        assert report.verdict_bsqmc and not report.verdict_qmc

    result = invoke("search", "--dims", "2,2")
    assert result.exit_code == 2


def test_spinchain_tfim(tmp_path):
    """N=6 的 TFIM 给出 |B| = 1..4 四行，界链都成立"""
    out = tmp_path / "decay.csv"
    result = invoke("spinchain", "--model", "tfim", "--sites", "6", "--beta", "1", "--out", out)
    assert result.exit_code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "sizeA,sizeB,sizeC,I_eta,I_rev,bound_chain"
    assert len(lines) == 5
    for line in lines[1:]:
        values = [float(x) for x in line.split(",")]
        assert values[3] <= values[5] + 1e-9


def test_spinchain_json_records_seed(tmp_path):
    """JSON 输出记录 --seed"""
    out = tmp_path / "decay.json"
    result = invoke(
        "spinchain", "--sites", "6", "--b-max", "2", "--seed", "9", "-f", "json", "--out", out
    )
    assert result.exit_code == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["seed"] == 9
    assert [row["sizeB"] for row in data["rows"]] == [1, 2]



def test_spinchain_errors(tmp_path):
    """违反强度上限退出码 3，维数超限退出码 4"""
    custom = tmp_path / "interaction.json"
    custom.write_text(
        '{"local_dim": 2, "range": 1, "strength": 0.5, "terms": [{"width": 1, "re": [[1,0],[0,-1]]}]}',
        encoding="utf-8",
    )
    result = invoke("spinchain", "--model", "custom", "--interaction", custom)
    assert result.exit_code == 3

    result = invoke("spinchain", "--sites", "13", "--b-max", "1")
    assert result.exit_code == 4

    result = invoke("spinchain", "--model", "custom")
    assert result.exit_code == 2


def test_outputs_are_deterministic(tmp_path):
    """同样的参数两次运行得到逐字节相同的文件"""
    for args, name in (
        (("spinchain", "--sites", "6", "--beta", "0.5"), "decay.csv"),
        (("search", "--seeds", "10", "-f", "json"), None),
        (("certify", "--state", EXAMPLE, "-f", "json"), "cert.json"),
    ):
        outputs = []
        for run in range(2):
            if name is None:
                result = invoke(*args)
                outputs.append(result.stdout.encode())
            else:
                path = tmp_path / f"{run}_{name}"
                result = invoke(*args, "--out", path)
                outputs.append(path.read_bytes())
            assert result.exit_code == 0
        assert outputs[0] == outputs[1]


def test_example_command(tmp_path):
    out = tmp_path / "example.json"
    result = invoke("example31", "--out", out)
    assert result.exit_code == 0
    assert "BS-QMC: yes, QMC: no" in result.stdout
    assert np.array_equal(load_state(out).matrix, builtin_example().matrix)
