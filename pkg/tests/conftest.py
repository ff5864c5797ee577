from pathlib import Path

import numpy as np
import pytest

import qmc_inspector
from qmc_inspector.core import State, SystemSpec, load_state, random_state
from qmc_inspector.markov import builtin_example

DATA_DIR = Path(qmc_inspector.__file__).parent / "data"


def spec_of(*pairs):
    return SystemSpec.from_pairs(pairs)


@pytest.fixture
def spec222():
    return spec_of(("A", 2), ("B", 2), ("C", 2))


@pytest.fixture
def bs_example():
    """内置 2⊗2⊗2 示例：BS-QMC 但不是 QMC。"""
    return builtin_example()


@pytest.fixture
def product_state():
    return load_state(DATA_DIR / "product.json")


@pytest.fixture
def ghz(spec222):
    """(|000⟩ + |111⟩)/√2，ρ_B 秩亏。"""
    psi = np.zeros(8)
    psi[0] = psi[7] = 1 / np.sqrt(2)
    return State(spec222, np.outer(psi, psi))


@pytest.fixture
def random_tripartite(spec222):
    """按种子生成的满秩随机三体态。"""

    def make(seed, floor=0.05):
        return random_state(spec222, floor=floor, seed=seed)

    return make


@pytest.fixture
def state_file(tmp_path):
    """把态写成临时状态文件，返回路径。"""
    from qmc_inspector.core import save_state

    def write(state, name="state.json"):
        path = tmp_path / name
        save_state(state, path)
        return path

    return write
