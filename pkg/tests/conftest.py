import importlib.util
import os
from pathlib import Path

import numpy as np
import pytest

from visreg import data, network

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = Path(__file__).parent / "golden"


def _load_script(name):
    spec = importlib.util.spec_from_file_location(name, ROOT / "scripts" / f"{name}.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


@pytest.fixture(scope="session")
def mnist_subset_dir(tmp_path_factory):
    """Directory with the 4,000 / 1,000 MNIST sample as gzip IDX files."""
    env = os.environ.get(data.DATA_ROOT_ENV)
    try:
        builder = _load_script("make_mnist_subset")
        return builder.build(tmp_path_factory.mktemp("mnist"))
    except ImportError:
        if env:
            return Path(env)
        pytest.skip("needs mlxtend or $VISREG_DATA for MNIST")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_model(seed=0, act="tanh"):
    return network.build_model([network.dense(4, act), network.output(3)], (1, 3, 3), seed=seed)


def tiny_dataset(n=60, seed=0, classes=3, shape=(1, 5, 5)):
    """Linearly separable-ish toy data: the class sets the mean brightness."""
    r = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    images = r.normal(0.0, 0.1, (n,) + shape) + labels[:, None, None, None] / classes
    return data.Dataset(images, labels)


ACCEPTANCE_LINES = []


def report(number: int, passed: bool, detail: str) -> bool:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
