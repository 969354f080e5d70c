import numpy as np
import pytest
import torch

from avtpr.config import AVTNetConfig
from avtpr.data import load_arrays
from avtpr.synthetic import generate_synthetic_dataset

# acceptance criteria record (number, passed, detail) here for the summary
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


@pytest.fixture(scope="session")
def tiny_cfg():
    return AVTNetConfig.toy(image_size=32, n_frames=40, n_classes=4)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_cfg):
    return generate_synthetic_dataset(4, 8, seed=3, cfg=tiny_cfg)


@pytest.fixture(scope="session")
def tiny_arrays(tiny_dataset, tiny_cfg):
    m = tiny_dataset.manifest
    return load_arrays(m.subset("train"), tiny_cfg), load_arrays(m.subset("test"), tiny_cfg)
