import numpy as np
import pytest

from relay_wpnn import data

ACCEPTANCE_LINES = []

# small layout used by the CLI / sweep tests: 4x6 images, N = 2, M = 4 -> K = 6
SMALL_CONFIG = """\
[model]
n_t = 2
n_s = 2
n_r = 2
m = 4
height = 4
width = 6
snr_db = 10

[train]
epochs = 2
batch_size = 16
eval_draws = 2
seed = 3
"""


def make_pattern_set(rng, n, height, width, num_classes=10):
    """Images whose class is encoded by which block of pixels is bright, plus noise."""
    labels = rng.integers(0, num_classes, size=n)
    flat = rng.uniform(0, 0.3, size=(n, height * width))
    block = max(1, (height * width) // num_classes)
    for i, lbl in enumerate(labels):
        flat[i, lbl * block:(lbl + 1) * block] += 0.7
    return np.clip(flat, 0, 1).reshape(n, height, width), labels


@pytest.fixture
def small_dataset_dir(tmp_path):
    rng = np.random.default_rng(7)
    root = tmp_path / "idx"
    for split, n in (("train", 160), ("test", 80)):
        images, labels = make_pattern_set(rng, n, 4, 6)
        data.write_split(root, split, np.round(images * 255).astype(np.uint8), labels)
    return root


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_CONFIG)
    return path


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
