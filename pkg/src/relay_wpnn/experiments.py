"""Experiment cells and resumable sweeps over SNR, meta-atom count, depth and width."""

import csv
import fcntl
import io
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from relay_wpnn import checkpoint
from relay_wpnn.config import ConfigurationError, Scheme, config_hash
from relay_wpnn.linalg import RNG_ALGORITHM
from relay_wpnn.training import evaluate, train

log = logging.getLogger(__name__)

AXES = ("snr", "meta_atoms", "layers", "width")
RESULT_COLUMNS = ["scheme", "axis", "value", "seed", "accuracy", "epochs", "wall_seconds", "rng_id", "config_hash"]
METRIC_COLUMNS = ["epoch", "train_loss", "test_accuracy", "wall_seconds"]

# default grids; only the endpoints and a few interior points are pinned down
DEFAULT_VALUES = {
    "snr": [-20, -10, 0, 10, 20, 30],
    "meta_atoms": [4, 16, 36, 64],
    "layers": [1, 2, 3, 4],
    "width": [4, 8, 16, 32],
}


def apply_axis(exp, axis, value):
    if axis == "snr":
        return exp.replace(snr_db=float(value))
    if axis == "meta_atoms":
        return exp.replace(m=int(value))
    if axis == "layers":
        return exp.replace(layers=int(value))
    if axis == "width":
        v = int(value)
        return exp.replace(n_t=v, n_s=v, n_r=v, m=v)
    raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")


@dataclass
class SweepSpec:
    axis: str
    values: list
    schemes: list
    base: object  # ExperimentConfig
    train: object  # TrainConfig
    seeds: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigurationError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ConfigurationError("sweep values must be nonempty")
        self.schemes = [Scheme.parse(s) for s in self.schemes]

    def cells(self):
        for scheme in self.schemes:
            for value in self.values:
                for seed in self.seeds:
                    exp = apply_axis(self.base.replace(scheme=scheme), self.axis, value)
                    yield scheme, value, seed, exp, self.train.replace(seed=int(seed))


def _fmt(x):
    return repr(float(x)) if isinstance(x, float) else str(x)


def run_cell(exp, train_cfg, data, checkpoint_path=None):
    """Train one (scheme, config, seed) cell; returns ``(final accuracy, TrainResult)``."""
    train_set, test = data
    res = train(exp, train_cfg, train_set, test)
    if res.metrics:
        acc = res.metrics[-1].test_accuracy
    else:
        acc = evaluate(res.params, exp, *test, train_cfg.eval_draws, train_cfg.seed,
                       chunk=train_cfg.eval_chunk, channels=res.channels)
    if checkpoint_path is not None:
        checkpoint.save(checkpoint_path, res.params, exp, train_cfg, seed=train_cfg.seed, channels=res.channels)
    return acc, res


def read_results(path):
    path = Path(path)
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def append_row(path, row):
    """Append one CSV row under an advisory lock, writing the header if the file is new."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([row[c] for c in RESULT_COLUMNS])
    with open(path, "a+", encoding="utf-8", newline="") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            fh.seek(0, os.SEEK_END)
            if fh.tell() == 0:
                fh.write(",".join(RESULT_COLUMNS) + "\n")
            fh.write(buf.getvalue())
            fh.flush()
            os.fsync(fh.fileno())
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def completed_hashes(path):
    return {r["config_hash"] for r in read_results(path) if not r["accuracy"].startswith("error")}


def run_sweep(sweep, data, results_path, checkpoint_dir=None):
    """Run every missing cell of ``sweep``; returns the number of cells trained."""
    done = completed_hashes(results_path)
    trained = 0
    for scheme, value, seed, exp, train_cfg in sweep.cells():
        digest = config_hash(exp, train_cfg)
        if digest in done:
            log.info("skip %s %s=%s seed %s (done)", scheme.value, sweep.axis, value, seed)
            continue
        t0 = time.perf_counter()
        ckpt = None if checkpoint_dir is None else Path(checkpoint_dir) / f"{digest}.ckpt"
        if ckpt is not None:
            ckpt.parent.mkdir(parents=True, exist_ok=True)
        try:
            acc, _ = run_cell(exp, train_cfg, data, ckpt)
            acc_field = _fmt(acc)
        except Exception as exc:  # recorded in the row; the sweep carries on
            log.exception("cell %s %s=%s seed %s failed", scheme.value, sweep.axis, value, seed)
            acc_field = f"error:{type(exc).__name__}"
        append_row(results_path, {
            "scheme": scheme.value, "axis": sweep.axis, "value": _fmt(value), "seed": seed,
            "accuracy": acc_field, "epochs": train_cfg.epochs,
            "wall_seconds": f"{time.perf_counter() - t0:.3f}", "rng_id": RNG_ALGORITHM,
            "config_hash": digest,
        })
        done.add(digest)
        trained += 1
    return trained


def write_metrics(path, metrics):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for m in metrics:
            writer.writerow([m.epoch, repr(float(m.train_loss)), repr(float(m.test_accuracy)), f"{m.wall_seconds:.3f}"])
