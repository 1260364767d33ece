"""Command-line driver: train, eval, sweep, dump-propagation, gradcheck."""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from relay_wpnn import checkpoint, data, experiments
from relay_wpnn import model as mdl
from relay_wpnn.config import (ConfigurationError, Scheme, build_configs, config_hash, read_config_file,
                               write_config_file)
from relay_wpnn.linalg import RNG_ALGORITHM
from relay_wpnn.training import evaluate

log = logging.getLogger("relay_wpnn")


def _resolve_configs(args):
    flat = read_config_file(args.config) if args.config else {}
    if getattr(args, "scheme", None):
        flat["model.scheme"] = args.scheme
    if getattr(args, "snr_db", None) is not None:
        flat["model.snr_db"] = args.snr_db
    if getattr(args, "seed", None) is not None:
        flat["train.seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        flat["train.epochs"] = args.epochs
    return build_configs(flat)


def _load_data(args, need_train=True):
    data_dir = args.data_dir or data.default_data_dir()
    train = data.load_split(data_dir, "train", args.train_limit) if need_train else None
    test = data.load_split(data_dir, "test", args.test_limit)
    return train, test


def _check_dims(exp, images):
    if images.shape[1:] != (exp.height, exp.width):
        raise ConfigurationError(f"dataset images are {images.shape[1:]}, config expects {(exp.height, exp.width)}")


def cmd_train(args):
    exp, train_cfg = _resolve_configs(args)
    train_set, test_set = _load_data(args)
    _check_dims(exp, train_set[0])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config_file(out / "config.ini", exp, train_cfg)
    acc, res = experiments.run_cell(exp, train_cfg, (train_set, test_set), out / "model.ckpt")
    experiments.write_metrics(out / "metrics.csv", res.metrics)
    report = {"scheme": exp.scheme.value, "snr_db": exp.snr_db, "accuracy": acc, "epochs": train_cfg.epochs,
              "seed": train_cfg.seed, "eval_draws": train_cfg.eval_draws, "rng_id": RNG_ALGORITHM,
              "config_hash": config_hash(exp, train_cfg)}
    (out / "result.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"{exp.scheme.value} snr={exp.snr_db:g} dB accuracy={acc:.4f}")
    return 0


def cmd_eval(args):
    ckpt = checkpoint.load(args.checkpoint)
    params, exp, train_cfg = ckpt.params, ckpt.config, ckpt.train
    if args.snr_db is not None:
        exp = exp.replace(snr_db=float(args.snr_db))
    draws = args.draws or train_cfg.eval_draws
    seed = train_cfg.seed if args.seed is None else args.seed
    _, test_set = _load_data(args, need_train=False)
    _check_dims(exp, test_set[0])
    acc = evaluate(params, exp, *test_set, draws, seed, chunk=train_cfg.eval_chunk, channels=ckpt.channels)
    report = {"checkpoint": str(args.checkpoint), "scheme": exp.scheme.value, "snr_db": exp.snr_db,
              "accuracy": acc, "eval_draws": draws, "seed": seed, "rng_id": RNG_ALGORITHM}
    out = Path(args.out_dir) if args.out_dir else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / f"eval_snr{exp.snr_db:g}_seed{seed}.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"accuracy={acc!r} draws={draws} seed={seed}")
    return 0


def _parse_value(text):
    value = float(text)
    return int(value) if value.is_integer() and "." not in text and "e" not in text.lower() else value


def cmd_sweep(args):
    exp, train_cfg = _resolve_configs(args)
    values = [_parse_value(v) for v in args.values.split(",")] if args.values else experiments.DEFAULT_VALUES[args.axis]
    schemes = args.schemes.split(",") if args.schemes else [s.value for s in Scheme]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [train_cfg.seed]
    sweep = experiments.SweepSpec(args.axis, values, schemes, exp, train_cfg, seeds)
    train_set, test_set = _load_data(args)
    _check_dims(exp, train_set[0])
    out = Path(args.out_dir)
    results = Path(args.results) if args.results else out / f"sweep_{args.axis}.csv"
    ckpt_dir = out / "checkpoints" if args.save_checkpoints else None
    n = experiments.run_sweep(sweep, (train_set, test_set), results, ckpt_dir)
    print(f"trained {n} cell(s); results in {results}")
    return 0


def cmd_dump_propagation(args):
    exp, _ = _resolve_configs(args)
    fixed = mdl.build_propagation(exp)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for side, mats in (("t", fixed.tx), ("r", fixed.rx)):
        for i, w in enumerate(mats, start=1):
            if w is None:
                continue
            with open(out / f"W{i}_{side}.csv", "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["row", "col", "re", "im"])
                for (r, c), v in np.ndenumerate(w):
                    writer.writerow([r, c, repr(float(v.real)), repr(float(v.imag))])
    print(f"wrote propagation matrices to {out}")
    return 0


def cmd_gradcheck(args):
    from relay_wpnn.gradcheck import check_all_schemes

    failed = False
    for res in check_all_schemes(seed=args.seed or 0):
        status = "PASS" if res.ok else "FAIL"
        failed |= not res.ok
        print(f"{status} {res.scheme.value}: {res.checked} partials, max rel err {res.max_rel_error:.2e} ({res.worst})")
        for label, a, n, err in res.failures[:10]:
            print(f"    {label}: analytic {a:.6e} numeric {n:.6e} rel {err:.2e}")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="relay-wpnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data_flags=True):
        p.add_argument("--config", help="INI config file (section.key = value)")
        p.add_argument("--scheme", choices=[s.value for s in Scheme])
        p.add_argument("--snr-db", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", default="runs")
        p.add_argument("--epochs", type=int)
        if data_flags:
            p.add_argument("--data-dir", help=f"IDX directory (default ${data.DATA_DIR_ENV})")
            p.add_argument("--train-limit", type=int, help="use only the first N training images")
            p.add_argument("--test-limit", type=int, help="use only the first N test images")

    p = sub.add_parser("train", help="train one (scheme, config, seed) cell")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint, optionally at another SNR")
    p.add_argument("checkpoint")
    p.add_argument("--snr-db", type=float)
    p.add_argument("--draws", type=int, help="number of evaluation realizations")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--data-dir")
    p.add_argument("--train-limit", type=int, help=argparse.SUPPRESS)
    p.add_argument("--test-limit", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="resumable sweep over one axis")
    common(p)
    p.add_argument("--axis", choices=experiments.AXES, required=True)
    p.add_argument("--values", help="comma-separated axis values (default: built-in grid)")
    p.add_argument("--schemes", help="comma-separated schemes (default: all five)")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--results", help="results CSV path (default OUT_DIR/sweep_AXIS.csv)")
    p.add_argument("--save-checkpoints", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-propagation", help="write every W matrix as CSV")
    common(p, data_flags=False)
    p.set_defaults(func=cmd_dump_propagation)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check on the tiny config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, FileNotFoundError, checkpoint.CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
