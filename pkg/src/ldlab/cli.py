"""Command-line interface.

Subcommands::

    gen-data            generate a synthetic dataset from a spec file
    train-teacher       train teacher model(s) from a config file
    run                 run a student experiment (one run per seed)
    calibrate           fit a temperature on stored logits
    report              emit tables and figures for stored runs
    gradcheck           run the gradient verification suite
    export-penultimate  dump penultimate activations for chosen classes

Config files are JSON. The environment variable ``LDL_SEED`` overrides the
seed list of ``run`` and ``train-teacher`` with a single seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .calib import calibration_report, fit_temperature, predictions_from_logits
from .data import DatasetSpec, gen_synth
from .errors import LdlabError
from .io import load_dataset, load_labels, save_dataset, save_model
from .labels import LabelMode, one_hot_rows
from .nn import grad_check, init_network, softmax_stable
from .report import (
    export_penultimate,
    export_report,
    export_summary,
    find_runs,
    load_penultimate_model,
    write_run_dir,
)
from .rng import Prng
from .train import (
    ExperimentConfig,
    TeacherConfig,
    assemble_bank,
    run_single,
    summarize_records,
    train_teacher,
)


def _seed_override() -> tuple[int, ...] | None:
    raw = os.environ.get("LDL_SEED")
    return (int(raw),) if raw else None


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text())


def cmd_gen_data(args) -> int:
    spec = DatasetSpec.from_dict(_load_json(args.spec))
    ds = gen_synth(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "data.ldld"
    digest = save_dataset(ds, path)
    print(f"wrote {path} (classes={spec.classes}, train={spec.n_train}, "
          f"val={spec.n_val}, test={spec.n_test}, sha256={digest[:16]})")
    return 0


def cmd_train_teacher(args) -> int:
    config = TeacherConfig.from_dict(_load_json(args.config))
    seeds = _seed_override() or config.seeds
    dataset_path = args.data or config.dataset
    if not dataset_path:
        print("error: no dataset path (set 'dataset' in the config or pass --data)", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chash = config.hash()
    for seed in seeds:
        ds, ds_hash = load_dataset(dataset_path)
        result = train_teacher(config, ds, seed)
        stem = f"teacher_{chash}_s{seed}"
        save_model(
            result.net,
            out / f"{stem}.ldlm",
            meta={"config_hash": chash, "seed": seed, "dataset_hash": ds_hash},
        )
        (out / f"{stem}_record.json").write_text(
            json.dumps(result.record.to_dict(), indent=2, sort_keys=True)
        )
        print(
            f"teacher seed {seed}: test acc {result.record.calib.accuracy:.4f}, "
            f"ece {result.record.calib.ece:.4f} -> {out / (stem + '.ldlm')}"
        )
    return 0


def cmd_run(args) -> int:
    config = ExperimentConfig.from_dict(_load_json(args.config))
    seeds = _seed_override() or config.seeds
    dataset_path = args.data or config.dataset
    if not dataset_path:
        print("error: no dataset path (set 'dataset' in the config or pass --data)", file=sys.stderr)
        return 2
    out = Path(args.out)
    config_dir = out / config.hash()
    config_dir.mkdir(parents=True, exist_ok=True)
    (config_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))

    bank = None
    bank_hash = ""
    _, ds_hash = load_dataset(dataset_path)
    if config.mode.needs_teachers:
        if not args.teachers:
            print(f"error: mode {config.mode.value} needs --teachers", file=sys.stderr)
            return 2
        bank, bank_hash = assemble_bank(
            args.teachers, ds_hash, config.teacher_temperature, config.teacher_count
        )
    cache_key = f"{ds_hash[:12]}_{bank_hash[:12]}" if bank else ds_hash[:12]

    records = []
    for seed in seeds:
        ds, _ = load_dataset(dataset_path)
        result = run_single(
            config, ds, seed, bank=bank, cache_dir=config_dir / "cache", cache_key=cache_key
        )
        write_run_dir(result, config_dir / f"seed{seed}", dataset_hash=ds_hash)
        records.append(result.record)
        print(
            f"seed {seed}: acc {result.record.calib.accuracy:.4f}, "
            f"ece {result.record.calib.ece:.4f}, nll {result.record.calib.nll:.4f}"
        )
    export_summary(config_dir, records)
    summary = summarize_records(records)
    print(
        f"{config.mode.value}: acc {summary['accuracy']['mean']:.4f}+-{summary['accuracy']['std']:.4f}, "
        f"ece {summary['ece']['mean']:.4f}+-{summary['ece']['std']:.4f}"
    )
    return 0


def _load_logits(path: str) -> np.ndarray:
    p = Path(path)
    if p.suffix == ".ldlz":
        return load_labels(p)
    return np.loadtxt(p, delimiter=",", dtype=np.float64, ndmin=2)


def cmd_calibrate(args) -> int:
    logits = _load_logits(args.logits)
    labels = np.array([int(v) for v in Path(args.labels).read_text().split()], dtype=np.int64)
    preds_before = predictions_from_logits(logits, labels)
    before = calibration_report(preds_before)
    t = fit_temperature(logits, labels)
    preds_after = predictions_from_logits(np.asarray(logits, dtype=np.float64) / t, labels)
    after = calibration_report(preds_after, temperature=t)
    payload = {
        "temperature": t,
        "before": before.to_dict(),
        "after": after.to_dict(),
    }
    print(json.dumps(payload, indent=2))
    return 0


def cmd_report(args) -> int:
    runs = find_runs(args.runs)
    if not runs:
        print(f"error: no stored runs under {args.runs}", file=sys.stderr)
        return 1
    for run_dir in runs:
        written = export_report(
            run_dir, fmt=args.format, figures=not args.no_figures, top_k=args.top_k
        )
        print(f"{run_dir}: wrote {len(written)} files")
    return 0


def cmd_gradcheck(args) -> int:
    tol = 1e-4
    worst = 0.0
    for seed in range(args.seeds):
        rng = Prng(seed)
        mlp = init_network(
            {
                "input": [1, 2, 4],
                "layers": [
                    {"type": "dense", "units": 6},
                    {"type": "relu"},
                    {"type": "dense", "units": 3},
                ],
            },
            rng,
        )
        conv = init_network(
            {
                "input": [1, 6, 6],
                "layers": [
                    {"type": "conv3x3", "filters": 2},
                    {"type": "relu"},
                    {"type": "maxpool2"},
                    {"type": "dropout", "rate": 0.3},
                    {"type": "dense", "units": 3},
                ],
            },
            rng.derive("conv"),
        )
        data_rng = rng.derive("data")
        for net, shape in ((mlp, (4, 1, 2, 4)), (conv, (2, 1, 6, 6))):
            batch = data_rng.normal(size=shape).astype(np.float32)
            labels = data_rng.integers(0, 3, size=shape[0])
            targets = softmax_stable(data_rng.normal(size=(shape[0], 3)))
            err = grad_check(net, batch, targets)
            worst = max(worst, err)
            _ = one_hot_rows(labels, 3)
    status = "PASS" if worst < tol else "FAIL"
    print(f"gradcheck over {args.seeds} seeds: max relative error {worst:.3e} "
          f"(tolerance {tol:.0e}) {status}")
    return 0 if worst < tol else 1


def cmd_export_penultimate(args) -> int:
    net = load_penultimate_model(args.model)
    ds, _ = load_dataset(args.data)
    classes = [int(c) for c in args.classes.split(",") if c != ""] if args.classes else []
    path = export_penultimate(net, ds, classes, args.out, split=args.split)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldlab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="dataset spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-teacher", help="train teacher model(s)")
    p.add_argument("--config", required=True, help="teacher config JSON")
    p.add_argument("--out", required=True, help="output directory for model files")
    p.add_argument("--data", help="dataset file (overrides config)")
    p.set_defaults(fn=cmd_train_teacher)

    p = sub.add_parser("run", help="run a student experiment")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--teachers", help="directory of teacher .ldlm files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--data", help="dataset file (overrides config)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("calibrate", help="fit a temperature on stored logits")
    p.add_argument("--logits", required=True, help=".ldlz or CSV logit matrix")
    p.add_argument("--labels", required=True, help="text file, one label per line")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("report", help="emit tables and figures for stored runs")
    p.add_argument("--runs", required=True, help="directory containing run outputs")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.add_argument("--top-k", type=int, default=10)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seeds", type=int, default=100)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("export-penultimate", help="dump penultimate activations to CSV")
    p.add_argument("--model", required=True, help=".ldlm model file")
    p.add_argument("--data", required=True, help=".ldld dataset file")
    p.add_argument("--classes", default="", help="comma-separated class list (empty: header only)")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(fn=cmd_export_penultimate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (LdlabError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
