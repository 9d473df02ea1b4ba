"""Run-directory persistence and report emission.

A finished run is stored as::

    <out>/<config_hash>/config.json
    <out>/<config_hash>/summary.json          mean +- std over seeds
    <out>/<config_hash>/seed<k>/record.json   the RunRecord
    <out>/<config_hash>/seed<k>/student.ldlm  final model
    <out>/<config_hash>/seed<k>/test_logits.ldlz
    <out>/<config_hash>/seed<k>/test_labels.csv

``export_report`` turns each stored run into delimited tables (reliability
bins, per-class profiles, top-k profile, per-class loss curves) plus the
calibration JSON, and renders the matching figures next to them.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .calib import (
    PredictionSet,
    class_profiles,
    predictions_from_logits,
    reliability_bins,
    reliability_csv,
    top_k_profile,
)
from .data import Dataset
from .errors import ConfigError
from .io import load_labels, load_model, save_labels, save_model
from .nn.network import Network, batched_penultimate
from .train import RunOutput, RunRecord, record_json, summarize_records


def write_run_dir(output: RunOutput, run_dir: str | Path, dataset_hash: str = "") -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "record.json").write_text(record_json(output.record))
    save_model(
        output.net,
        run_dir / "student.ldlm",
        meta={
            "config_hash": output.record.config_hash,
            "seed": output.record.seed,
            "dataset_hash": dataset_hash,
        },
    )
    save_labels(output.test_logits.astype(np.float32), run_dir / "test_logits.ldlz")
    labels_csv = "\n".join(str(int(v)) for v in output.test_labels) + "\n"
    (run_dir / "test_labels.csv").write_text(labels_csv)
    return run_dir


def load_run(run_dir: str | Path) -> tuple[RunRecord, PredictionSet, np.ndarray]:
    run_dir = Path(run_dir)
    record_path = run_dir / "record.json"
    if not record_path.exists():
        raise FileNotFoundError(f"no record.json in {run_dir}")
    record = RunRecord.from_dict(json.loads(record_path.read_text()))
    logits = load_labels(run_dir / "test_logits.ldlz")
    labels = np.array(
        [int(line) for line in (run_dir / "test_labels.csv").read_text().split()], dtype=np.int64
    )
    preds = predictions_from_logits(logits, labels)
    return record, preds, logits


def find_runs(runs_root: str | Path) -> list[Path]:
    """Directories under `runs_root` (inclusive) containing a record.json."""
    root = Path(runs_root)
    if not root.exists():
        raise FileNotFoundError(f"run directory {root} does not exist")
    hits = sorted(p.parent for p in root.rglob("record.json"))
    return hits


# -- table formatting --------------------------------------------------------


def _fmt(value: float) -> str:
    return "nan" if np.isnan(value) else f"{value:.6f}"


def class_profiles_table(preds: PredictionSet) -> list[dict]:
    f1, mean_conf = class_profiles(preds)
    return [
        {"class": c, "f1": round(float(f1[c]), 6), "mean_confidence": None if np.isnan(mean_conf[c]) else round(float(mean_conf[c]), 6)}
        for c in range(preds.k)
    ]


def class_profiles_csv(preds: PredictionSet) -> str:
    f1, mean_conf = class_profiles(preds)
    lines = ["class,f1,mean_confidence"]
    for c in range(preds.k):
        lines.append(f"{c},{_fmt(f1[c])},{_fmt(mean_conf[c])}")
    return "\n".join(lines) + "\n"


def top_k_csv(preds: PredictionSet, class_index: int, k: int) -> str:
    rows = top_k_profile(preds, class_index, k)
    lines = ["rank,class,mean_prob"]
    for rank, (c, p) in enumerate(rows, start=1):
        lines.append(f"{rank},{c},{p:.6f}")
    return "\n".join(lines) + "\n"


def loss_curves_csv(record: RunRecord) -> str:
    lines = ["epoch,class,train_loss,val_loss"]
    for epoch, (tr, va) in enumerate(zip(record.class_train_loss, record.class_val_loss)):
        for c, (t, v) in enumerate(zip(tr, va)):
            lines.append(f"{epoch},{c},{t:.6f},{v:.6f}")
    return "\n".join(lines) + "\n"


def _csv_to_json_rows(csv_text: str) -> list[dict]:
    lines = [l for l in csv_text.strip().split("\n") if l]
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        row = {}
        for key, cell in zip(header, line.split(",")):
            try:
                row[key] = int(cell) if "." not in cell and cell not in ("nan",) else float(cell)
            except ValueError:
                row[key] = cell
            if isinstance(row[key], float) and np.isnan(row[key]):
                row[key] = None
        rows.append(row)
    return rows


def export_report(
    run_dir: str | Path,
    fmt: str = "csv",
    figures: bool = True,
    top_k: int = 10,
    bins: int = 10,
) -> list[Path]:
    """Emit all report tables (and figures) for one stored run."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be 'csv' or 'json', got {fmt!r}")
    run_dir = Path(run_dir)
    record, preds, _ = load_run(run_dir)
    written: list[Path] = []

    def emit(stem: str, csv_text: str):
        if fmt == "csv":
            path = run_dir / f"{stem}.csv"
            path.write_text(csv_text)
        else:
            path = run_dir / f"{stem}.json"
            path.write_text(json.dumps(_csv_to_json_rows(csv_text), indent=2))
        written.append(path)

    calib_path = run_dir / "calib.json"
    calib_path.write_text(record.calib.to_json() + "\n")
    written.append(calib_path)

    rel_bins = reliability_bins(preds, bins)
    emit("reliability", reliability_csv(rel_bins))
    emit("class_profiles", class_profiles_csv(preds))

    f1, _ = class_profiles(preds)
    best_class = int(np.argmax(f1))
    k = min(top_k, preds.k)
    emit(f"top{k}_class{best_class}", top_k_csv(preds, best_class, k))
    emit("loss_curves", loss_curves_csv(record))

    if figures:
        from . import figures as figs

        written.append(figs.reliability_figure(rel_bins, run_dir / "reliability.png"))
        written.append(figs.class_profiles_figure(preds, run_dir / "class_profiles.png"))
        written.append(
            figs.loss_curves_figure(
                record.class_train_loss, record.class_val_loss, run_dir / "loss_curves.png"
            )
        )
        written.append(
            figs.top_k_figure(
                top_k_profile(preds, best_class, k), best_class, run_dir / f"top{k}_class{best_class}.png"
            )
        )
    return written


def export_summary(config_dir: str | Path, records: list[RunRecord]) -> Path:
    path = Path(config_dir) / "summary.json"
    path.write_text(json.dumps(summarize_records(records), indent=2, sort_keys=True))
    return path


def export_penultimate(
    net: Network,
    dataset: Dataset,
    classes: list[int],
    out_path: str | Path,
    split: str = "test",
) -> Path:
    """CSV of penultimate activations (`sample_id,true_class,d0..dD`) for the
    samples of the requested classes. An empty class list yields a header-only
    file."""
    if split == "test":
        data = dataset.test.unlock()
    elif split == "train":
        data = dataset.train
    elif split == "val":
        data = dataset.val
    else:
        raise ConfigError(f"split must be train/val/test, got {split!r}")
    dim = net.penultimate_dim
    header = "sample_id,true_class," + ",".join(f"d{i}" for i in range(dim))
    lines = [header]
    if classes:
        wanted = set(int(c) for c in classes)
        mask = np.isin(data.labels, sorted(wanted))
        ids = np.nonzero(mask)[0]
        if ids.size:
            acts = batched_penultimate(net, data.images[ids])
            for sid, label, row in zip(ids, data.labels[ids], acts):
                vals = ",".join(f"{v:.6f}" for v in row)
                lines.append(f"{sid},{label},{vals}")
    out_path = Path(out_path)
    out_path.write_text("\n".join(lines) + "\n")
    return out_path


def load_penultimate_model(path: str | Path) -> Network:
    net, _ = load_model(path)
    return net
