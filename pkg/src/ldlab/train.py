"""Config-driven training: teacher pretraining and the eleven student
supervision recipes, with per-class loss tracking and fully deterministic
runs.

Randomness is split into named sub-streams (init / shuffle / dropout /
augment / mcdo) so recipes that consume different amounts of augmentation
randomness still walk identical shuffle and dropout streams. That is what
makes the reduction identities hold bit-for-bit: distillation with a zero
mixing weight replays vanilla training exactly, and online labels over an
identity blend reproduce the cached offline labels.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, blend
from .calib import CalibReport, calibration_report, fit_temperature, predictions_from_logits
from .data import Dataset, Split
from .errors import ConfigError
from .io import config_hash, load_labels, load_model, model_file_hash, save_labels, sha256_bytes
from .labels import (
    LabelMode,
    ModeParams,
    TeacherBank,
    kd_total_loss,
    mcdo_label,
    mt_loss,
    offline_labels,
    one_hot_rows,
    per_teacher_labels,
    smooth,
)
from .nn import ForwardCtx, Sgd, init_network, soft_ce, softmax_stable
from .nn.network import LOG_CLAMP, Network, batched_logits
from .rng import Prng

DEFAULT_EPOCHS = 60


@dataclass
class OptimizerConfig:
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
        }


@dataclass
class ScheduleConfig:
    epochs: int = 60
    milestones: tuple[int, ...] = (35, 45, 55)
    gamma: float = 0.1

    @classmethod
    def preset(cls, name: str) -> "ScheduleConfig":
        if name == "default":
            return cls()
        if name == "long":
            return cls(epochs=90, milestones=(35, 50, 65, 80))
        raise ConfigError(f"unknown schedule preset {name!r}")

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "milestones": list(self.milestones), "gamma": self.gamma}


def _schedule_from_dict(d: dict) -> ScheduleConfig:
    if "preset" in d:
        base = ScheduleConfig.preset(d["preset"])
    else:
        base = ScheduleConfig()
    return ScheduleConfig(
        epochs=int(d.get("epochs", base.epochs)),
        milestones=tuple(d.get("milestones", base.milestones)),
        gamma=float(d.get("gamma", base.gamma)),
    )


@dataclass
class ExperimentConfig:
    mode: LabelMode
    student: dict
    dataset: str = ""
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    params: ModeParams = field(default_factory=ModeParams)
    teacher_temperature: float = 1.0
    teacher_count: int | None = None
    seeds: tuple[int, ...] = (1, 2, 3)

    def validate(self) -> None:
        self.params.validate()
        if self.mode.needs_teachers and self.teacher_count == 0:
            raise ConfigError(f"mode {self.mode.value} needs a teacher bank")
        if self.schedule.epochs < 1:
            raise ConfigError("schedule needs at least one epoch")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "student": self.student,
            "dataset": self.dataset,
            "optimizer": self.optimizer.to_dict(),
            "schedule": self.schedule.to_dict(),
            "augment": {"method": self.augment.method, "alpha": self.augment.alpha},
            "params": {
                "smoothing_alpha": self.params.smoothing_alpha,
                "kd_lambda": self.params.kd_lambda,
                "kd_tau": self.params.kd_tau,
                "mcdo_rate": self.params.mcdo_rate,
                "mcdo_passes": self.params.mcdo_passes,
                "ogr_gap": self.params.ogr_gap,
            },
            "teacher_temperature": self.teacher_temperature,
            "teacher_count": self.teacher_count,
            "seeds": list(self.seeds),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        opt = d.get("optimizer", {})
        params = d.get("params", {})
        aug = d.get("augment", {})
        cfg = cls(
            mode=LabelMode(d["mode"]),
            student=d["student"],
            dataset=d.get("dataset", ""),
            optimizer=OptimizerConfig(**{k: opt[k] for k in OptimizerConfig.__dataclass_fields__ if k in opt}),
            schedule=_schedule_from_dict(d.get("schedule", {})),
            augment=AugmentConfig(method=aug.get("method", "none"), alpha=aug.get("alpha")),
            params=ModeParams(**{k: params[k] for k in ModeParams.__dataclass_fields__ if k in params}),
            teacher_temperature=float(d.get("teacher_temperature", 1.0)),
            teacher_count=d.get("teacher_count"),
            seeds=tuple(d.get("seeds", (1, 2, 3))),
        )
        cfg.validate()
        return cfg

    def hash(self) -> str:
        """Identifies the experiment family; the seed is recorded separately."""
        d = self.to_dict()
        d.pop("seeds")
        return config_hash(d)


@dataclass
class EpochStats:
    train_loss: float
    val_loss: float
    val_accuracy: float
    lr: float

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
            "lr": self.lr,
        }


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    epochs: list[EpochStats]
    class_train_loss: list[list[float]]  # [epoch][class], measured on the raw train set
    class_val_loss: list[list[float]]
    calib: CalibReport
    label_cache_hash: str | None = None
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "epochs": [e.to_dict() for e in self.epochs],
            "class_train_loss": self.class_train_loss,
            "class_val_loss": self.class_val_loss,
            "calib": self.calib.to_dict(),
            "label_cache_hash": self.label_cache_hash,
            "wall_clock": self.wall_clock,
        }

    def core_dict(self) -> dict:
        """Everything except wall-clock; the determinism contract compares this."""
        d = self.to_dict()
        d.pop("wall_clock")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            config_hash=d["config_hash"],
            seed=d["seed"],
            epochs=[EpochStats(**e) for e in d["epochs"]],
            class_train_loss=d["class_train_loss"],
            class_val_loss=d["class_val_loss"],
            calib=CalibReport.from_dict(d["calib"]),
            label_cache_hash=d.get("label_cache_hash"),
            wall_clock=d.get("wall_clock", 0.0),
        )


@dataclass
class RunOutput:
    record: RunRecord
    net: Network
    test_logits: np.ndarray
    test_labels: np.ndarray


# -- evaluation helpers ------------------------------------------------------


def eval_split(net: Network, split: Split, num_classes: int):
    """(per-class mean CE, overall mean CE, accuracy) against hard labels, eval mode."""
    logits = batched_logits(net, split.images)
    probs = softmax_stable(logits)
    p_true = probs[np.arange(split.n), split.labels]
    ce = -np.log(np.maximum(p_true, LOG_CLAMP))
    acc = float(np.mean(probs.argmax(axis=1) == split.labels))
    per_class = np.zeros(num_classes)
    for k in range(num_classes):
        mask = split.labels == k
        per_class[k] = float(ce[mask].mean()) if mask.any() else 0.0
    return per_class, float(ce.mean()), acc


# -- supervision strategies ---------------------------------------------------


class _Supervisor:
    """Produces the per-batch training inputs and loss for one recipe."""

    label_cache_hash: str | None = None

    def prepare(self) -> None:
        pass

    def epoch_end(self, class_train: list[list[float]], class_val: list[list[float]]) -> None:
        pass

    def batch(self, x, y_rows, idx):
        """Returns (x_used, loss_fn) where loss_fn(logits) -> (loss, dlogits)."""
        raise NotImplementedError


def _soft_loss(z: np.ndarray):
    def loss_fn(logits):
        p = softmax_stable(logits)
        loss = soft_ce(p, z)
        return loss, (p - z) / z.shape[0]

    return loss_fn


class _HardSupervisor(_Supervisor):
    def batch(self, x, y_rows, idx):
        return x, _soft_loss(y_rows)


class _SmoothSupervisor(_Supervisor):
    def __init__(self, alpha: float):
        self.alpha = alpha

    def batch(self, x, y_rows, idx):
        return x, _soft_loss(smooth(y_rows, self.alpha))


class _KdSupervisor(_Supervisor):
    def __init__(self, bank: TeacherBank, lam: float, tau: float):
        self.teacher = bank.teachers[0]
        self.lam = lam
        self.tau = tau

    def batch(self, x, y_rows, idx):
        teacher_logits = batched_logits(self.teacher, x)
        lam, tau = self.lam, self.tau

        def loss_fn(logits):
            loss = kd_total_loss(logits, teacher_logits, y_rows, lam, tau)
            n = logits.shape[0]
            p = softmax_stable(logits)
            p_tau = softmax_stable(np.asarray(logits, dtype=np.float64) / tau)
            z_tau = softmax_stable(np.asarray(teacher_logits, dtype=np.float64) / tau)
            dlogits = ((1.0 - lam) * (p - y_rows) + (lam / tau) * (p_tau - z_tau)) / n
            return loss, dlogits

        return x, loss_fn


class _OfflineSupervisor(_Supervisor):
    def __init__(self, bank, images, ensemble: bool, cache_path: Path | None):
        self.bank = bank
        self.images = images
        self.mode = "ensemble" if ensemble else "single"
        self.cache_path = cache_path
        self.rows: np.ndarray | None = None

    def prepare(self) -> None:
        if self.cache_path is not None and self.cache_path.exists():
            self.rows = load_labels(self.cache_path)
        else:
            self.rows = offline_labels(self.bank, self.images, self.mode)
            if self.cache_path is not None:
                save_labels(self.rows, self.cache_path)
        self.label_cache_hash = sha256_bytes(self.rows.tobytes())

    def batch(self, x, y_rows, idx):
        return x, _soft_loss(self.rows[idx].astype(np.float64))


class _OfflineMultiSupervisor(_Supervisor):
    def __init__(self, bank, images, cache_paths: list[Path] | None):
        self.bank = bank
        self.images = images
        self.cache_paths = cache_paths
        self.rows: list[np.ndarray] | None = None

    def prepare(self) -> None:
        if self.cache_paths is not None and all(p.exists() for p in self.cache_paths):
            self.rows = [load_labels(p) for p in self.cache_paths]
        else:
            self.rows = per_teacher_labels(self.bank, self.images)
            if self.cache_paths is not None:
                for rows, path in zip(self.rows, self.cache_paths):
                    save_labels(rows, path)
        self.label_cache_hash = sha256_bytes(b"".join(r.tobytes() for r in self.rows))

    def batch(self, x, y_rows, idx):
        zs = [r[idx].astype(np.float64) for r in self.rows]
        return x, _multi_loss(zs)


def _multi_loss(zs: list[np.ndarray]):
    def loss_fn(logits):
        p = softmax_stable(logits)
        loss = mt_loss(p, zs)
        n = logits.shape[0]
        dlogits = sum(p - z for z in zs) / n
        return loss, dlogits

    return loss_fn


class _OnlineSupervisor(_Supervisor):
    def __init__(self, bank, augment_cfg: AugmentConfig, aug_rng: Prng, variant: str):
        self.bank = bank
        self.augment_cfg = augment_cfg
        self.aug_rng = aug_rng
        self.variant = variant  # "single" | "ensemble" | "multi"

    def batch(self, x, y_rows, idx):
        result = blend(x, y_rows, self.augment_cfg, self.aug_rng)
        x_hat = result.x_hat  # the blended reference label y_hat is not used for training
        if self.variant == "multi":
            zs = [r.astype(np.float64) for r in per_teacher_labels(self.bank, x_hat)]
            return x_hat, _multi_loss(zs)
        z = offline_labels(self.bank, x_hat, self.variant).astype(np.float64)
        return x_hat, _soft_loss(z)


class _McdoSupervisor(_Supervisor):
    def __init__(self, bank, rate: float, passes: int, rng: Prng):
        self.teacher = bank.teachers[0]
        self.rate = rate
        self.passes = passes
        self.rng = rng

    def batch(self, x, y_rows, idx):
        z = mcdo_label(self.teacher, x, self.rate, self.passes, self.rng).astype(np.float64)
        return x, _soft_loss(z)


class _OgrSupervisor(_Supervisor):
    """Hard-label training with per-class loss weights refreshed every
    `gap` epochs from the overfitting-to-generalization ratio."""

    def __init__(self, num_classes: int, gap: int, labels: np.ndarray):
        self.gap = gap
        self.labels = labels
        self.weights = np.ones(num_classes)

    def epoch_end(self, class_train, class_val):
        from .labels import ogr

        completed = len(class_train)
        latest = completed - 1
        if latest >= self.gap and latest % self.gap == 0:
            _, self.weights = ogr(class_train, class_val, latest - self.gap, self.gap)

    def batch(self, x, y_rows, idx):
        w = self.weights[self.labels[idx]]

        def loss_fn(logits):
            p = softmax_stable(logits)
            n = logits.shape[0]
            ce = -(y_rows * np.log(np.maximum(p, LOG_CLAMP))).sum(axis=1)
            loss = float(np.mean(w * ce))
            dlogits = (w[:, None] * (p - y_rows)) / n
            return loss, dlogits

        return x, loss_fn


def _make_supervisor(
    config: ExperimentConfig,
    dataset: Dataset,
    bank: TeacherBank | None,
    root: Prng,
    cache_dir: Path | None,
    cache_key: str,
) -> _Supervisor:
    mode = config.mode
    if mode.needs_teachers and bank is None:
        raise ConfigError(f"mode {mode.value} needs a teacher bank")
    p = config.params
    if mode is LabelMode.VANILLA:
        return _HardSupervisor()
    if mode is LabelMode.LABEL_SMOOTHING:
        return _SmoothSupervisor(p.smoothing_alpha)
    if mode is LabelMode.KD:
        return _KdSupervisor(bank, p.kd_lambda, p.kd_tau)
    if mode in (LabelMode.OFF_LDL, LabelMode.OFF_EN_LDL):
        path = None
        if cache_dir is not None:
            cache_dir.mkdir(parents=True, exist_ok=True)
            path = cache_dir / f"labels_{mode.value}_{cache_key}.ldlz"
        return _OfflineSupervisor(
            bank, dataset.train.images, ensemble=(mode is LabelMode.OFF_EN_LDL), cache_path=path
        )
    if mode is LabelMode.OFF_MT_LDL:
        paths = None
        if cache_dir is not None:
            cache_dir.mkdir(parents=True, exist_ok=True)
            paths = [cache_dir / f"labels_mt{i}_{cache_key}.ldlz" for i in range(len(bank))]
        return _OfflineMultiSupervisor(bank, dataset.train.images, paths)
    if mode.is_online_ldl:
        variant = {
            LabelMode.ON_LDL: "single",
            LabelMode.ON_EN_LDL: "ensemble",
            LabelMode.ON_MT_LDL: "multi",
        }[mode]
        return _OnlineSupervisor(bank, config.augment, root.derive("augment"), variant)
    if mode is LabelMode.MCDO:
        return _McdoSupervisor(bank, p.mcdo_rate, p.mcdo_passes, root.derive("mcdo"))
    if mode is LabelMode.OGR:
        gap = p.ogr_gap
        if config.schedule.epochs < DEFAULT_EPOCHS:
            gap = max(1, round(p.ogr_gap * config.schedule.epochs / DEFAULT_EPOCHS))
        return _OgrSupervisor(dataset.spec.classes, gap, dataset.train.labels)
    raise ConfigError(f"unhandled mode {mode}")


# -- the run loop --------------------------------------------------------------


def run_single(
    config: ExperimentConfig,
    dataset: Dataset,
    seed: int,
    bank: TeacherBank | None = None,
    cache_dir: Path | None = None,
    cache_key: str = "",
) -> RunOutput:
    """Train one student with one seed and evaluate it on the test split."""
    config.validate()
    t0 = time.perf_counter()
    k = dataset.spec.classes
    root = Prng(seed)
    net = init_network(config.student, root)
    if net.num_classes != k:
        raise ConfigError(f"student head has {net.num_classes} classes, dataset has {k}")
    opt = Sgd(
        lr=config.optimizer.lr,
        momentum=config.optimizer.momentum,
        weight_decay=config.optimizer.weight_decay,
        milestones=config.schedule.milestones,
        gamma=config.schedule.gamma,
    )
    supervisor = _make_supervisor(config, dataset, bank, root, cache_dir, cache_key)
    supervisor.prepare()

    train = dataset.train
    y_rows_all = one_hot_rows(train.labels, k)
    shuffle_rng = root.derive("shuffle")
    dropout_rng = root.derive("dropout")
    batch_size = config.optimizer.batch_size

    epochs: list[EpochStats] = []
    class_train_hist: list[list[float]] = []
    class_val_hist: list[list[float]] = []

    for epoch in range(config.schedule.epochs):
        opt.set_epoch(epoch)
        order = shuffle_rng.permutation(train.n)
        batch_losses = []
        for b, start in enumerate(range(0, train.n, batch_size)):
            idx = order[start : start + batch_size]
            x_used, loss_fn = supervisor.batch(train.images[idx], y_rows_all[idx], idx)
            ctx = ForwardCtx(train=True, rng=dropout_rng)
            logits, _, caches = net.forward_full(x_used, ctx)
            loss, dlogits = loss_fn(logits)
            grads = net.backward(dlogits.astype(net.dtype), caches)
            opt.step(net, grads, epoch=epoch, batch=b)
            batch_losses.append(loss)

        class_train, _, _ = eval_split(net, train, k)
        class_val, val_loss, val_acc = eval_split(net, dataset.val, k)
        class_train_hist.append([float(v) for v in class_train])
        class_val_hist.append([float(v) for v in class_val])
        epochs.append(
            EpochStats(
                train_loss=float(np.mean(batch_losses)),
                val_loss=val_loss,
                val_accuracy=val_acc,
                lr=opt.lr,
            )
        )
        supervisor.epoch_end(class_train_hist, class_val_hist)

    val_logits = batched_logits(net, dataset.val.images)
    temperature = fit_temperature(val_logits, dataset.val.labels)

    test = dataset.test.unlock()
    test_logits = batched_logits(net, test.images)
    preds = predictions_from_logits(test_logits, test.labels)
    calib = calibration_report(preds, temperature=temperature)

    record = RunRecord(
        config_hash=config.hash(),
        seed=seed,
        epochs=epochs,
        class_train_loss=class_train_hist,
        class_val_loss=class_val_hist,
        calib=calib,
        label_cache_hash=supervisor.label_cache_hash,
        wall_clock=time.perf_counter() - t0,
    )
    return RunOutput(record=record, net=net, test_logits=test_logits, test_labels=test.labels)


# -- teachers -------------------------------------------------------------------


@dataclass
class TeacherConfig:
    arch: dict
    dataset: str = ""
    seeds: tuple[int, ...] = (101,)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "dataset": self.dataset,
            "seeds": list(self.seeds),
            "optimizer": self.optimizer.to_dict(),
            "schedule": self.schedule.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TeacherConfig":
        opt = d.get("optimizer", {})
        return cls(
            arch=d["arch"],
            dataset=d.get("dataset", ""),
            seeds=tuple(d.get("seeds", (101,))),
            optimizer=OptimizerConfig(**{k: opt[k] for k in OptimizerConfig.__dataclass_fields__ if k in opt}),
            schedule=_schedule_from_dict(d.get("schedule", {})),
        )

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("seeds")
        return config_hash(d)


def train_teacher(config: TeacherConfig, dataset: Dataset, seed: int) -> RunOutput:
    """Plain hard-label training of a teacher architecture."""
    exp = ExperimentConfig(
        mode=LabelMode.VANILLA,
        student=config.arch,
        dataset=config.dataset,
        optimizer=config.optimizer,
        schedule=config.schedule,
        seeds=(seed,),
    )
    return run_single(exp, dataset, seed)


def assemble_bank(
    teachers_dir: str | Path,
    dataset_hash: str,
    temperature: float = 1.0,
    count: int | None = None,
) -> tuple[TeacherBank, str]:
    """Load every model file in a directory (sorted by name), verify each was
    trained on the given dataset, and return (bank, bank content hash)."""
    paths = sorted(Path(teachers_dir).glob("*.ldlm"))
    if not paths:
        raise ConfigError(f"no teacher models found in {teachers_dir}")
    if count is not None:
        if len(paths) < count:
            raise ConfigError(f"need {count} teachers, found {len(paths)} in {teachers_dir}")
        paths = paths[:count]
    teachers = []
    hashes = []
    for path in paths:
        net, meta = load_model(path)
        trained_on = meta.get("dataset_hash")
        if trained_on != dataset_hash:
            raise ConfigError(
                f"teacher {path.name} was trained on dataset {trained_on}, expected {dataset_hash}"
            )
        teachers.append(net)
        hashes.append(model_file_hash(path))
    bank_hash = sha256_bytes("".join(hashes).encode("ascii"))
    return TeacherBank(teachers=teachers, temperature=temperature), bank_hash


def run_experiment(
    config: ExperimentConfig,
    dataset_for_seed,
    bank: TeacherBank | None = None,
    cache_dir: Path | None = None,
    cache_key: str = "",
) -> list[RunOutput]:
    """Run the configured experiment once per seed.

    `dataset_for_seed` is a callable returning a fresh Dataset (each run gets
    its own test-split access guard) or a single Dataset shared across seeds.
    """
    outputs = []
    for seed in config.seeds:
        ds = dataset_for_seed(seed) if callable(dataset_for_seed) else dataset_for_seed
        outputs.append(run_single(config, ds, seed, bank=bank, cache_dir=cache_dir, cache_key=cache_key))
    return outputs


def summarize_records(records: list[RunRecord]) -> dict:
    """Mean and standard deviation of the headline metrics over seeds."""

    def stats(values):
        arr = np.asarray(values, dtype=np.float64)
        return {"mean": float(arr.mean()), "std": float(arr.std())}

    return {
        "seeds": [r.seed for r in records],
        "accuracy": stats([r.calib.accuracy for r in records]),
        "ece": stats([r.calib.ece for r in records]),
        "uce": stats([r.calib.uce for r in records]),
        "nll": stats([r.calib.nll for r in records]),
        "brier": stats([r.calib.brier for r in records]),
        "final_val_accuracy": stats([r.epochs[-1].val_accuracy for r in records]),
    }


def record_json(record: RunRecord) -> str:
    return json.dumps(record.to_dict(), indent=2, sort_keys=True)
