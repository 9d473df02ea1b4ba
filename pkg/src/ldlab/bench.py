"""Bundled benchmark and smoke-test configurations.

The benchmark is sized for a laptop: a 16x16, 10-class synthetic set with
5k training samples, an over-parameterized MLP student, and a smaller,
shorter-trained teacher whose outputs keep usable soft structure. The smoke
suite shrinks everything so that all eleven supervision modes finish in
seconds.
"""

from __future__ import annotations

from .augment import AugmentConfig
from .data import DatasetSpec
from .labels import LabelMode
from .train import ExperimentConfig, OptimizerConfig, ScheduleConfig, TeacherConfig

BENCH_SEED = 20240601
BENCH_SEEDS = (1, 2, 3)


def bench_dataset_spec() -> DatasetSpec:
    return DatasetSpec(
        classes=10,
        n_train=5000,
        n_val=1000,
        n_test=2000,
        noise_sigma=1.0,
        seed=BENCH_SEED,
        grid=16,
        jitter=2,
    )


def bench_student_arch() -> dict:
    return {
        "input": [1, 16, 16],
        "layers": [
            {"type": "dense", "units": 256},
            {"type": "relu"},
            {"type": "dense", "units": 256},
            {"type": "relu"},
            {"type": "dense", "units": 10},
        ],
    }


def bench_teacher_arch() -> dict:
    return {
        "input": [1, 16, 16],
        "layers": [
            {"type": "dense", "units": 48},
            {"type": "relu"},
            {"type": "dropout", "rate": 0.0},
            {"type": "dense", "units": 10},
        ],
    }


def bench_teacher_config(dataset_path: str = "") -> TeacherConfig:
    return TeacherConfig(
        arch=bench_teacher_arch(),
        dataset=dataset_path,
        seeds=(101,),
        optimizer=OptimizerConfig(),
        schedule=ScheduleConfig(epochs=30, milestones=(20, 26)),
    )


def bench_experiment(
    mode: LabelMode,
    augment_method: str = "none",
    dataset_path: str = "",
    seeds: tuple[int, ...] = BENCH_SEEDS,
) -> ExperimentConfig:
    return ExperimentConfig(
        mode=mode,
        student=bench_student_arch(),
        dataset=dataset_path,
        optimizer=OptimizerConfig(),
        schedule=ScheduleConfig(),
        augment=AugmentConfig(method=augment_method),
        seeds=seeds,
    )


# -- smoke suite ---------------------------------------------------------------


def smoke_dataset_spec() -> DatasetSpec:
    return DatasetSpec(
        classes=4,
        n_train=200,
        n_val=60,
        n_test=60,
        noise_sigma=0.6,
        seed=7,
        grid=16,
        jitter=1,
    )


def smoke_student_arch() -> dict:
    return {
        "input": [1, 16, 16],
        "layers": [
            {"type": "dense", "units": 32},
            {"type": "relu"},
            {"type": "dense", "units": 4},
        ],
    }


def smoke_teacher_arch(units: int) -> dict:
    return {
        "input": [1, 16, 16],
        "layers": [
            {"type": "dense", "units": units},
            {"type": "relu"},
            {"type": "dropout", "rate": 0.1},
            {"type": "dense", "units": 4},
        ],
    }


def smoke_teacher_config(dataset_path: str = "") -> TeacherConfig:
    return TeacherConfig(
        arch=smoke_teacher_arch(24),
        dataset=dataset_path,
        seeds=(201, 202),
        optimizer=OptimizerConfig(),
        schedule=ScheduleConfig(epochs=5, milestones=(4,)),
    )


def smoke_experiment(mode: LabelMode, dataset_path: str = "") -> ExperimentConfig:
    needs_patches = mode.is_online_ldl
    return ExperimentConfig(
        mode=mode,
        student=smoke_student_arch(),
        dataset=dataset_path,
        optimizer=OptimizerConfig(),
        schedule=ScheduleConfig(epochs=2, milestones=()),
        augment=AugmentConfig(method="cutmix" if needs_patches else "none"),
        seeds=(1,),
    )
