"""Few-shot benchmark assembly from per-family train/test splits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import IMAGE_SHAPE, LabeledSet
from ..numcore import ContractError, make_rng
from .coverage import CoverageMatrix
from .synth import ForgeryFamilySpec, generate_family_dataset, generate_real_dataset

REAL_SOURCE = 0  # content seed offset of the real class; families use 1..


@dataclass
class FamilyData:
    spec: ForgeryFamilySpec
    train: LabeledSet
    test: LabeledSet


def make_family_data(spec: ForgeryFamilySpec, source_seed: int, train_count: int, test_count: int,
                     shape=IMAGE_SHAPE) -> FamilyData:
    return FamilyData(spec,
                      generate_family_dataset(spec, source_seed, train_count, "train", shape=shape),
                      generate_family_dataset(spec, source_seed, test_count, "test", shape=shape))


def make_real_data(source_seed: int, train_count: int, test_count: int, shape=IMAGE_SHAPE) -> tuple[LabeledSet, LabeledSet]:
    return (generate_real_dataset(source_seed, train_count, "train", shape=shape),
            generate_real_dataset(source_seed, test_count, "test", shape=shape))


@dataclass(frozen=True)
class BenchmarkSpec:
    majority: tuple[str, ...] = ("S1", "S2", "C1", "C2")
    minority: str = "P1"
    shots: int = 50
    real_count: int | None = None  # default: total majority forgery count
    seed: int = 0
    threshold: float = 70.0
    max_shot_fraction: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "majority", tuple(self.majority))
        if self.minority in self.majority:
            raise ContractError(f"minority {self.minority} is also a majority class")
        if not self.majority:
            raise ContractError("benchmark needs at least one majority class")
        if self.shots < 0:
            raise ContractError(f"shot count {self.shots} < 0")

    @property
    def num_classes(self) -> int:
        return len(self.majority) + 2

    @property
    def minority_label(self) -> int:
        return len(self.majority) + 1

    def check_coverage(self, cov: CoverageMatrix) -> None:
        j = cov.index(self.minority)
        worst = max(cov.acc[cov.index(m), j] for m in self.majority)
        if worst >= self.threshold:
            raise ContractError(f"minority {self.minority} is covered by a majority family "
                                f"({worst:.1f}% >= {self.threshold:g}%)")


def assemble_benchmark(spec: BenchmarkSpec, families: dict[str, FamilyData], real: tuple[LabeledSet, LabeledSet],
                       coverage: CoverageMatrix | None = None, unseen: bool = False) -> tuple[LabeledSet, LabeledSet]:
    """Label real 0, majority families 1..n in ``spec.majority`` order and the
    minority n+1. ``unseen`` drops the minority shots from the training set."""
    if coverage is not None:
        spec.check_coverage(coverage)
    missing = [f for f in (*spec.majority, spec.minority) if f not in families]
    if missing:
        raise ContractError(f"no data for families {missing}")
    smallest = min(len(families[m].train) for m in spec.majority)
    if spec.shots > spec.max_shot_fraction * smallest:
        raise ContractError(f"{spec.shots} shots exceed {spec.max_shot_fraction:.0%} of the smallest "
                            f"majority class ({smallest})")
    minority = families[spec.minority]
    if len(minority.train) < spec.shots:
        raise ContractError(f"minority {spec.minority} has {len(minority.train)} training samples, "
                            f"{spec.shots} shots requested")
    real_train, real_test = real
    majority_train = [families[m].train.relabel(k + 1) for k, m in enumerate(spec.majority)]
    n_real = sum(len(d) for d in majority_train) if spec.real_count is None else spec.real_count
    if n_real > len(real_train):
        raise ContractError(f"{n_real} real training samples requested, {len(real_train)} available")
    shot_idx = np.sort(make_rng(spec.seed, 7).choice(len(minority.train), size=spec.shots, replace=False))
    parts = [real_train.subset(np.arange(n_real)).relabel(0), *majority_train]
    if not unseen:
        parts.append(minority.train.subset(shot_idx).relabel(spec.minority_label))
    train = LabeledSet.concat(parts)
    test = LabeledSet.concat([real_test.relabel(0)]
                             + [families[m].test.relabel(k + 1) for k, m in enumerate(spec.majority)]
                             + [minority.test.relabel(spec.minority_label)])
    return train, test
