"""Batch samplers, learning-rate schedules and the SGD training loop."""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import LabeledSet
from .diffnet import Classifier, cross_entropy_with_grad
from .gai import GaiConfig, Variant, replace_batch
from .numcore import ContractError, child_seed, make_rng

log = logging.getLogger(__name__)


class SamplingMode(str, enum.Enum):
    INSTANCE_BALANCED = "ib"
    CLASS_BALANCED = "cb"


class Method(str, enum.Enum):
    UNSEEN = "unseen"
    IB = "ib"
    CB = "cb"
    MIXUP = "mixup"
    NO_TEACHER = "no_teacher"
    GAI_MINUS = "gai_minus"
    GAI = "gai"


GENERATIVE = {
    Method.MIXUP: Variant.MIXUP,
    Method.NO_TEACHER: Variant.NO_TEACHER,
    Method.GAI_MINUS: Variant.GAI_MINUS,
    Method.GAI: Variant.GAI,
}


@dataclass(frozen=True)
class SamplerSpec:
    mode: SamplingMode = SamplingMode.CLASS_BALANCED
    # minority copies when realizing balance by duplication (see duplicate_minority)
    duplication_factor: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", SamplingMode(self.mode))
        if self.duplication_factor < 1:
            raise ContractError(f"duplication factor {self.duplication_factor} < 1")


class Sampler:
    """Index sampler over a fixed label vector, with replacement."""

    def __init__(self, labels: np.ndarray, spec: SamplerSpec):
        self.labels = np.asarray(labels)
        if len(self.labels) == 0:
            raise ContractError("cannot sample from an empty dataset")
        self.spec = spec
        self.classes = np.unique(self.labels)
        self.members = [np.flatnonzero(self.labels == c) for c in self.classes]

    def draw(self, rng: np.random.Generator, batch_size: int) -> np.ndarray:
        if self.spec.mode is SamplingMode.INSTANCE_BALANCED:
            return rng.integers(len(self.labels), size=batch_size)
        cls = rng.integers(len(self.classes), size=batch_size)
        out = np.empty(batch_size, dtype=np.int64)
        for k, members in enumerate(self.members):
            rows = np.flatnonzero(cls == k)
            out[rows] = members[rng.integers(len(members), size=len(rows))]
        return out


def sample_batch(dataset: LabeledSet, spec: SamplerSpec, rng: np.random.Generator, batch_size: int,
                 num_classes: int | None = None) -> LabeledSet:
    if spec.mode is SamplingMode.CLASS_BALANCED and num_classes is not None:
        missing = sorted(set(range(num_classes)) - set(np.unique(dataset.labels).tolist()))
        if missing:
            raise ContractError(f"class-balanced sampling with empty classes {missing}")
    return dataset.subset(Sampler(dataset.labels, spec).draw(rng, batch_size))


def duplicate_minority(labels: np.ndarray, minority_label: int, factor: int) -> np.ndarray:
    """Index list in which every minority row appears ``factor`` times."""
    idx = np.arange(len(labels))
    minority = idx[labels == minority_label]
    return np.concatenate([idx[labels != minority_label], np.tile(minority, factor)])


def default_duplication_factor(labels: np.ndarray, minority_label: int) -> int:
    """Copies that bring the minority up to the mean majority-forgery class size."""
    n_min = int(np.sum(labels == minority_label))
    sizes = [np.sum(labels == c) for c in np.unique(labels) if c not in (0, minority_label)]
    if n_min == 0 or not sizes:
        return 1
    return max(1, int(round(np.mean(sizes) / n_min)))


@dataclass(frozen=True)
class TrainSchedule:
    iterations: int = 3000
    base_lr: float = 0.05
    warmup: int = 150
    milestones: tuple[int, ...] = (1000, 2000)
    decay: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 32

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        if self.iterations < 0 or self.batch_size < 1 or self.base_lr <= 0:
            raise ContractError(f"invalid schedule {self}")
        if self.iterations > 0:
            first = self.milestones[0] if self.milestones else self.iterations
            if not (self.warmup < first <= self.iterations) or list(self.milestones) != sorted(self.milestones):
                raise ContractError(f"schedule needs warmup < first milestone < total: {self}")

    @classmethod
    def scaled(cls, iterations: int, base_lr: float, **kw) -> "TrainSchedule":
        """Warmup over 5% of the run, x0.1 decay at 1/3 and 2/3."""
        if iterations == 0:
            return cls(0, base_lr, 0, (), **kw)
        return cls(iterations, base_lr, max(1, iterations // 20), (iterations // 3, 2 * iterations // 3), **kw)

    def lr(self, t: int) -> float:
        if t < self.warmup:
            return self.base_lr * (t + 1) / self.warmup
        return self.base_lr * self.decay ** sum(1 for m in self.milestones if t >= m)


def base_schedule() -> TrainSchedule:
    return TrainSchedule.scaled(3000, 0.05)


def finetune_schedule() -> TrainSchedule:
    return TrainSchedule.scaled(600, 0.005)


@dataclass
class MethodSpec:
    method: Method
    gai: GaiConfig | None = None
    teacher: Classifier | None = None
    teacher_ref: str | None = None

    def __post_init__(self):
        self.method = Method(self.method)
        if self.method in GENERATIVE and self.gai is None:
            raise ContractError(f"method {self.method.value} needs a GaiConfig")
        if self.method in (Method.GAI, Method.GAI_MINUS) and self.teacher is None:
            raise ContractError(f"method {self.method.value} needs a teacher model")

    @property
    def sampler(self) -> SamplerSpec:
        if self.method in (Method.UNSEEN, Method.IB):
            return SamplerSpec(SamplingMode.INSTANCE_BALANCED)
        return SamplerSpec(SamplingMode.CLASS_BALANCED)


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, lr: float, batch_labels: np.ndarray):
        counts = dict(zip(*np.unique(batch_labels, return_counts=True)))
        super().__init__(f"non-finite loss at iteration {iteration} (lr={lr:g}, batch classes={counts})")
        self.iteration, self.lr, self.batch_counts = iteration, lr, counts


@dataclass
class History:
    rows: list[dict] = field(default_factory=list)
    generated: int = 0
    accepted: int = 0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["iteration", "lr", "loss", "train_minority_acc"])
            w.writeheader()
            for r in self.rows:
                w.writerow(r)


class _PoolView:
    """Rows of a dataset selected by index, without copying the images."""

    def __init__(self, images: np.ndarray, idx: np.ndarray):
        self.images, self.idx = images, idx

    def __len__(self) -> int:
        return len(self.idx)

    def __getitem__(self, rows):
        return self.images[self.idx[rows]]


def train(model: Classifier, dataset: LabeledSet, schedule: TrainSchedule, method: MethodSpec,
          rng: np.random.Generator, minority_label: int | None = None, log_every: int = 10):
    """SGD with Nesterov momentum and weight decay. Returns (model, History).

    The input model is never modified; training works on a copy. For the
    generative methods, minority rows of each batch go through
    ``replace_batch`` against the current student before the gradient step.
    """
    K = model.num_classes
    minority = K - 1 if minority_label is None else minority_label
    data = dataset
    if method.method is Method.UNSEEN:
        data = dataset.subset(dataset.labels != minority)
    model = model.copy()
    history = History()
    if schedule.iterations == 0:
        return model, history
    sampler = Sampler(data.labels, method.sampler)
    base = child_seed(rng)
    draw_rng, gen_rng = make_rng(base, 0), make_rng(base, 1)
    variant = GENERATIVE.get(method.method)
    cfg = None
    if variant is not None:
        cfg = replace(method.gai, minority_label=minority).validate()
        pool_idx = np.flatnonzero(data.labels != minority)
        pool = _PoolView(data.images, pool_idx)
        pool_labels = data.labels[pool_idx]
    velocity = [np.zeros_like(p) for p in model.params]
    mu, wd = schedule.momentum, schedule.weight_decay
    for t in range(schedule.iterations):
        lr = schedule.lr(t)
        idx = sampler.draw(draw_rng, schedule.batch_size)
        x, y = data.images[idx], data.labels[idx]
        targets = y
        if variant is not None:
            rows = np.flatnonzero(y == minority)
            if len(rows):
                res = replace_batch(x[rows], y[rows], pool, pool_labels, cfg, method.teacher, model, gen_rng,
                                    variant, num_classes=K)
                x[rows] = res.images
                history.generated += len(res.outcomes)
                history.accepted += int(res.replaced.sum())
                if res.targets is not None:
                    targets = np.zeros((len(y), K))
                    targets[np.arange(len(y)), y] = 1.0
                    targets[rows] = res.targets
        logits, cache = model.forward(x, keep_cache=True)
        loss, dlogits = cross_entropy_with_grad(logits, targets)
        if not np.isfinite(loss):
            raise TrainingDiverged(t, lr, y)
        grads, _ = model.backward(cache, dlogits)
        for p, g, v in zip(model.params, grads, velocity):
            g = g + wd * p
            v *= mu
            v += g
            p -= lr * (g + mu * v)
        if t % log_every == 0 or t == schedule.iterations - 1:
            mrows = y == minority
            acc = float(np.mean(logits[mrows].argmax(axis=1) == minority)) if mrows.any() else float("nan")
            history.rows.append({"iteration": t, "lr": lr, "loss": loss, "train_minority_acc": acc})
    return model, history


def finetune_from_base(base: Classifier, dataset: LabeledSet, schedule: TrainSchedule, method: MethodSpec,
                       rng: np.random.Generator, minority_label: int | None = None):
    return train(base, dataset, schedule, method, rng, minority_label)
