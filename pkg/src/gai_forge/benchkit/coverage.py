"""Cross-family coverage matrix and the thresholded taxonomy graph."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..dataset import LabeledSet
from ..diffnet import ArchSpec, Classifier, predict_proba
from ..numcore import ContractError, child_seed, make_rng
from ..trainkit import Method, MethodSpec, TrainSchedule, train

log = logging.getLogger(__name__)


@dataclass
class CoverageMatrix:
    """``acc[i][j]``: percent of family j's test forgeries flagged fake by the
    detector trained on real data plus family i."""

    acc: np.ndarray
    family_ids: list[str]

    def __post_init__(self):
        self.acc = np.asarray(self.acc, dtype=float)
        k = len(self.family_ids)
        if self.acc.shape != (k, k):
            raise ContractError(f"coverage matrix shape {self.acc.shape} does not match {k} families")
        if np.any(self.acc < 0) or np.any(self.acc > 100) or not np.all(np.isfinite(self.acc)):
            raise ContractError("coverage entries must be finite and within [0, 100]")

    def off_diagonal_maxima(self) -> list[str]:
        """Families whose detector scores higher on another family than on its own."""
        return [fid for i, fid in enumerate(self.family_ids) if self.acc[i].max() > self.acc[i, i]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["train\\test"] + self.family_ids)
        for fid, row in zip(self.family_ids, self.acc):
            w.writerow([fid] + [f"{v:.4f}" for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CoverageMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        ids = rows[0][1:]
        return cls(np.array([[float(v) for v in r[1:]] for r in rows[1:]]), ids)

    def index(self, family_id: str) -> int:
        return self.family_ids.index(family_id)


@dataclass
class Taxonomy:
    edges: list[tuple[int, int]]
    components: list[list[int]]
    family_ids: list[str]
    threshold: float

    def component_of(self) -> dict[str, int]:
        return {self.family_ids[m]: c for c, comp in enumerate(self.components) for m in comp}

    def edge_list(self) -> str:
        return "".join(f"{self.family_ids[i]} -> {self.family_ids[j]}\n" for i, j in self.edges)

    def to_dot(self) -> str:
        lines = [f'digraph taxonomy {{\n  label="coverage >= {self.threshold:g}%";']
        for c, comp in enumerate(self.components):
            lines.append(f"  subgraph cluster_{c} {{ label=\"group {c}\";")
            lines += [f'    "{self.family_ids[m]}";' for m in comp]
            lines.append("  }")
        lines += [f'  "{self.family_ids[i]}" -> "{self.family_ids[j]}";' for i, j in self.edges]
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_taxonomy(cov: CoverageMatrix, threshold: float = 70.0) -> Taxonomy:
    """Edge i->j when detector i reaches ``threshold`` on family j; components
    of the graph with directions ignored."""
    if not 0.0 < threshold < 100.0:
        raise ContractError(f"threshold {threshold} outside (0, 100)")
    k = len(cov.family_ids)
    edges = [(i, j) for i in range(k) for j in range(k) if i != j and cov.acc[i, j] >= threshold]
    parent = list(range(k))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for m in range(k):
        groups.setdefault(find(m), []).append(m)
    components = sorted(groups.values(), key=lambda c: c[0])
    return Taxonomy(edges, components, list(cov.family_ids), threshold)


def default_detector_factory(shape, rng: np.random.Generator) -> Classifier:
    return Classifier.init(ArchSpec(tuple(shape), num_classes=2), rng)


def coverage_schedule() -> TrainSchedule:
    return TrainSchedule.scaled(1500, 0.02)


def coverage_matrix(family_ids: Sequence[str], family_train: Sequence[LabeledSet], family_test: Sequence[LabeledSet],
                    real_train: LabeledSet, rng: np.random.Generator,
                    detector_factory: Callable[..., Classifier] = default_detector_factory,
                    schedule: TrainSchedule | None = None) -> CoverageMatrix:
    """Train one real-vs-family detector per family and score it on every
    family's test forgeries."""
    k = len(family_ids)
    if k < 2:
        raise ContractError("coverage analysis needs at least two families")
    schedule = schedule or coverage_schedule()
    acc = np.zeros((k, k))
    seeds = [child_seed(rng) for _ in range(k)]
    shape = real_train.images.shape[1:]
    for i in range(k):
        data = LabeledSet.concat([real_train.relabel(0), family_train[i].relabel(1)])
        det_rng = make_rng(seeds[i])
        try:
            det, _ = train(detector_factory(shape, det_rng), data, schedule, MethodSpec(Method.IB), det_rng,
                           minority_label=-1)
        except Exception as exc:
            raise RuntimeError(f"coverage detector for family {family_ids[i]} failed: {exc}") from exc
        for j in range(k):
            p_fake = predict_proba(det, family_test[j].images)[:, 1]
            acc[i, j] = 100.0 * float(np.mean(p_fake >= 0.5))
    cov = CoverageMatrix(acc, list(family_ids))
    for fid in cov.off_diagonal_maxima():
        log.warning("detector %s scores higher off-diagonal than on its own family", fid)
    return cov
