"""Synthetic forgery benchmark: data families, coverage taxonomy, assembly, metrics."""

from .synth import (
    ArtifactKind,
    ForgeryFamilySpec,
    LabeledSet,
    default_roster,
    generate_family_dataset,
    generate_real_dataset,
    render_real,
)
from .coverage import CoverageMatrix, Taxonomy, build_taxonomy, coverage_matrix
from .benchmark import BenchmarkSpec, assemble_benchmark, FamilyData, make_family_data
from .metrics import MetricsReport, aggregate_runs, auc_pairwise, auc_trapezoid, evaluate, evaluate_scores, fake_scores

__all__ = [
    "ArtifactKind", "ForgeryFamilySpec", "LabeledSet", "default_roster", "generate_family_dataset",
    "generate_real_dataset", "render_real", "CoverageMatrix", "Taxonomy", "build_taxonomy", "coverage_matrix",
    "BenchmarkSpec", "assemble_benchmark", "FamilyData", "make_family_data", "MetricsReport", "aggregate_runs",
    "auc_pairwise", "auc_trapezoid", "evaluate", "evaluate_scores", "fake_scores",
]
