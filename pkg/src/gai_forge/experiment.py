"""Experiment configuration and the pipeline stages behind the command line.

A config is a nested dict of plain values, read from TOML and patched with
dotted ``key=value`` overrides. Every stage caches its products under a
directory named by the hash of exactly the config keys that determine them,
so reruns reuse work and never overwrite data produced by a different config.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .benchkit.benchmark import BenchmarkSpec, FamilyData, assemble_benchmark
from .benchkit.coverage import CoverageMatrix, build_taxonomy, coverage_matrix
from .benchkit.metrics import MetricsReport, aggregate_runs, evaluate
from .benchkit.synth import ForgeryFamilySpec, default_roster, generate_family_dataset, generate_real_dataset
from .dataset import LabeledSet
from .diffnet import ArchSpec, Classifier, load_checkpoint, save_checkpoint
from .gai import GaiConfig, dump_quintuple, gai_generate
from .numcore import ContractError, make_rng
from .trainkit import Method, MethodSpec, TrainSchedule, train

THREADS_ENV = "GAI_FORGE_THREADS"


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (a usage error)."""


DEFAULTS: dict = {
    "seeds": [0, 1, 2],
    "output": "gai-forge-out",
    "data": {
        "seed": 0,
        "image_size": 16,
        "train_count": 10000,
        "test_count": 700,
        "real_test_count": 2800,
        "real_train_count": -1,  # -1: sum of the majority train counts
        "train_counts": {},  # per-family overrides
        "test_counts": {},
        "videos": {},  # per-family: draw training content from this many identities
    },
    "roster": [],  # empty: the built-in six-family roster
    "benchmark": {
        "majority": ["S1", "S2", "C1", "C2"],
        "minority": "P1",
        "shots": 50,
        "real_count": -1,
        "seed": 0,
        "threshold": 70.0,
        "max_shot_fraction": 0.01,
    },
    "model": {"conv_channels": [8, 16], "hidden": 64},
    "method": {"name": "gai"},
    "gai": {"T": 10, "eta": 1.0, "lam": 0.5, "beta": 10.0, "tau": 0.5, "p": 0.99, "alpha0": 0.75,
            "noise_scale": 0.01, "restrain": "prob"},
    "schedule": {
        "base": {"iterations": 3000, "lr": 0.05},
        "finetune": {"iterations": 600, "lr": 0.005},
        "batch_size": 32,
        "momentum": 0.9,
        "weight_decay": 1e-4,
    },
    "coverage": {"iterations": 1500, "lr": 0.02, "train_count": 3000, "seed": 0},
    "metrics": {"fpr_point": 0.01},
}

# tables whose keys are free-form family ids
_OPEN_TABLES = {("data", "train_counts"), ("data", "test_counts"), ("data", "videos")}

SWEEPS = {
    "tau": ("gai.tau", [0.0, 0.25, 0.5]),
    "lambda": ("gai.lam", [0.0, 0.5, 1.0]),
    "alpha0": ("gai.alpha0", [0.5, 0.75, 1.0]),
    "shots": ("benchmark.shots", [10, 50, 100]),
}


def digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def parse_value(text: str):
    """A TOML scalar or array if it parses as one, else the raw string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _merge(base: dict, patch: dict, path: tuple = ()) -> None:
    for key, value in patch.items():
        where = path + (key,)
        if path in _OPEN_TABLES:
            base[key] = value
            continue
        if key not in base:
            raise ConfigError(f"unknown config key {'.'.join(where)}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {'.'.join(where)} must be a table")
            _merge(base[key], value, where)
        elif isinstance(base[key], float) and isinstance(value, int) and not isinstance(value, bool):
            base[key] = float(value)  # so "tau=0" and "tau=0.0" hash alike
        else:
            base[key] = value


def _set_dotted(raw: dict, key: str, value) -> None:
    parts = key.split(".")
    patch: dict = {}
    node = patch
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    _merge(raw, patch)


class ExperimentConfig:
    """Resolved experiment settings; ``raw`` is the full nested dict."""

    def __init__(self, raw: dict):
        self.raw = raw
        self._validate()

    @classmethod
    def load(cls, path: str | Path | None = None, overrides=()) -> "ExperimentConfig":
        raw = copy.deepcopy(DEFAULTS)
        if path is not None:
            try:
                with open(path, "rb") as fh:
                    _merge(raw, tomllib.load(fh))
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, value = item.split("=", 1)
            _set_dotted(raw, key.strip(), parse_value(value.strip()))
        return cls(raw)

    def with_overrides(self, **dotted) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        for key, value in dotted.items():
            _set_dotted(raw, key, value)
        return ExperimentConfig(raw)

    def _validate(self) -> None:
        seeds = self.raw["seeds"]
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
            raise ConfigError(f"seeds must be a nonempty list of non-negative integers, got {seeds!r}")
        if len(set(seeds)) != len(seeds):
            raise ConfigError(f"seeds must be distinct, got {seeds}")
        try:
            self.method
            roster = self.roster()
            ids = [f.family_id for f in roster]
            if len(set(ids)) != len(ids):
                raise ConfigError(f"duplicate family ids in roster {ids}")
            spec = self.benchmark_spec()
            for fid in (*spec.majority, spec.minority):
                if fid not in ids:
                    raise ConfigError(f"benchmark family {fid} is not in the roster {ids}")
            self.gai_config()
            self.arch()
            self.schedule("base"), self.schedule("finetune"), self.coverage_schedule()
            if not 0.0 <= self.fpr_point < 1.0:
                raise ConfigError(f"metrics.fpr_point {self.fpr_point} outside [0, 1)")
        except (ContractError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    # -- typed views -------------------------------------------------------------
    @property
    def seeds(self) -> list[int]:
        return list(self.raw["seeds"])

    @property
    def output(self) -> Path:
        return Path(self.raw["output"])

    @property
    def method(self) -> Method:
        name = self.raw["method"]["name"]
        try:
            return Method(name)
        except ValueError:
            raise ConfigError(f"unknown method {name!r}; choose from {[m.value for m in Method]}") from None

    @property
    def fpr_point(self) -> float:
        return float(self.raw["metrics"]["fpr_point"])

    @property
    def image_shape(self) -> tuple[int, int, int]:
        n = int(self.raw["data"]["image_size"])
        return (n, n, 3)

    @property
    def hash(self) -> str:
        """Hash of everything that can change an output (the output path cannot)."""
        return digest({k: v for k, v in self.raw.items() if k != "output"})

    def roster(self) -> list[ForgeryFamilySpec]:
        if not self.raw["roster"]:
            return default_roster()
        return [ForgeryFamilySpec.from_dict(dict(d)) for d in self.raw["roster"]]

    def benchmark_spec(self) -> BenchmarkSpec:
        b = dict(self.raw["benchmark"])
        b["majority"] = tuple(b["majority"])
        b["real_count"] = None if b["real_count"] < 0 else b["real_count"]
        return BenchmarkSpec(**b)

    def gai_config(self) -> GaiConfig:
        g = dict(self.raw["gai"])
        alpha0 = g.pop("alpha0")
        cfg = GaiConfig(**g).with_alpha0(alpha0)
        # minority label is filled in by training; check the rest now
        replace(cfg, minority_label=1).validate()
        return cfg

    def arch(self) -> ArchSpec:
        m = self.raw["model"]
        return ArchSpec(self.image_shape, tuple(m["conv_channels"]), int(m["hidden"]),
                        self.benchmark_spec().num_classes)

    def schedule(self, stage: str) -> TrainSchedule:
        s = self.raw["schedule"]
        st = s[stage]
        return self._scaled(st["iterations"], st["lr"])

    def coverage_schedule(self) -> TrainSchedule:
        c = self.raw["coverage"]
        return self._scaled(c["iterations"], c["lr"])

    def _scaled(self, iterations, lr) -> TrainSchedule:
        s = self.raw["schedule"]
        return TrainSchedule.scaled(int(iterations), float(lr), momentum=float(s["momentum"]),
                                    weight_decay=float(s["weight_decay"]), batch_size=int(s["batch_size"]))

    # -- data sizes -------------------------------------------------------------
    def train_count(self, fid: str) -> int:
        d = self.raw["data"]
        return int(d["train_counts"].get(fid, d["train_count"]))

    def test_count(self, fid: str) -> int:
        d = self.raw["data"]
        return int(d["test_counts"].get(fid, d["test_count"]))

    def real_train_count(self) -> int:
        n = int(self.raw["data"]["real_train_count"])
        if n >= 0:
            return n
        return sum(self.train_count(m) for m in self.raw["benchmark"]["majority"])

    # -- cache keys -------------------------------------------------------------
    def data_key(self) -> str:
        return digest({"data": self.raw["data"], "roster": [f.to_dict() for f in self.roster()],
                       "real_train": self.real_train_count()})[:16]

    def bench_key(self) -> str:
        return digest({"data": self.data_key(), "benchmark": self.raw["benchmark"]})[:16]

    def base_key(self) -> str:
        s = self.raw["schedule"]
        return digest({"bench": self.bench_key(), "model": self.raw["model"], "base": s["base"],
                       "common": {k: v for k, v in s.items() if k not in ("base", "finetune")}})[:16]

    def teacher_key(self) -> str:
        return digest({"base": self.base_key(), "finetune": self.raw["schedule"]["finetune"]})[:16]

    def coverage_key(self) -> str:
        s = {k: v for k, v in self.raw["schedule"].items() if k not in ("base", "finetune")}
        return digest({"data": self.data_key(), "coverage": self.raw["coverage"], "common": s})[:16]


# -- small IO helpers ---------------------------------------------------------------

def atomic_write(path: Path, data: bytes | str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data.encode() if isinstance(data, str) else data)
    tmp.replace(path)


def _save_set(ds: LabeledSet, path: Path) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    ds.save(tmp)
    tmp.replace(path)
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_set(path: Path, what: str) -> LabeledSet:
    if not path.exists():
        raise FileNotFoundError(f"missing dataset for {what}: {path}")
    return LabeledSet.load(path)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from None


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# -- stages -----------------------------------------------------------------------

def data_dir(cfg: ExperimentConfig) -> Path:
    return cfg.output / "data" / cfg.data_key()


def generate_data(cfg: ExperimentConfig) -> Path:
    """Render the real pool and every roster family; write a manifest."""
    root = data_dir(cfg)
    seed = int(cfg.raw["data"]["seed"])
    shape = cfg.image_shape
    real_src = 1000 * seed
    manifest = {"data_key": cfg.data_key(), "seed": seed, "image_shape": list(shape), "families": []}
    real_files = {}
    for split, n in (("train", cfg.real_train_count()), ("test", int(cfg.raw["data"]["real_test_count"]))):
        if n:
            real_files[split] = _save_set(generate_real_dataset(real_src, n, split, shape=shape),
                                          root / "real" / f"{split}.gait")
    manifest["real"] = {"source_seed": real_src, "train": cfg.real_train_count(),
                        "test": int(cfg.raw["data"]["real_test_count"]), "files": real_files}
    videos = cfg.raw["data"]["videos"]
    for i, spec in enumerate(cfg.roster()):
        src = real_src + i + 1
        fdir = root / "families" / spec.family_id
        fdir.mkdir(parents=True, exist_ok=True)
        files = {}
        counts = {"train": cfg.train_count(spec.family_id), "test": cfg.test_count(spec.family_id)}
        for split, n in counts.items():
            if n:
                v = videos.get(spec.family_id) if split == "train" else None
                ds = generate_family_dataset(spec, src, n, split, shape=shape, videos=v)
                files[split] = _save_set(ds, fdir / f"{split}.gait")
        manifest["families"].append({"family_id": spec.family_id, "spec": spec.to_dict(), "spec_digest": spec.digest(),
                                     "source_seed": src, **counts, "files": files})
    atomic_write(root / "manifest.json", _dumps(manifest))
    return root


def ensure_data(cfg: ExperimentConfig) -> Path:
    root = data_dir(cfg)
    if not (root / "manifest.json").exists():
        generate_data(cfg)
    return root


def load_family(cfg: ExperimentConfig, fid: str) -> FamilyData:
    root = data_dir(cfg)
    spec = {f.family_id: f for f in cfg.roster()}[fid]
    return FamilyData(spec, _load_set(root / "families" / fid / "train.gait", f"family {fid} (train)"),
                      _load_set(root / "families" / fid / "test.gait", f"family {fid} (test)"))


def load_real(cfg: ExperimentConfig) -> tuple[LabeledSet, LabeledSet]:
    root = data_dir(cfg)
    return (_load_set(root / "real" / "train.gait", "real (train)"),
            _load_set(root / "real" / "test.gait", "real (test)"))


def coverage_dir(cfg: ExperimentConfig) -> Path:
    return cfg.output / "coverage" / cfg.coverage_key()


def run_coverage(cfg: ExperimentConfig) -> tuple[CoverageMatrix, Path]:
    """Cross-family detection matrix and its taxonomy, read from generated data."""
    if not (data_dir(cfg) / "manifest.json").exists():
        raise FileNotFoundError(f"no generated data at {data_dir(cfg)}; run gen-data first")
    c = cfg.raw["coverage"]
    n = int(c["train_count"])
    ids = [f.family_id for f in cfg.roster()]
    fams = [load_family(cfg, fid) for fid in ids]
    real_train, _ = load_real(cfg)
    real_train = real_train.subset(np.arange(min(n, len(real_train))))
    cov = coverage_matrix(ids, [f.train.subset(np.arange(min(n, len(f.train)))) for f in fams],
                          [f.test for f in fams], real_train, make_rng(int(c["seed"]), 3),
                          schedule=cfg.coverage_schedule())
    tax = build_taxonomy(cov, float(cfg.raw["benchmark"]["threshold"]))
    out = coverage_dir(cfg)
    atomic_write(out / "coverage.csv", cov.to_csv())
    atomic_write(out / "taxonomy.dot", tax.to_dot())
    atomic_write(out / "edges.txt", tax.edge_list())
    atomic_write(out / "components.json", _dumps({"coverage_key": cfg.coverage_key(),
                                                    "components": tax.component_of()}))
    return cov, out


def bench_dir(cfg: ExperimentConfig) -> Path:
    return cfg.output / "bench" / cfg.bench_key()


def assemble(cfg: ExperimentConfig) -> Path:
    ensure_data(cfg)
    spec = cfg.benchmark_spec()
    cov_file = coverage_dir(cfg) / "coverage.csv"
    cov = CoverageMatrix.from_csv(cov_file.read_text()) if cov_file.exists() else None
    fams = {fid: load_family(cfg, fid) for fid in (*spec.majority, spec.minority)}
    train_set, test_set = assemble_benchmark(spec, fams, load_real(cfg), coverage=cov)
    out = bench_dir(cfg)
    _save_set(train_set, out / "train.gait")
    _save_set(test_set, out / "test.gait")
    counts = {str(k): int(v) for k, v in zip(*np.unique(train_set.labels, return_counts=True))}
    atomic_write(out / "benchmark.json", _dumps({"bench_key": cfg.bench_key(), "spec": cfg.raw["benchmark"],
                                                  "coverage_checked": cov is not None, "train_counts": counts,
                                                  "test_size": len(test_set)}))
    return out


def load_benchmark(cfg: ExperimentConfig) -> tuple[LabeledSet, LabeledSet]:
    out = bench_dir(cfg)
    if not (out / "benchmark.json").exists():
        assemble(cfg)
    return LabeledSet.load(out / "train.gait"), LabeledSet.load(out / "test.gait")


def _model_path(cfg: ExperimentConfig, kind: str, seed: int) -> Path:
    key = cfg.base_key() if kind == "base" else cfg.teacher_key()
    return cfg.output / "models" / f"{kind}-{key}-seed{seed}.ckpt"


def base_model(cfg: ExperimentConfig, seed: int, train_set: LabeledSet | None = None) -> Classifier:
    """The model trained on majority data only; it is also the Unseen baseline."""
    path = _model_path(cfg, "base", seed)
    if path.exists():
        return load_checkpoint(path)
    if train_set is None:
        train_set, _ = load_benchmark(cfg)
    rng = make_rng(seed, 0)
    model, _ = train(Classifier.init(cfg.arch(), rng), train_set, cfg.schedule("base"),
                     MethodSpec(Method.UNSEEN), rng)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, path)
    return model


def teacher_model(cfg: ExperimentConfig, seed: int, train_set: LabeledSet | None = None) -> Classifier:
    """Class-balanced finetune of the base model of the same seed."""
    path = _model_path(cfg, "teacher", seed)
    if path.exists():
        return load_checkpoint(path)
    if train_set is None:
        train_set, _ = load_benchmark(cfg)
    base = base_model(cfg, seed, train_set)
    model, _ = train(base, train_set, cfg.schedule("finetune"), MethodSpec(Method.CB), make_rng(seed, 1))
    save_checkpoint(model, path)
    return model


def _finetune(cfg: ExperimentConfig, method: Method, seed: int, train_set: LabeledSet):
    """(model, history or None, teacher checksum or None) for one seed."""
    base = base_model(cfg, seed, train_set)
    if method is Method.UNSEEN:
        return base, None, None
    if method is Method.CB:
        return teacher_model(cfg, seed, train_set), None, None
    teacher = None
    if method in (Method.GAI, Method.GAI_MINUS):
        teacher = teacher_model(cfg, seed, train_set)
    gai = cfg.gai_config() if method not in (Method.IB,) else None
    spec = MethodSpec(method, gai=gai, teacher=teacher, teacher_ref=str(_model_path(cfg, "teacher", seed)))
    before = teacher.checksum() if teacher is not None else None
    model, history = train(base, train_set, cfg.schedule("finetune"), spec, make_rng(seed, 1))
    if teacher is not None and teacher.checksum() != before:
        raise ContractError("teacher parameters changed during training")
    return model, history, before


def report_dir(cfg: ExperimentConfig) -> Path:
    return cfg.output / "reports" / f"{cfg.method.value}-{cfg.hash[:12]}"


def _run_seed(raw: dict, seed: int) -> dict:
    cfg = ExperimentConfig(raw)
    train_set, test_set = load_benchmark(cfg)
    model, history, teacher_sum = _finetune(cfg, cfg.method, seed, train_set)
    rep = evaluate(model, test_set, cfg.fpr_point, cfg.benchmark_spec().minority_label)
    out = report_dir(cfg)
    doc = {"config_hash": cfg.hash, "method": cfg.method.value, "seed": seed, "report": json.loads(rep.to_json()),
           "model_checksum": model.checksum()}
    if history is not None:
        doc["generated"], doc["accepted"] = history.generated, history.accepted
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["config_hash", "iteration", "lr", "loss", "train_minority_acc"],
                           lineterminator="\n")
        w.writeheader()
        for row in history.rows:
            w.writerow({"config_hash": cfg.hash, **row})
        atomic_write(out / f"seed{seed}_history.csv", buf.getvalue())
    if teacher_sum is not None:
        doc["teacher_checksum"] = teacher_sum
    atomic_write(out / f"seed{seed}.json", _dumps(doc))
    return doc


def run_experiment(cfg: ExperimentConfig) -> tuple[MetricsReport, Path]:
    """Train and evaluate the configured method for every seed; write per-seed
    and aggregate reports. Seeds are independent, so they may run in parallel
    without changing any output."""
    train_set, _ = load_benchmark(cfg)
    workers = min(worker_count(), len(cfg.seeds))
    if workers > 1:
        # shared products first, so workers only read them
        for s in cfg.seeds:
            base_model(cfg, s, train_set)
        with ProcessPoolExecutor(workers) as pool:
            docs = list(pool.map(_run_seed, [cfg.raw] * len(cfg.seeds), cfg.seeds))
    else:
        docs = [_run_seed(cfg.raw, s) for s in cfg.seeds]
    reports = [MetricsReport(**d["report"]) for d in docs]
    agg = aggregate_runs(reports)
    out = report_dir(cfg)
    doc = {"config_hash": cfg.hash, "method": cfg.method.value, "seeds": cfg.seeds,
           "config": cfg.raw | {"output": None}, "report": json.loads(agg.to_json())}
    atomic_write(out / "aggregate.json", _dumps(doc))
    atomic_write(out / "aggregate.csv", _csv_table([{"config_hash": cfg.hash, "method": cfg.method.value,
                                                     **agg.csv_row()}]))
    return agg, out


def _csv_table(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def run_ablation(cfg: ExperimentConfig, sweep: str, values=None) -> tuple[list[MetricsReport], Path]:
    if sweep not in SWEEPS:
        raise ConfigError(f"unknown sweep {sweep!r}; choose from {sorted(SWEEPS)}")
    key, default_values = SWEEPS[sweep]
    values = list(default_values if values is None else values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows, reports = [], []
    for v in values:
        sub = cfg.with_overrides(**{key: v})
        agg, _ = run_experiment(sub)
        reports.append(agg)
        rows.append({"sweep": sweep, "value": v, "method": sub.method.value, **agg.csv_row(),
                     "config_hash": sub.hash})
    out = cfg.output / "ablate" / f"{sweep}-{cfg.method.value}-{cfg.hash[:12]}.csv"
    atomic_write(out, _csv_table(rows))
    return reports, out


def export_samples(cfg: ExperimentConfig, seed: int, count: int) -> Path:
    """Generate ``count`` interpolated samples with the seed's teacher, using the
    base model as the student, and dump each (x_major, x_minor, x*_0, x_adv, alpha)."""
    train_set, _ = load_benchmark(cfg)
    spec = cfg.benchmark_spec()
    g = teacher_model(cfg, seed, train_set)
    f = base_model(cfg, seed, train_set)
    gcfg = replace(cfg.gai_config(), minority_label=spec.minority_label)
    rng = make_rng(seed, 9)
    minor = np.flatnonzero(train_set.labels == spec.minority_label)
    major = np.flatnonzero(train_set.labels != spec.minority_label)
    out = cfg.output / "samples" / f"seed{seed}-{cfg.hash[:12]}"
    index = []
    for i in range(count):
        a = int(rng.choice(major))
        b = int(rng.choice(minor))
        res = gai_generate(train_set.images[a], train_set.images[b], int(train_set.labels[a]), gcfg, g, f,
                           make_rng(seed, 9, i))
        out.mkdir(parents=True, exist_ok=True)
        dump_quintuple(out / f"sample{i}.gait", train_set.images[a], train_set.images[b], gcfg, res)
        index.append({"file": f"sample{i}.gait", "major_index": a, "minor_index": b,
                      "source_class": int(train_set.labels[a]), "accepted": bool(res.accepted),
                      "teacher_confidence": res.teacher_confidence})
    atomic_write(out / "index.json", _dumps({"config_hash": cfg.hash, "seed": seed, "samples": index}))
    return out
