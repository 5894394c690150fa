"""Experiment orchestration: metrics, repeated runs, sensitivity grids, reports.

Report files are byte-deterministic for a fixed configuration. Wall-clock
training times are kept out of them and written to a ``*.timing.json``
sidecar instead.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .cilda import CildaConfig, CildaModel, cilda_train
from .cloudfeat import FeatureConfig, featurize_dataset
from .dataio import (
    DEFAULT_CLASSES,
    DomainDataset,
    SynthSpec,
    load_manifest,
    read_dataset_csv,
    split,
    synth_domains,
    table_counts,
    write_dataset_csv,
)
from .ensemble import EnsembleModel, train_ensemble
from .errors import ShapeMismatch, UnknownParameter, ValidationError
from .scn import ScnModel, scn_train
from .search import parallel_map

TASKS = ("feature-extract", "train", "evaluate", "ensemble", "sensitivity", "synth-bench")
SWEEPABLE = {"cs": "C_S", "ct": "C_T", "lambda": "lam"}
# grids searched in the original experiments
DECADES = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
LAMBDA_GRID = (0.1, 0.5, 1.0, 2.0, 10.0, 20.0, 50.0)


def fmt(v: float) -> str:
    return f"{v:.17g}"


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def confusion(pred, truth, m: int) -> np.ndarray:
    """Counts with truth along rows and prediction along columns."""
    pred = np.asarray(pred, int)
    truth = np.asarray(truth, int)
    if pred.shape != truth.shape:
        raise ShapeMismatch("prediction and truth lengths differ")
    C = np.zeros((m, m), int)
    np.add.at(C, (truth, pred), 1)
    return C


def accuracy_of(C: np.ndarray) -> float:
    total = C.sum()
    return float(np.trace(C) / total) if total else 0.0


def precision_recall(C: np.ndarray):
    C = np.asarray(C, float)
    tp = np.diag(C)
    col, row = C.sum(axis=0), C.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(col > 0, tp / col, 0.0)
        recall = np.where(row > 0, tp / row, 0.0)
    return precision, recall


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class MethodResult:
    name: str
    m: int
    seeds: list = field(default_factory=list)
    confusions: list = field(default_factory=list)
    train_seconds: list = field(default_factory=list)
    n_nodes: list = field(default_factory=list)

    def add(self, seed, C, seconds=0.0, n_nodes=0):
        self.seeds.append(int(seed))
        self.confusions.append(np.asarray(C, int))
        self.train_seconds.append(float(seconds))
        self.n_nodes.append(int(n_nodes))

    @property
    def accuracies(self) -> list:
        return [accuracy_of(C) for C in self.confusions]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    @property
    def confusion(self) -> np.ndarray:
        return np.sum(self.confusions, axis=0) if self.confusions else np.zeros((self.m, self.m), int)

    def to_dict(self) -> dict:
        precision, recall = precision_recall(self.confusion)
        return {
            "seeds": self.seeds,
            "accuracy": self.accuracies,
            "mean_accuracy": self.mean,
            "std_accuracy": self.std,
            "confusion": self.confusion.tolist(),
            "precision": precision.tolist(),
            "recall": recall.tolist(),
            "n_nodes": self.n_nodes,
        }


@dataclass
class Report:
    task: str
    m: int = 0
    methods: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def method(self, name: str) -> MethodResult:
        if name not in self.methods:
            self.methods[name] = MethodResult(name, self.m)
        return self.methods[name]

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "m": self.m,
            "methods": {k: v.to_dict() for k, v in self.methods.items()},
            "artifacts": [str(a) for a in self.artifacts],
            "extra": self.extra,
        }

    def timing(self) -> dict:
        return {k: {"train_seconds": v.train_seconds} for k, v in self.methods.items()}

    def write(self, path) -> list:
        """JSON report, per-run CSV next to it, and the timing sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        csv_path = path.with_suffix(".csv")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "seed", "accuracy", "n_nodes"])
            for name, res in self.methods.items():
                for s, a, n in zip(res.seeds, res.accuracies, res.n_nodes):
                    w.writerow([name, s, fmt(a), n])
        timing = path.with_suffix(".timing.json")
        timing.write_text(json.dumps(self.timing(), indent=2) + "\n")
        return [path, csv_path, timing]


# ---------------------------------------------------------------------------
# models on disk
# ---------------------------------------------------------------------------

def save_model(model, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(model.to_json() + "\n")


def load_model(path):
    d = json.loads(Path(path).read_text())
    kind = d.get("kind")
    if kind == "scn":
        return ScnModel.from_dict(d)
    if kind == "cilda":
        return CildaModel.from_dict(d)
    if kind == "cileda":
        return EnsembleModel.from_dict(d)
    raise ValidationError(f"{path}: unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchSpec:
    """Synthetic stand-in for the four-condition bearing protocol.

    Three fault classes with 5 labeled samples each plus a normal class with
    25, 30 test samples per class, four working conditions A-D.
    """

    n_classes: int = 4
    n_features: int = 10
    train_fault: int = 5
    train_normal: int = 25
    test_per_class: int = 30
    shift: float = 1.0
    rotation: float = 0.3
    warp: float = 0.5
    class_sep: float = 3.0
    noise_sigma: float = 1.0
    target: str = "B"
    source: str = "A"
    domains: tuple = ("A", "B", "C", "D")

    def datasets(self, seed: int):
        train = table_counts(self.n_classes, self.train_fault, self.train_normal)
        test = {c: self.test_per_class for c in range(self.n_classes)}
        pool = [train[c] + test[c] for c in range(self.n_classes)]
        spec = SynthSpec(n_classes=self.n_classes, n_features=self.n_features,
                         samples_per_class=pool, n_domains=len(self.domains),
                         shift=self.shift, rotation=self.rotation, warp=self.warp,
                         class_sep=self.class_sep, noise_sigma=self.noise_sigma,
                         seed=seed, domain_ids=self.domains)
        tr, te = {}, {}
        for ds in synth_domains(spec):
            tr[ds.domain_id], te[ds.domain_id] = split(ds, train, test, seed)
        return tr, te


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    cilda: CildaConfig = CildaConfig()
    repetitions: int = 1
    seed: int = 0
    n_classes: int = DEFAULT_CLASSES
    # feature-extract
    manifest: str | None = None
    features: FeatureConfig = FeatureConfig()
    out_dir: str | None = None
    # train / evaluate / ensemble / sensitivity
    variant: str = "cilda2"
    source: str | None = None
    target: str | None = None
    sources: tuple = ()
    test: str | None = None
    model: str | None = None
    report: str | None = None
    # sensitivity
    sweep: tuple = ("cs", "lambda")
    grid: dict = field(default_factory=dict)
    grid_out: str | None = None
    # synth-bench
    bench: BenchSpec = BenchSpec()

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValidationError(f"task must be one of {TASKS}")
        if self.repetitions < 1:
            raise ValidationError("repetitions must be >= 1")

    @property
    def seeds(self) -> list:
        return [self.seed + k for k in range(self.repetitions)]


def _need(cfg: ExperimentConfig, *names):
    missing = [n for n in names if getattr(cfg, n) in (None, "", ())]
    if missing:
        raise ValidationError(f"task {cfg.task!r} needs {', '.join(missing)}")


def _load(path, m):
    return read_dataset_csv(path, n_classes=m)


def fit(variant: str, source: DomainDataset | None, target: DomainDataset,
        cfg: CildaConfig):
    """Train one model of the requested variant and time it."""
    t0 = time.perf_counter()
    if variant in ("sc1", "sc3"):
        model = scn_train(target, cfg.scn(), variant)
    else:
        if source is None:
            raise ValidationError(f"variant {variant} needs a source dataset")
        model = cilda_train(source, target, replace(cfg, variant=variant))
    return model, time.perf_counter() - t0


def evaluate(model, test: DomainDataset) -> np.ndarray:
    if test.n and test.p != model.p:
        raise ShapeMismatch(f"test width {test.p} vs model width {model.p}")
    return confusion(model.predict(test.features), test.labels, model.m)


def _repeat(report: Report, name, seeds, job: Callable):
    # job(seed) -> (confusion, seconds, n_nodes); runs in parallel, merges in order
    for seed, (C, sec, n) in zip(seeds, parallel_map(job, seeds)):
        report.method(name).add(seed, C, sec, n)


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def _task_extract(cfg: ExperimentConfig) -> Report:
    _need(cfg, "manifest", "out_dir")
    metas = load_manifest(cfg.manifest, cfg.features.n_classes)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = Report(cfg.task, cfg.features.n_classes)
    by_domain: dict = {}
    for meta in metas:
        by_domain.setdefault(meta.domain_id, []).append(meta)
    for dom in sorted(by_domain):
        ds = featurize_dataset(by_domain[dom], cfg.features)
        path = out / f"{dom}.csv"
        write_dataset_csv(path, ds)
        report.artifacts.append(path)
        report.extra[dom] = {"samples": ds.n, "class_counts": ds.class_counts.tolist()}
    return report


def _task_train(cfg: ExperimentConfig) -> Report:
    _need(cfg, "target")
    m = cfg.n_classes
    target = _load(cfg.target, m)
    source = _load(cfg.source, m) if cfg.source else None
    test = _load(cfg.test, m) if cfg.test else None
    report = Report(cfg.task, m)
    models = {}

    def job(seed):
        model, sec = fit(cfg.variant, source, target, replace(cfg.cilda, seed=seed))
        models[seed] = model
        C = evaluate(model, test) if test is not None else np.zeros((m, m), int)
        return C, sec, model.n_nodes

    _repeat(report, cfg.variant, cfg.seeds, job)
    if cfg.model:
        save_model(models[cfg.seed], cfg.model)
        report.artifacts.append(cfg.model)
    first = models[cfg.seed]
    report.extra["stop_reason"] = first.stop_reason
    report.extra["trace"] = list(first.trace)
    return report


def _task_evaluate(cfg: ExperimentConfig) -> Report:
    _need(cfg, "model", "test")
    model = load_model(cfg.model)
    test = _load(cfg.test, model.m)
    report = Report(cfg.task, model.m)
    name = model.to_dict().get("variant", "cileda")
    report.method(name).add(cfg.seed, evaluate(model, test), 0.0,
                            getattr(model, "n_nodes", len(getattr(model, "members", ()))))
    return report


def _task_ensemble(cfg: ExperimentConfig) -> Report:
    _need(cfg, "target", "sources")
    m = cfg.n_classes
    target = _load(cfg.target, m)
    sources = [_load(s, m) for s in cfg.sources]
    datasets = {target.domain_id: target}
    for s in sources:
        if s.domain_id in datasets:
            raise ValidationError(f"duplicate domain id {s.domain_id!r}")
        datasets[s.domain_id] = s
    test = _load(cfg.test, m) if cfg.test else None
    report = Report(cfg.task, m)
    order = [s.domain_id for s in sources]
    models = {}

    def job(seed):
        t0 = time.perf_counter()
        ens = train_ensemble(datasets, target.domain_id, replace(cfg.cilda, seed=seed), order)
        sec = time.perf_counter() - t0
        models[seed] = ens
        C = evaluate(ens, test) if test is not None else np.zeros((m, m), int)
        return C, sec, sum(mb.n_nodes for mb in ens.members)

    _repeat(report, "cileda", cfg.seeds, job)
    if cfg.model:
        save_model(models[cfg.seed], cfg.model)
        report.artifacts.append(cfg.model)
    return report


def _dedup(values) -> list:
    out = []
    for v in values:
        v = float(v)
        if v not in out:
            out.append(v)
    return out


def sensitivity_grid(cfg: ExperimentConfig, fixed: dict | None = None,
                     sweep: Sequence[str] | None = None, grid: dict | None = None):
    """Mean/std accuracy over a two-parameter grid with the third held fixed.

    Returns the grid rows ``(v1, v2, mean, std)``; writes CSV when
    ``cfg.grid_out`` is set. Sweep values default to the decade grid for
    C_S/C_T and to the lambda list otherwise; duplicates are dropped keeping
    first occurrence.
    """
    sweep = tuple(sweep or cfg.sweep)
    grid = dict(cfg.grid if grid is None else grid)
    fixed = dict(fixed or {})
    if len(sweep) != 2 or sweep[0] == sweep[1]:
        raise ValidationError("sweep needs two distinct parameters")
    for name in list(sweep) + list(fixed) + list(grid):
        if name not in SWEEPABLE:
            raise UnknownParameter(f"{name!r}; choose from {sorted(SWEEPABLE)}")
    _need(cfg, "source", "target", "test")
    m = cfg.n_classes
    source, target, test = (_load(p, m) for p in (cfg.source, cfg.target, cfg.test))
    base = replace(cfg.cilda, **{SWEEPABLE[k]: float(v) for k, v in fixed.items()})
    values = [_dedup(grid.get(k) or (LAMBDA_GRID if k == "lambda" else DECADES))
              for k in sweep]
    points = [(a, b) for a in values[0] for b in values[1]]

    def job(point):
        a, b = point
        c = replace(base, **{SWEEPABLE[sweep[0]]: a, SWEEPABLE[sweep[1]]: b})
        accs = []
        for seed in cfg.seeds:
            model, _ = fit(cfg.variant, source, target, replace(c, seed=seed))
            accs.append(accuracy_of(evaluate(model, test)))
        return float(np.mean(accs)), float(np.std(accs))

    rows = [(a, b, mu, sd) for (a, b), (mu, sd) in zip(points, parallel_map(job, points))]
    if cfg.grid_out:
        Path(cfg.grid_out).parent.mkdir(parents=True, exist_ok=True)
        with open(cfg.grid_out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([sweep[0], sweep[1], "mean_acc", "std_acc"])
            for row in rows:
                w.writerow([fmt(v) for v in row])
    return rows


def _task_sensitivity(cfg: ExperimentConfig) -> Report:
    rows = sensitivity_grid(cfg)
    report = Report(cfg.task, cfg.n_classes)
    report.extra["sweep"] = list(cfg.sweep)
    report.extra["grid"] = [list(r) for r in rows]
    if cfg.grid_out:
        report.artifacts.append(cfg.grid_out)
    return report


def bench_run(bench: BenchSpec, cilda: CildaConfig, seed: int) -> dict:
    """One repetition of the synthetic benchmark; returns per-method results."""
    tr, te = bench.datasets(seed)
    test = te[bench.target]
    cfg = replace(cilda, seed=seed)
    out = {}
    model, sec = fit("cilda2", tr[bench.source], tr[bench.target], cfg)
    out["cilda2"] = (evaluate(model, test), sec, model.n_nodes)
    model, sec = fit("sc3", None, tr[bench.target], cfg)
    out["sc3"] = (evaluate(model, test), sec, model.n_nodes)
    sources = [d for d in bench.domains if d != bench.target]
    t0 = time.perf_counter()
    ens = train_ensemble(tr, bench.target, replace(cfg, variant="cilda2"), sources)
    sec = time.perf_counter() - t0
    out["cileda"] = (evaluate(ens, test), sec, sum(mb.n_nodes for mb in ens.members))
    self_member = ens.members[0]
    out["self"] = (evaluate(self_member, test), 0.0, self_member.n_nodes)
    return out


def _task_synth_bench(cfg: ExperimentConfig) -> Report:
    report = Report(cfg.task, cfg.bench.n_classes)
    runs = parallel_map(lambda s: bench_run(cfg.bench, cfg.cilda, s), cfg.seeds)
    for seed, res in zip(cfg.seeds, runs):
        for name, (C, sec, n) in res.items():
            report.method(name).add(seed, C, sec, n)
    report.extra["bench"] = {k: (list(v) if isinstance(v, tuple) else v)
                             for k, v in vars(cfg.bench).items()}
    report.extra["config"] = cfg.cilda.to_dict()
    return report


_DISPATCH = {
    "feature-extract": _task_extract,
    "train": _task_train,
    "evaluate": _task_evaluate,
    "ensemble": _task_ensemble,
    "sensitivity": _task_sensitivity,
    "synth-bench": _task_synth_bench,
}


def run_task(cfg: ExperimentConfig) -> Report:
    """Run one task; writes the report files when ``cfg.report`` is set."""
    report = _DISPATCH[cfg.task](cfg)
    if cfg.report:
        report.artifacts.extend(str(p) for p in report.write(cfg.report))
        # rewrite so the JSON lists its own companion files
        report.write(cfg.report)
    return report
