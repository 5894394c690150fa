"""Recording ingestion, normalization, segmentation and dataset plumbing.

Signals come from plain CSV (one float per line) or raw little-endian
float64 files listed in a JSON manifest. Featurized datasets are cached as
CSV with a ``f0,...,f{p-1},label,domain`` header.
"""
from __future__ import annotations

import csv
import json
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateSignal,
    FileMissing,
    InsufficientSamples,
    ManifestParse,
    NonFiniteSample,
    ShapeMismatch,
    SignalTooShort,
    ValidationError,
)

DEFAULT_CLASSES = 10
FORMATS = ("csv", "f64le")


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RecordingMeta:
    path: Path
    domain_id: str
    label: int
    fault_diameter_mils: float | None = None
    load_hp: int = 0
    rpm: float = 0.0
    sample_rate_hz: float = 12000.0
    format: str = "csv"


@dataclass(frozen=True, eq=False)
class Signal:
    samples: np.ndarray
    sample_rate_hz: float = 12000.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise ValidationError("signal must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise NonFiniteSample("signal contains non-finite samples")
        if not self.sample_rate_hz > 0:
            raise ValidationError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", _frozen(x))

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True, eq=False)
class DomainDataset:
    """Feature matrix with one-hot labels, tagged by working condition."""

    domain_id: str
    features: np.ndarray
    labels_onehot: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        Y = np.asarray(self.labels_onehot, dtype=float)
        if X.ndim != 2 or Y.ndim != 2:
            raise ShapeMismatch("features and labels must be 2-D")
        if X.shape[0] != Y.shape[0]:
            raise ShapeMismatch(
                f"{X.shape[0]} feature rows vs {Y.shape[0]} label rows")
        if Y.size and not (np.all((Y == 0) | (Y == 1))
                           and np.all(Y.sum(axis=1) == 1)):
            raise ValidationError("label rows must be one-hot")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels_onehot", _frozen(Y))

    @classmethod
    def from_labels(cls, domain_id, features, labels, m: int) -> "DomainDataset":
        labels = np.asarray(labels, dtype=int)
        if labels.size and (labels.min() < 0 or labels.max() >= m):
            raise ValidationError(f"labels must lie in [0, {m})")
        Y = np.zeros((labels.size, m))
        Y[np.arange(labels.size), labels] = 1.0
        X = np.asarray(features, dtype=float)
        if X.ndim != 2:
            X = X.reshape(labels.size, -1)
        return cls(str(domain_id), X, Y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def m(self) -> int:
        return self.labels_onehot.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.labels_onehot, axis=1) if self.n else np.zeros(0, int)

    @property
    def class_counts(self) -> np.ndarray:
        return self.labels_onehot.sum(axis=0).astype(int)

    def subset(self, idx) -> "DomainDataset":
        idx = np.asarray(idx, dtype=int)
        return DomainDataset(self.domain_id, self.features[idx], self.labels_onehot[idx])


def normalize(signal: Signal) -> Signal:
    """Min-max scale a recording onto [0, 1]."""
    x = signal.samples
    lo, hi = x.min(), x.max()
    if hi == lo:
        raise DegenerateSignal("constant recording cannot be normalized")
    y = (x - lo) / (hi - lo)
    # pin the endpoints; rounding can leave max at 1 - ulp
    y[x == lo] = 0.0
    y[x == hi] = 1.0
    return Signal(y, signal.sample_rate_hz)


def segment(signal: Signal | np.ndarray, window: int, step: int) -> np.ndarray:
    """Cut into fixed-length windows. Returns a (count, window) array."""
    x = signal.samples if isinstance(signal, Signal) else np.asarray(signal, float)
    if window < 1 or step < 1:
        raise ValidationError("window and step must be >= 1")
    if x.size < window:
        raise SignalTooShort(f"signal of length {x.size} shorter than window {window}")
    count = (x.size - window) // step + 1
    starts = np.arange(count) * step
    return x[starts[:, None] + np.arange(window)]


def split(dataset: DomainDataset, per_class_train: Mapping[int, int],
          per_class_test: Mapping[int, int], seed: int):
    """Draw disjoint per-class train/test subsets.

    Each class is shuffled with a generator keyed on ``(seed, label)``; the
    first ``train`` indices go to train and the next ``test`` to test.
    Classes absent from a mapping contribute nothing to that split.
    """
    labels = dataset.labels
    train_idx, test_idx = [], []
    for c in range(dataset.m):
        n_tr = int(per_class_train.get(c, 0))
        n_te = int(per_class_test.get(c, 0))
        if n_tr < 0 or n_te < 0:
            raise ValidationError("sample counts must be non-negative")
        members = np.flatnonzero(labels == c)
        if n_tr + n_te > members.size:
            raise InsufficientSamples(c, n_tr + n_te, members.size)
        if n_tr + n_te == 0:
            continue
        perm = np.random.default_rng([seed, c]).permutation(members)
        train_idx.append(perm[:n_tr])
        test_idx.append(perm[n_tr:n_tr + n_te])
    tr = np.sort(np.concatenate(train_idx)) if train_idx else np.zeros(0, int)
    te = np.sort(np.concatenate(test_idx)) if test_idx else np.zeros(0, int)
    return dataset.subset(tr), dataset.subset(te)


def table_counts(m: int, fault: int, normal: int, normal_label: int | None = None):
    """Per-class count table with one (imbalanced) normal class."""
    normal_label = m - 1 if normal_label is None else normal_label
    return {c: (normal if c == normal_label else fault) for c in range(m)}


# ---------------------------------------------------------------------------
# synthetic domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    """Gaussian class clusters with per-domain translation and rotation.

    Domain ``k`` maps a clean sample ``z`` to ``R_k z + t_k`` where ``R_k``
    rotates the (0, 1) feature plane by ``k * rotation`` radians and
    ``t_k = k * shift * u_k`` for a fixed random unit vector ``u_k``. The
    ``warp`` term adds a class-dependent offset per domain so the conditional
    distributions move too, not just the marginal one.
    """

    n_classes: int = 4
    n_features: int = 10
    samples_per_class: Sequence[int] | int = 100
    n_domains: int = 2
    shift: float = 0.0
    rotation: float = 0.0
    warp: float = 0.0
    class_sep: float = 3.0
    noise_sigma: float = 1.0
    seed: int = 0
    domain_ids: Sequence[str] | None = None

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValidationError("n_classes must be >= 2")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        if self.n_features < 2 or self.n_domains < 1:
            raise ValidationError("need n_features >= 2 and n_domains >= 1")
        if min(self.counts) < 0:
            raise ValidationError("samples_per_class must be non-negative")

    @property
    def counts(self) -> list[int]:
        spc = self.samples_per_class
        if isinstance(spc, (int, np.integer)):
            return [int(spc)] * self.n_classes
        if len(spc) != self.n_classes:
            raise ValidationError("samples_per_class needs one entry per class")
        return [int(c) for c in spc]

    @property
    def ids(self) -> list[str]:
        if self.domain_ids is not None:
            return [str(d) for d in self.domain_ids]
        return list(string.ascii_uppercase[: self.n_domains])


def synth_domains(spec: SynthSpec) -> list[DomainDataset]:
    m, p = spec.n_classes, spec.n_features
    base = np.random.default_rng([spec.seed, 0])
    centroids = base.normal(size=(m, p))
    centroids *= spec.class_sep / np.linalg.norm(centroids, axis=1, keepdims=True)
    ids = spec.ids
    if len(ids) != spec.n_domains:
        raise ValidationError("domain_ids length must equal n_domains")
    labels = np.repeat(np.arange(m), spec.counts)
    out = []
    for k, dom in enumerate(ids):
        g = np.random.default_rng([spec.seed, 1, k])
        u = g.normal(size=p)
        u /= np.linalg.norm(u)
        warp = g.normal(size=(m, p)) * spec.warp * k / np.sqrt(p)
        noise = g.normal(size=(labels.size, p)) * spec.noise_sigma
        Z = centroids[labels] + warp[labels] + noise
        a = spec.rotation * k
        c, s = np.cos(a), np.sin(a)
        Z[:, :2] = Z[:, :2] @ np.array([[c, s], [-s, c]])
        Z += spec.shift * k * u
        out.append(DomainDataset.from_labels(dom, Z, labels, m))
    return out


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

_MANIFEST_KEYS = {"path", "domain_id", "label", "fault_diameter_mils",
                  "load_hp", "rpm", "sample_rate_hz", "format"}


def load_manifest(path, n_classes: int = DEFAULT_CLASSES) -> list[RecordingMeta]:
    """Parse a JSON manifest; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise FileMissing(f"manifest not found: {path}")
    try:
        records = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestParse(f"{path}: {exc}") from exc
    if not isinstance(records, list):
        raise ManifestParse("manifest must be a JSON array")
    out = []
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise ManifestParse(f"entry {i}: not an object")
        missing = _MANIFEST_KEYS - set(rec) - {"fault_diameter_mils", "format"}
        if missing:
            raise ManifestParse(f"entry {i}: missing {sorted(missing)}")
        try:
            label = int(rec["label"])
            fmt = rec.get("format", "csv")
            diam = rec.get("fault_diameter_mils")
            meta = RecordingMeta(
                path=(path.parent / rec["path"]),
                domain_id=str(rec["domain_id"]),
                label=label,
                fault_diameter_mils=None if diam is None else float(diam),
                load_hp=int(rec["load_hp"]),
                rpm=float(rec["rpm"]),
                sample_rate_hz=float(rec["sample_rate_hz"]),
                format=fmt,
            )
        except (TypeError, ValueError) as exc:
            raise ManifestParse(f"entry {i}: {exc}") from exc
        if not 0 <= label < n_classes:
            raise ManifestParse(f"entry {i}: label {label} outside [0, {n_classes})")
        if meta.sample_rate_hz <= 0:
            raise ManifestParse(f"entry {i}: sample_rate_hz must be positive")
        if fmt not in FORMATS:
            raise ManifestParse(f"entry {i}: unknown format {fmt!r}")
        if not meta.path.is_file():
            raise FileMissing(f"entry {i}: {meta.path} does not exist")
        out.append(meta)
    return out


def read_signal(meta: RecordingMeta) -> Signal:
    if not Path(meta.path).is_file():
        raise FileMissing(str(meta.path))
    if meta.format == "f64le":
        x = np.fromfile(meta.path, dtype="<f8")
    else:
        try:
            x = np.loadtxt(meta.path, dtype=float, ndmin=1)
        except ValueError as exc:
            raise ManifestParse(f"{meta.path}: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise NonFiniteSample(f"{meta.path}: non-finite sample")
    return Signal(x, meta.sample_rate_hz)


def write_signal_csv(path, samples) -> None:
    with open(path, "w") as fh:
        for v in np.asarray(samples, float):
            fh.write(f"{v:.17g}\n")


def write_dataset_csv(path, dataset: DomainDataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{k}" for k in range(dataset.p)] + ["label", "domain"])
        for row, lab in zip(dataset.features, dataset.labels):
            w.writerow([f"{v:.17g}" for v in row] + [int(lab), dataset.domain_id])


def read_dataset_csv(path, n_classes: int | None = None) -> DomainDataset:
    """Load a feature cache. ``n_classes`` defaults to ``max(label) + 1``."""
    path = Path(path)
    if not path.is_file():
        raise FileMissing(str(path))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ManifestParse(f"{path}: empty dataset file")
    header = rows[0]
    if header[-2:] != ["label", "domain"]:
        raise ManifestParse(f"{path}: header must end with label,domain")
    p = len(header) - 2
    body = rows[1:]
    domains = {r[-1] for r in body}
    if len(domains) > 1:
        raise ManifestParse(f"{path}: mixed domains {sorted(domains)}")
    dom = domains.pop() if domains else path.stem
    try:
        X = np.array([[float(v) for v in r[:p]] for r in body]).reshape(len(body), p)
        y = np.array([int(r[p]) for r in body], dtype=int)
    except ValueError as exc:
        raise ManifestParse(f"{path}: {exc}") from exc
    m = n_classes if n_classes is not None else (int(y.max()) + 1 if y.size else 1)
    return DomainDataset.from_labels(dom, X, y, m)
