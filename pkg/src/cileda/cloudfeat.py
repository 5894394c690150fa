"""Backward cloud generator and multilevel cloud feature vectors."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .dataio import (
    DEFAULT_CLASSES,
    DomainDataset,
    RecordingMeta,
    Signal,
    normalize,
    read_signal,
    segment,
)
from .errors import MixedDomains, TooFewSamples, ValidationError
from .wpd import WaveletSpec, denoise, wpd_decompose

_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


class CloudDescriptor(NamedTuple):
    Ex: float
    En: float
    He: float


def _cloud_rows(X: np.ndarray) -> np.ndarray:
    # (..., n) -> (..., 3) holding Ex, En, He along the last axis
    n = X.shape[-1]
    ex = X.mean(axis=-1)
    dev = X - ex[..., None]
    en = _SQRT_HALF_PI * np.abs(dev).mean(axis=-1)
    s2 = np.sum(dev ** 2, axis=-1) / (n - 1)
    he = np.sqrt(np.abs(s2 - en ** 2))
    return np.stack([ex, en, he], axis=-1)


def backward_cloud(x) -> CloudDescriptor:
    """Estimate (Ex, En, He) of a one-dimensional cloud from samples.

    En uses the 1/n mean absolute deviation scaled by sqrt(pi/2); He compares
    the unbiased sample variance against En**2 and takes the root of the
    absolute gap, so it is defined even when En**2 exceeds the variance.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise TooFewSamples(f"need at least 2 samples, got {x.size}")
    ex, en, he = _cloud_rows(x)
    return CloudDescriptor(float(ex), float(en), float(he))


def feature_length(N: int) -> int:
    return 3 * (2 ** (N + 1) - 1)


def multilevel_features(seg, N: int, w="db4") -> np.ndarray:
    """Cloud triples over every wavelet packet node up to depth ``N``.

    Order is level-major, then node index (natural filter-bank order), with
    (Ex, En, He) per node; node (0, 0) is the segment itself. Accepts a stack
    of segments and then returns one row per segment.
    """
    seg = np.asarray(seg, float)
    tree = wpd_decompose(seg, N, w)
    if seg.shape[-1] >> N < 2:
        raise TooFewSamples(f"level-{N} nodes would hold fewer than 2 coefficients")
    parts = [_cloud_rows(tree.node(i, j)) for i in range(N + 1) for j in range(2 ** i)]
    return np.concatenate(parts, axis=-1)


@dataclass(frozen=True)
class FeatureConfig:
    level: int = 3
    wavelet: str = "db4"
    window: int = 1024
    step: int = 1024
    denoise_level: int = 4
    n_classes: int = DEFAULT_CLASSES

    def __post_init__(self):
        if self.level < 0 or self.window < 2 or self.step < 1:
            raise ValidationError("invalid feature configuration")
        if self.window % (2 ** self.level):
            raise ValidationError("window must be divisible by 2^level")


def featurize_signal(signal: Signal, config: FeatureConfig) -> np.ndarray:
    w = WaveletSpec.named(config.wavelet)
    clean = denoise(signal, w, config.denoise_level) if config.denoise_level else signal
    segs = segment(normalize(clean), config.window, config.step)
    return multilevel_features(segs, config.level, w)


def featurize_dataset(recordings: Sequence[RecordingMeta], config: FeatureConfig,
                      loader: Callable[[RecordingMeta], Signal] = read_signal,
                      domain_id: str | None = None) -> DomainDataset:
    """denoise -> normalize -> segment -> multilevel features, per recording."""
    doms = {r.domain_id for r in recordings}
    if len(doms) > 1:
        raise MixedDomains(f"recordings span domains {sorted(doms)}")
    dom = doms.pop() if doms else (domain_id or "")
    p = feature_length(config.level)
    blocks, labels = [], []
    for meta in recordings:
        F = featurize_signal(loader(meta), config)
        blocks.append(F)
        labels.extend([meta.label] * F.shape[0])
    X = np.vstack(blocks) if blocks else np.zeros((0, p))
    return DomainDataset.from_labels(dom, X, labels, config.n_classes)
