"""Orthonormal wavelet filter banks with periodic extension.

Provides the full wavelet packet tree used for feature extraction and a
universal-threshold denoiser. All transforms act on the last axis, so a
stack of segments can be decomposed in one call.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataio import Signal
from .errors import BadLength, SignalTooShort, ValidationError

# Daubechies low-pass filters, db1..db4, from spectral factorization of the
# maxflat half-band polynomial at 50 digits (orthonormal, sum = sqrt(2)).
_DAUBECHIES = {
    "db1": [0.7071067811865476, 0.7071067811865476],
    "db2": [0.48296291314453416, 0.8365163037378079,
            0.2241438680420134, -0.12940952255126037],
    "db3": [0.33267055295008263, 0.8068915093110925, 0.45987750211849154,
            -0.13501102001025458, -0.08544127388202666, 0.03522629188570953],
    "db4": [0.2303778133088965, 0.7148465705529157, 0.6308807679298589,
            -0.027983769416859854, -0.18703481171909309, 0.030841381835560764,
            0.0328830116668852, -0.010597401785069032],
}
_DAUBECHIES["haar"] = _DAUBECHIES["db1"]

_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class WaveletSpec:
    name: str
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, float)
        hi = np.asarray(self.hi, float)
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size % 2:
            raise ValidationError("lo/hi must be equal, even-length 1-D filters")
        if abs(np.sum(lo ** 2) - 1) > _TOL:
            raise ValidationError("low-pass filter is not unit-norm")
        if abs(np.sum(hi)) > _TOL:
            raise ValidationError("high-pass filter must sum to zero")
        if not np.allclose(hi, qmf(lo), rtol=0, atol=_TOL):
            raise ValidationError("high-pass is not the quadrature mirror of lo")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_lowpass(cls, lo, name="custom") -> "WaveletSpec":
        lo = np.asarray(lo, float)
        return cls(name, lo, qmf(lo))

    @classmethod
    def named(cls, name: str = "db4") -> "WaveletSpec":
        try:
            return cls.from_lowpass(_DAUBECHIES[name], name)
        except KeyError:
            raise ValidationError(
                f"unknown wavelet {name!r}; have {sorted(_DAUBECHIES)}") from None

    def __len__(self):
        return self.lo.size


def qmf(lo) -> np.ndarray:
    """High-pass mirror: hi[k] = (-1)^k lo[K-1-k]."""
    lo = np.asarray(lo, float)
    return lo[::-1] * (-1.0) ** np.arange(lo.size)


def _as_wavelet(w) -> WaveletSpec:
    return WaveletSpec.named(w) if isinstance(w, str) else w


def _taps(n: int, k: int) -> np.ndarray:
    # (n/2, k) periodic gather indices: row j holds 2j, 2j+1, ..., 2j+k-1 (mod n)
    return (2 * np.arange(n // 2)[:, None] + np.arange(k)) % n


def analysis_step(x, w: WaveletSpec):
    """One filter-bank split: (approx, detail), each half the input length."""
    x = np.asarray(x, float)
    n = x.shape[-1]
    if n % 2:
        raise BadLength(f"length {n} is odd")
    gathered = x[..., _taps(n, len(w))]
    return gathered @ w.lo, gathered @ w.hi


def synthesis_step(a, d, w: WaveletSpec) -> np.ndarray:
    """Adjoint (= inverse, for orthonormal filters) of :func:`analysis_step`."""
    a = np.asarray(a, float)
    d = np.asarray(d, float)
    n = 2 * a.shape[-1]
    idx = _taps(n, len(w))
    contrib = a[..., :, None] * w.lo + d[..., :, None] * w.hi
    out = np.zeros(a.shape[:-1] + (n,))
    for t in range(len(w)):
        # indices 2j+t (mod n) are distinct over j for a fixed tap
        out[..., idx[:, t]] += contrib[..., t]
    return out


@dataclass(frozen=True, eq=False)
class WpTree:
    level: int
    nodes: dict

    def node(self, i: int, j: int) -> np.ndarray:
        return self.nodes[(i, j)]

    def level_nodes(self, i: int) -> list:
        return [self.nodes[(i, j)] for j in range(2 ** i)]

    def to_json(self) -> str:
        def fmt(v):
            return v.tolist()
        return json.dumps({
            "level": self.level,
            "nodes": {f"{i},{j}": fmt(v) for (i, j), v in sorted(self.nodes.items())},
        })


def wpd_decompose(seg, N: int, w="db4") -> WpTree:
    """Full wavelet packet tree to depth ``N`` in natural filter-bank order.

    Node (i+1, 2j) is the low-pass child of (i, j) and (i+1, 2j+1) the
    high-pass child. ``seg`` may be a stack of segments (..., W).
    """
    w = _as_wavelet(w)
    x = np.asarray(seg, float)
    if N < 0:
        raise ValidationError("decomposition level must be >= 0")
    W = x.shape[-1]
    if W % (2 ** N):
        raise BadLength(f"segment length {W} not divisible by 2^{N}")
    nodes = {(0, 0): x}
    for i in range(N):
        for j in range(2 ** i):
            a, d = analysis_step(nodes[(i, j)], w)
            nodes[(i + 1, 2 * j)] = a
            nodes[(i + 1, 2 * j + 1)] = d
    return WpTree(N, nodes)


def node_energy(tree: WpTree, i: int) -> float:
    if not 0 <= i <= tree.level:
        raise ValidationError(f"level {i} outside [0, {tree.level}]")
    return float(sum(np.sum(c ** 2) for c in tree.level_nodes(i)))


def dwt(x, w, level: int) -> list:
    """Periodic multilevel DWT: ``[a_level, d_level, ..., d_1]``."""
    w = _as_wavelet(w)
    a = np.asarray(x, float)
    if a.shape[-1] % (2 ** level):
        raise BadLength(f"length {a.shape[-1]} not divisible by 2^{level}")
    details = []
    for _ in range(level):
        a, d = analysis_step(a, w)
        details.append(d)
    return [a] + details[::-1]


def idwt(coeffs, w) -> np.ndarray:
    w = _as_wavelet(w)
    a = coeffs[0]
    for d in coeffs[1:]:
        a = synthesis_step(a, d, w)
    return a


def soft_threshold(x, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def denoise(signal: Signal, w="db4", level: int = 4) -> Signal:
    """Soft-threshold detail coefficients at the universal threshold.

    The noise scale is the median absolute finest detail over 0.6745. Signals
    whose length is not a multiple of ``2^level`` are symmetrically padded
    for the transform and cropped back.
    """
    w = _as_wavelet(w)
    x = signal.samples if isinstance(signal, Signal) else np.asarray(signal, float)
    rate = signal.sample_rate_hz if isinstance(signal, Signal) else 12000.0
    n = x.size
    if n < len(w):
        raise SignalTooShort(f"signal length {n} < filter length {len(w)}")
    if level < 1:
        return Signal(x.copy(), rate)
    block = 2 ** level
    pad = (-n) % block
    xp = np.pad(x, (0, pad), mode="symmetric") if pad else x
    coeffs = dwt(xp, w, level)
    sigma = np.median(np.abs(coeffs[-1])) / 0.6745
    thr = sigma * np.sqrt(2.0 * np.log(n))
    coeffs = [coeffs[0]] + [soft_threshold(d, thr) for d in coeffs[1:]]
    y = idwt(coeffs, w)[:n]
    return Signal(y, rate)
