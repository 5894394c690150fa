"""Hidden nodes and the single-hidden-layer forward pass shared by all models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ShapeMismatch, ValidationError


def activation(z):
    """Logistic sigmoid; saturates to exactly 0/1 instead of overflowing."""
    return expit(z)


@dataclass(frozen=True, eq=False)
class HiddenNode:
    w: np.ndarray
    b: float
    scale: float

    def __post_init__(self):
        w = np.array(self.w, dtype=float).ravel()
        if not (np.all(np.isfinite(w)) and np.isfinite(self.b)):
            raise ValidationError("hidden node parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "scale", float(self.scale))

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "b": self.b, "scale": self.scale}

    @classmethod
    def from_dict(cls, d) -> "HiddenNode":
        return cls(np.asarray(d["w"], float), float(d["b"]), float(d["scale"]))


def _check_width(X, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size == p else X.reshape(-1, p)
    if X.ndim != 2 or X.shape[1] != p:
        raise ShapeMismatch(f"expected {p} features, got shape {X.shape}")
    return X


def hidden_output(node: HiddenNode, X) -> np.ndarray:
    X = _check_width(X, node.w.size)
    return activation(X @ node.w + node.b)


def hidden_matrix(nodes, X, p: int) -> np.ndarray:
    """Stack node outputs column-wise: (n, L)."""
    X = _check_width(X, p)
    if not nodes:
        return np.zeros((X.shape[0], 0))
    W = np.stack([nd.w for nd in nodes], axis=1)
    b = np.array([nd.b for nd in nodes])
    return activation(X @ W + b)


class NetworkMixin:
    """Forward pass and argmax decoding for models with ``nodes``/``beta``."""

    nodes: tuple
    beta: np.ndarray
    p: int
    m: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def predict_scores(self, X) -> np.ndarray:
        H = hidden_matrix(self.nodes, X, self.p)
        if not self.nodes:
            return np.zeros((H.shape[0], self.m))
        # fixed memory order so a reloaded model scores bit-identically
        return H @ np.ascontiguousarray(self.beta)

    def predict(self, X) -> np.ndarray:
        # an empty model scores every class 0 and therefore predicts class 0
        return np.argmax(self.predict_scores(X), axis=1)


def beta_to_list(beta: np.ndarray) -> list:
    return [list(map(float, row)) for row in beta]


def beta_from_list(rows, m: int) -> np.ndarray:
    return np.asarray(rows, dtype=float).reshape(-1, m)
