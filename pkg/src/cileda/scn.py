"""Stochastic configuration networks with SC-I and SC-III output weights."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataio import DomainDataset
from .errors import NonFinite, ShapeMismatch, ValidationError, ZeroCandidate
from .network import (
    HiddenNode,
    NetworkMixin,
    activation,
    beta_from_list,
    beta_to_list,
    hidden_output,
)
from .search import search_node

DEFAULT_SCALES = (0.5, 1, 3, 5, 7, 10, 25, 50, 100, 150, 200)
VARIANTS = ("sc1", "sc3")


@dataclass(frozen=True)
class ScnConfig:
    L_max: int = 200
    eps: float = 0.1
    T_max: int = 100
    scale_set: tuple = DEFAULT_SCALES
    contraction_init: float = 0.9
    seed: int = 0
    max_relax: int = 50

    def __post_init__(self):
        object.__setattr__(self, "scale_set", tuple(float(s) for s in self.scale_set))
        if self.L_max < 1 or self.T_max < 1:
            raise ValidationError("L_max and T_max must be >= 1")
        if not self.eps > 0:
            raise ValidationError("eps must be positive")
        if not self.scale_set or min(self.scale_set) <= 0:
            raise ValidationError("scale_set must be non-empty and positive")
        if not 0 < self.contraction_init < 1:
            raise ValidationError("contraction_init must lie in (0, 1)")
        if self.max_relax < 0:
            raise ValidationError("max_relax must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale_set"] = list(self.scale_set)
        return d


def xi_constraint(e_col, h, r: float, mu: float) -> float:
    """Supervisory value <e,h>^2/<h,h> - (1 - r - mu) <e,e> for one output."""
    e = np.asarray(e_col, float)
    h = np.asarray(h, float)
    if e.shape != h.shape:
        raise ShapeMismatch("residual and hidden output lengths differ")
    hh = float(h @ h)
    if hh == 0.0:
        raise ZeroCandidate("hidden output is identically zero")
    return float((e @ h) ** 2 / hh - (1.0 - r - mu) * (e @ e))


def sc1_beta(e_col, g) -> float:
    e = np.asarray(e_col, float)
    g = np.asarray(g, float)
    gg = float(g @ g)
    if gg == 0.0:
        raise ZeroCandidate("hidden output is identically zero")
    return float(e @ g) / gg


def sc3_solve(H, Y) -> np.ndarray:
    """Minimum-norm least squares via SVD, cutting singular values < 1e-12 * max."""
    H = np.asarray(H, float)
    Y = np.asarray(Y, float)
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(Y))):
        raise NonFinite("non-finite entries in least-squares system")
    if H.shape[1] == 0:
        return np.zeros((0,) + Y.shape[1:])
    return np.linalg.pinv(H, rcond=1e-12) @ Y


@dataclass(frozen=True, eq=False)
class ScnModel(NetworkMixin):
    nodes: tuple
    beta: np.ndarray
    m: int
    p: int
    variant: str = "sc3"
    activation: str = "sigmoid"
    config: ScnConfig = field(default_factory=ScnConfig)
    trace: tuple = ()
    stop_reason: str = "tolerance"

    def to_dict(self) -> dict:
        return {
            "kind": "scn",
            "variant": self.variant,
            "p": self.p,
            "m": self.m,
            "activation": self.activation,
            "nodes": [nd.to_dict() for nd in self.nodes],
            "beta": beta_to_list(self.beta),
            "config": self.config.to_dict(),
            "trace": list(self.trace),
            "stop_reason": self.stop_reason,
        }

    @classmethod
    def from_dict(cls, d) -> "ScnModel":
        return cls(
            nodes=tuple(HiddenNode.from_dict(n) for n in d["nodes"]),
            beta=beta_from_list(d["beta"], d["m"]),
            m=int(d["m"]),
            p=int(d["p"]),
            variant=d["variant"],
            activation=d.get("activation", "sigmoid"),
            config=ScnConfig(**d["config"]),
            trace=tuple(d.get("trace", ())),
            stop_reason=d.get("stop_reason", "tolerance"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _xi_batch(E: np.ndarray, HC: np.ndarray, gamma: float, mu: float) -> np.ndarray:
    hh = np.einsum("ij,ij->j", HC, HC)
    eh = E.T @ HC
    ee = np.einsum("ij,ij->j", E, E)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = eh ** 2 / hh - (1.0 - gamma - mu) * ee[:, None]
    xi[:, hh == 0] = -np.inf
    return xi.T


def scn_train(data: DomainDataset, cfg: ScnConfig = ScnConfig(),
              variant: str = "sc3") -> ScnModel:
    """Grow an SCN until the residual norm reaches ``eps`` or ``L_max`` nodes.

    If no admissible node is found after all relaxation rounds the network
    built so far is returned with ``stop_reason == "no_candidate"``.
    """
    if data.n < 1:
        raise ValidationError("training set is empty")
    return scn_fit(data.features, data.labels_onehot, cfg, variant)


def scn_fit(X, Y, cfg: ScnConfig = ScnConfig(), variant: str = "sc3") -> ScnModel:
    """Same loop as :func:`scn_train` on arbitrary real targets ``Y`` (n, m)."""
    variant = variant.lower()
    if variant not in VARIANTS:
        raise ValidationError(f"variant must be one of {VARIANTS}")
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeMismatch(f"inputs {X.shape} and targets {Y.shape} disagree")
    if X.shape[0] < 1:
        raise ValidationError("training set is empty")
    p, m = X.shape[1], Y.shape[1]
    E = Y.copy()
    nodes: list[HiddenNode] = []
    cols: list[np.ndarray] = []
    beta = np.zeros((0, m))
    gamma = cfg.contraction_init
    trace = [float(np.linalg.norm(E))]
    stop = "max_nodes"

    while len(nodes) < cfg.L_max:
        if trace[-1] <= cfg.eps:
            stop = "tolerance"
            break
        L = len(nodes) + 1

        def score(W, b, g, mu, E=E):
            return _xi_batch(E, activation(X @ W.T + b), g, mu)

        res = search_node(score, p, L, gamma, seed=cfg.seed, scale_set=cfg.scale_set,
                          T_max=cfg.T_max, max_relax=cfg.max_relax)
        if res.failed:
            stop = "no_candidate"
            break
        gamma = res.gamma
        c = res.candidate
        node = HiddenNode(c.w, c.b, c.scale)
        h = hidden_output(node, X)
        nodes.append(node)
        cols.append(h)
        if variant == "sc1":
            bL = (E.T @ h) / (h @ h)
            E = E - np.outer(h, bL)
            beta = np.vstack([beta, bL])
        else:
            H = np.column_stack(cols)
            beta = sc3_solve(H, Y)
            E = Y - H @ beta
        if not np.all(np.isfinite(E)):
            raise NonFinite(f"non-finite residual after node {L}")
        trace.append(float(np.linalg.norm(E)))
    else:
        if trace[-1] <= cfg.eps:
            stop = "tolerance"

    return ScnModel(tuple(nodes), beta, m, p, variant, "sigmoid", cfg,
                    tuple(trace), stop)


def scn_predict(model: ScnModel, X) -> np.ndarray:
    return model.predict(X)
