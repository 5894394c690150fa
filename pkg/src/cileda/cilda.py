"""Cross-domain constructive training (CILDA-I / CILDA-II).

Both variants grow one sigmoid node at a time from random candidates. A
candidate is admitted when, for every output ``q``, the certified decrease
of the target residual it would produce,

    (2 G <e_T,q, h_T> E_q - E_q^2 ||h_T||^2) / G^2,

is at least ``(1 - gamma - mu_L) ||e_T,q||^2``, where

    E_q = (C_S/C_T) <e_S,q, h_S> + <e_T,q, h_T> - (lam/C_T) d_L^T d beta_q
    G   = 1/C_T + (C_S/C_T) ||h_S||^2 + ||h_T||^2 + (lam/C_T) ||d_L||^2

and ``d`` stacks the per-node centroid gaps between the two domains (row 0
for all samples, row c for class c). CILDA-I then fixes the new output
weight at ``E / G``; CILDA-II re-solves every output weight from the
regularized normal equations.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dataio import DomainDataset
from .errors import NonFinite, ShapeMismatch, ValidationError
from .network import (
    HiddenNode,
    NetworkMixin,
    activation,
    beta_from_list,
    beta_to_list,
    hidden_output,
)
from .scn import ScnConfig
from .search import SearchResult, search_node

VARIANTS = ("cilda1", "cilda2")


@dataclass(frozen=True)
class CildaConfig(ScnConfig):
    C_S: float = 1.0
    C_T: float = 100.0
    lam: float = 10.0
    variant: str = "cilda2"
    # CILDA-II only: keep the certified incremental weights for a step whose
    # global re-solve would break the per-node target contraction.
    guard: bool = True

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "variant", self.variant.lower())
        if not (self.C_S > 0 and self.C_T > 0):
            raise ValidationError("C_S and C_T must be positive")
        if self.lam < 0:
            raise ValidationError("lambda must be non-negative")
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d) -> "CildaConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)

    def scn(self) -> ScnConfig:
        return ScnConfig(L_max=self.L_max, eps=self.eps, T_max=self.T_max,
                         scale_set=self.scale_set,
                         contraction_init=self.contraction_init, seed=self.seed,
                         max_relax=self.max_relax)


@dataclass
class ResidualState:
    e_S: np.ndarray
    e_T: np.ndarray


@dataclass(frozen=True)
class CandidateScore:
    sigma_q: np.ndarray
    E_q: np.ndarray
    G: float
    delta_q: np.ndarray


# ---------------------------------------------------------------------------
# domain matching
# ---------------------------------------------------------------------------

def _averaging_matrix(labels: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    # (m+1, n): row 0 averages every sample, row c+1 averages class c
    n = labels.size
    A = np.zeros((m + 1, n))
    counts = np.bincount(labels, minlength=m) if n else np.zeros(m, int)
    if n:
        A[0] = 1.0 / n
        A[labels + 1, np.arange(n)] = 1.0 / counts[labels]
    return A, np.concatenate([[n], counts])


def mmd_column(h_S, h_T, labels_S, labels_T, m: int | None = None) -> np.ndarray:
    """Centroid gaps of one hidden node between domains, length ``m + 1``.

    Entry 0 compares all samples, entry ``c + 1`` compares class ``c``; a
    class missing from either domain contributes 0.
    """
    h_S = np.asarray(h_S, float)
    h_T = np.asarray(h_T, float)
    labels_S = np.asarray(labels_S, int)
    labels_T = np.asarray(labels_T, int)
    if h_S.shape != labels_S.shape or h_T.shape != labels_T.shape:
        raise ShapeMismatch("hidden outputs and labels differ in length")
    if m is None:
        m = int(max(labels_S.max(initial=-1), labels_T.max(initial=-1))) + 1
    return MmdState(labels_S, labels_T, m).columns(h_S[:, None], h_T[:, None])[:, 0]


class MmdState:
    """Growing (m+1) x L matrix of per-node centroid gaps."""

    def __init__(self, labels_S, labels_T, m: int):
        self.m = m
        self.labels_S = np.asarray(labels_S, int)
        self.labels_T = np.asarray(labels_T, int)
        self.A_S, self.n_S = _averaging_matrix(self.labels_S, m)
        self.A_T, self.n_T = _averaging_matrix(self.labels_T, m)
        self.active = (self.n_S > 0) & (self.n_T > 0)
        self.index_S = [np.flatnonzero(self.labels_S == c) for c in range(m)]
        self.index_T = [np.flatnonzero(self.labels_T == c) for c in range(m)]
        self.d = np.zeros((m + 1, 0))

    def columns(self, H_S: np.ndarray, H_T: np.ndarray) -> np.ndarray:
        """Gap columns for a batch of candidate outputs (n_S, T), (n_T, T)."""
        D = self.A_S @ H_S - self.A_T @ H_T
        D[~self.active] = 0.0
        return D

    def append(self, col: np.ndarray) -> None:
        self.d = np.column_stack([self.d, col])


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def _terms(residuals: ResidualState, h_S, h_T, d_prev, d_L, beta_prev, cfg):
    h_S = np.asarray(h_S, float)
    h_T = np.asarray(h_T, float)
    d_L = np.asarray(d_L, float)
    e_S, e_T = residuals.e_S, residuals.e_T
    if e_S.shape[0] != h_S.size or e_T.shape[0] != h_T.size:
        raise ShapeMismatch("residual rows do not match hidden outputs")
    d_prev = np.asarray(d_prev, float).reshape(d_L.size, -1)
    beta_prev = np.asarray(beta_prev, float).reshape(d_prev.shape[1], e_T.shape[1])
    rs, rl = cfg.C_S / cfg.C_T, cfg.lam / cfg.C_T
    E = rs * (e_S.T @ h_S) + e_T.T @ h_T - rl * (beta_prev.T @ (d_prev.T @ d_L))
    G = 1.0 / cfg.C_T + rs * (h_S @ h_S) + h_T @ h_T + rl * (d_L @ d_L)
    if not (np.all(np.isfinite(E)) and np.isfinite(G)):
        raise NonFinite("non-finite candidate score")
    return E, float(G)


def candidate_score(residuals: ResidualState, h_S, h_T, d_prev, d_L, beta_prev,
                    cfg, gamma: float, mu_L: float) -> CandidateScore:
    E, G = _terms(residuals, h_S, h_T, d_prev, d_L, beta_prev, cfg)
    h_T = np.asarray(h_T, float)
    e_T = residuals.e_T
    eh = e_T.T @ h_T
    delta = (1.0 - gamma - mu_L) * np.sum(e_T ** 2, axis=0)
    sigma = (2.0 * G * eh * E - E ** 2 * (h_T @ h_T)) / G ** 2 - delta
    return CandidateScore(sigma, E, G, delta)


def cilda1_beta(residuals: ResidualState, h_S, h_T, d_prev, d_L, beta_prev,
                cfg) -> np.ndarray:
    """Incremental output weight of the new node: ``E_q / G`` for each q."""
    E, G = _terms(residuals, h_S, h_T, d_prev, d_L, beta_prev, cfg)
    return E / G


def cilda2_solve(H_S, H_T, Y_S, Y_T, d, cfg) -> np.ndarray:
    """Global output weights from the regularized normal equations.

    Solves (I + C_S H_S'H_S + C_T H_T'H_T + lam d'd) beta = C_S H_S'Y_S + C_T H_T'Y_T
    with a Cholesky factorization; the identity term keeps it positive definite.
    """
    H_S, H_T = np.asarray(H_S, float), np.asarray(H_T, float)
    Y_S, Y_T = np.asarray(Y_S, float), np.asarray(Y_T, float)
    d = np.asarray(d, float)
    L = H_T.shape[1]
    if H_S.shape[1] != L or d.shape[1] != L:
        raise ShapeMismatch("H_S, H_T and d must share the node dimension")
    A = (np.eye(L) + cfg.C_S * (H_S.T @ H_S) + cfg.C_T * (H_T.T @ H_T)
         + cfg.lam * (d.T @ d))
    rhs = cfg.C_S * (H_S.T @ Y_S) + cfg.C_T * (H_T.T @ Y_T)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(rhs))):
        raise NonFinite("non-finite entries in output-weight system")
    if L == 0:
        return np.zeros((0, rhs.shape[1]))
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(A, lower=True), rhs)


def objective(beta, H_S, H_T, Y_S, Y_T, d, cfg) -> float:
    """Regularized cross-domain cost that :func:`cilda2_solve` minimizes."""
    beta = np.asarray(beta, float)
    return float(0.5 * np.sum(beta ** 2)
                 + 0.5 * cfg.C_S * np.sum((H_S @ beta - Y_S) ** 2)
                 + 0.5 * cfg.C_T * np.sum((H_T @ beta - Y_T) ** 2)
                 + 0.5 * cfg.lam * np.sum((d @ beta) ** 2))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _score_batch(residuals: ResidualState, HS, HT, mmd: MmdState, dbeta, cfg,
                 gamma, mu) -> np.ndarray:
    # vectorized candidate_score over T candidates; returns (T, m)
    e_S, e_T = residuals.e_S, residuals.e_T
    DL = mmd.columns(HS, HT)
    rs, rl = cfg.C_S / cfg.C_T, cfg.lam / cfg.C_T
    E = rs * (e_S.T @ HS) + e_T.T @ HT - rl * (dbeta.T @ DL)
    hh = np.einsum("ij,ij->j", HT, HT)
    G = (1.0 / cfg.C_T + rs * np.einsum("ij,ij->j", HS, HS) + hh
         + rl * np.einsum("ij,ij->j", DL, DL))
    eh = e_T.T @ HT
    delta = (1.0 - gamma - mu) * np.einsum("ij,ij->j", e_T, e_T)
    sigma = (2.0 * G * eh * E - E ** 2 * hh) / G ** 2 - delta[:, None]
    sigma[:, hh == 0] = -np.inf
    return sigma.T


def configure_node(residuals: ResidualState, X_S, X_T, mmd: MmdState, beta_prev,
                   cfg: CildaConfig, gamma: float, L: int) -> SearchResult:
    """Search admissible parameters for node ``L``; ``failed`` if none found."""
    dbeta = mmd.d @ beta_prev if mmd.d.shape[1] else np.zeros((mmd.m + 1, residuals.e_T.shape[1]))

    def score(W, b, g, mu):
        HS = activation(X_S @ W.T + b)
        HT = activation(X_T @ W.T + b)
        return _score_batch(residuals, HS, HT, mmd, dbeta, cfg, g, mu)

    return search_node(score, X_T.shape[1], L, gamma, seed=cfg.seed,
                       scale_set=cfg.scale_set, T_max=cfg.T_max,
                       max_relax=cfg.max_relax)


@dataclass(frozen=True, eq=False)
class CildaModel(NetworkMixin):
    nodes: tuple
    beta: np.ndarray
    m: int
    p: int
    config: CildaConfig = field(default_factory=CildaConfig)
    source_domain_id: str = ""
    target_domain_id: str = ""
    trace: tuple = ()        # ||e_T||_F before any node, then after each node
    gammas: tuple = ()       # contraction factor in force when node L was accepted
    mus: tuple = ()
    guarded: tuple = ()      # nodes (1-based) that kept incremental weights
    stop_reason: str = "tolerance"
    activation: str = "sigmoid"

    @property
    def variant(self) -> str:
        return self.config.variant

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "kind": "cilda",
            "variant": cfg.variant,
            "p": self.p,
            "m": self.m,
            "activation": self.activation,
            "C_S": cfg.C_S,
            "C_T": cfg.C_T,
            "lambda": cfg.lam,
            "source_domain_id": self.source_domain_id,
            "target_domain_id": self.target_domain_id,
            "nodes": [nd.to_dict() for nd in self.nodes],
            "beta": beta_to_list(self.beta),
            "config": cfg.to_dict(),
            "trace": list(self.trace),
            "gammas": list(self.gammas),
            "mus": list(self.mus),
            "guarded": list(self.guarded),
            "stop_reason": self.stop_reason,
        }

    @classmethod
    def from_dict(cls, d) -> "CildaModel":
        return cls(
            nodes=tuple(HiddenNode.from_dict(n) for n in d["nodes"]),
            beta=beta_from_list(d["beta"], d["m"]),
            m=int(d["m"]),
            p=int(d["p"]),
            config=CildaConfig.from_dict(d["config"]),
            source_domain_id=d.get("source_domain_id", ""),
            target_domain_id=d.get("target_domain_id", ""),
            trace=tuple(d.get("trace", ())),
            gammas=tuple(d.get("gammas", ())),
            mus=tuple(d.get("mus", ())),
            guarded=tuple(d.get("guarded", ())),
            stop_reason=d.get("stop_reason", "tolerance"),
            activation=d.get("activation", "sigmoid"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def cilda_train(source: DomainDataset, target: DomainDataset,
                cfg: CildaConfig = CildaConfig()) -> CildaModel:
    """Grow a cross-domain network until ``||e_T||_F <= eps`` or ``L_max``.

    Residuals start at the one-hot targets of each domain. A failed node
    search ends training early and returns the network built so far.
    """
    if source.p != target.p:
        raise ShapeMismatch(f"feature widths differ: {source.p} vs {target.p}")
    if source.m != target.m:
        raise ShapeMismatch(f"class counts differ: {source.m} vs {target.m}")
    if target.n < 1:
        raise ValidationError("target training set is empty")
    X_S, Y_S = source.features, source.labels_onehot
    X_T, Y_T = target.features, target.labels_onehot
    m, p = target.m, target.p
    res = ResidualState(Y_S.copy(), Y_T.copy())
    mmd = MmdState(source.labels, target.labels, m)
    nodes: list[HiddenNode] = []
    cols_S: list[np.ndarray] = []
    cols_T: list[np.ndarray] = []
    beta = np.zeros((0, m))
    gamma = cfg.contraction_init
    trace = [float(np.linalg.norm(res.e_T))]
    gammas, mus, guarded = [], [], []
    stop = "max_nodes"

    while True:
        if trace[-1] <= cfg.eps:
            stop = "tolerance"
            break
        if len(nodes) >= cfg.L_max:
            break
        L = len(nodes) + 1
        found = configure_node(res, X_S, X_T, mmd, beta, cfg, gamma, L)
        if found.failed:
            stop = "no_candidate"
            break
        gamma = found.gamma
        c = found.candidate
        node = HiddenNode(c.w, c.b, c.scale)
        h_S, h_T = hidden_output(node, X_S), hidden_output(node, X_T)
        d_L = mmd.columns(h_S[:, None], h_T[:, None])[:, 0]
        b_inc = cilda1_beta(res, h_S, h_T, mmd.d, d_L, beta, cfg)
        inc_S = res.e_S - np.outer(h_S, b_inc)
        inc_T = res.e_T - np.outer(h_T, b_inc)

        nodes.append(node)
        cols_S.append(h_S)
        cols_T.append(h_T)
        mmd.append(d_L)
        prev_sq = trace[-1] ** 2
        if cfg.variant == "cilda1":
            beta = np.vstack([beta, b_inc])
            res = ResidualState(inc_S, inc_T)
        else:
            H_S, H_T = np.column_stack(cols_S), np.column_stack(cols_T)
            b_glob = cilda2_solve(H_S, H_T, Y_S, Y_T, mmd.d, cfg)
            glob_T = Y_T - H_T @ b_glob
            bound = (found.gamma + found.mu) * prev_sq
            if cfg.guard and np.sum(glob_T ** 2) > bound:
                guarded.append(L)
                beta = np.vstack([beta, b_inc])
                res = ResidualState(inc_S, inc_T)
            else:
                beta = b_glob
                res = ResidualState(Y_S - H_S @ b_glob, glob_T)
        if not (np.all(np.isfinite(res.e_T)) and np.all(np.isfinite(beta))):
            raise NonFinite(f"non-finite state after node {L}")
        trace.append(float(np.linalg.norm(res.e_T)))
        gammas.append(found.gamma)
        mus.append(found.mu)

    return CildaModel(tuple(nodes), beta, m, p, cfg, source.domain_id,
                      target.domain_id, tuple(trace), tuple(gammas), tuple(mus),
                      tuple(guarded), stop)


def cilda_predict(model: CildaModel, X) -> np.ndarray:
    return model.predict(X)
