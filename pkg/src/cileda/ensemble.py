"""Majority-vote ensemble of cross-domain networks, one per domain pair."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .cilda import CildaConfig, CildaModel, cilda_train
from .dataio import DomainDataset
from .errors import DuplicateDomain, ShapeMismatch, ValidationError
from .search import parallel_map

TIE_POLICY = "self-then-lowest"


class DomainPair(NamedTuple):
    source_id: str
    target_id: str


def build_pairs(target_id: str, source_ids: Sequence[str]) -> list[DomainPair]:
    """Self-pair first, then one pair per source in the given order."""
    source_ids = [str(s) for s in source_ids]
    if str(target_id) in source_ids:
        raise DuplicateDomain(f"target {target_id!r} also listed as a source")
    if len(set(source_ids)) != len(source_ids):
        raise DuplicateDomain("source domains must be distinct")
    t = str(target_id)
    return [DomainPair(t, t)] + [DomainPair(s, t) for s in source_ids]


def vote_tally(preds: Sequence[int], m: int) -> np.ndarray:
    return np.bincount(np.asarray(preds, int), minlength=m)


def majority_vote(preds: Sequence[int], tie_policy: str = TIE_POLICY,
                  self_pred: int | None = None, m: int | None = None) -> int:
    """Most frequent label; ties go to ``self_pred`` if tied, else the lowest."""
    preds = np.asarray(preds, int)
    if preds.size == 0:
        raise ValidationError("no predictions to vote on")
    if tie_policy != TIE_POLICY:
        raise ValidationError(f"unknown tie policy {tie_policy!r}")
    counts = vote_tally(preds, m or int(preds.max()) + 1)
    tied = np.flatnonzero(counts == counts.max())
    if self_pred is not None and self_pred in tied:
        return int(self_pred)
    return int(tied[0])


def _vote_rows(P: np.ndarray, m: int) -> np.ndarray:
    # P: (members, n) with the self-pair in row 0
    n = P.shape[1]
    counts = np.zeros((n, m), int)
    for row in P:
        counts[np.arange(n), row] += 1
    top = counts.max(axis=1)
    self_counts = counts[np.arange(n), P[0]]
    lowest = np.argmax(counts == top[:, None], axis=1)
    return np.where(self_counts == top, P[0], lowest)


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    members: tuple
    m: int
    target_id: str
    tie_policy: str = TIE_POLICY

    def __post_init__(self):
        if not self.members:
            raise ValidationError("ensemble needs at least one member")
        ps = {mb.p for mb in self.members}
        ms = {mb.m for mb in self.members}
        if len(ps) > 1 or ms != {self.m}:
            raise ShapeMismatch("members disagree on feature width or class count")

    @property
    def p(self) -> int:
        return self.members[0].p

    @property
    def pairs(self) -> list[DomainPair]:
        return [DomainPair(mb.source_domain_id, mb.target_domain_id) for mb in self.members]

    def member_predictions(self, X) -> np.ndarray:
        return np.stack([mb.predict(X) for mb in self.members]) if len(X) else \
            np.zeros((len(self.members), 0), int)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        if X.ndim != 2 or (X.size and X.shape[1] != self.p):
            raise ShapeMismatch(f"expected (n, {self.p}) features, got {X.shape}")
        if X.shape[0] == 0:
            return np.zeros(0, int)
        return _vote_rows(self.member_predictions(X), self.m)

    def to_dict(self) -> dict:
        return {
            "kind": "cileda",
            "target_id": self.target_id,
            "m": self.m,
            "members": [mb.to_dict() for mb in self.members],
            "tie_policy": self.tie_policy,
        }

    @classmethod
    def from_dict(cls, d) -> "EnsembleModel":
        members = tuple(CildaModel.from_dict(x) for x in d["members"])
        m = int(d.get("m", members[0].m))
        return cls(members, m, d["target_id"], d.get("tie_policy", TIE_POLICY))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def member_seed(seed: int, k: int) -> int:
    """Seed for member ``k``; the self-pair (k = 0) keeps the base seed."""
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0]) if k else seed


def train_ensemble(datasets: Mapping[str, DomainDataset], target_id: str,
                   cfg: CildaConfig = CildaConfig(),
                   source_ids: Sequence[str] | None = None) -> EnsembleModel:
    """Train one network per (source, target) pair and wrap them for voting.

    ``source_ids`` defaults to every other key of ``datasets`` in sorted order.
    """
    target_id = str(target_id)
    if target_id not in datasets:
        raise ValidationError(f"no dataset for target {target_id!r}")
    if source_ids is None:
        source_ids = sorted(k for k in datasets if k != target_id)
    pairs = build_pairs(target_id, source_ids)
    missing = [p.source_id for p in pairs if p.source_id not in datasets]
    if missing:
        raise ValidationError(f"no dataset for sources {missing}")
    widths = {datasets[p.source_id].p for p in pairs}
    if len(widths) > 1:
        raise ShapeMismatch("datasets were featurized with different widths")
    target = datasets[target_id]

    def fit(k):
        pair = pairs[k]
        return cilda_train(datasets[pair.source_id], target,
                           replace(cfg, seed=member_seed(cfg.seed, k)))

    members = parallel_map(fit, range(len(pairs)))
    return EnsembleModel(tuple(members), target.m, target_id)


def ensemble_predict(model: EnsembleModel, X) -> np.ndarray:
    return model.predict(X)
