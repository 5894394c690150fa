"""Seeded random search for hidden-node parameters.

Every block of ``T_max`` trials draws from its own generator keyed on
``(seed, node index, relaxation round, scale index)``, so the candidates a
node sees never depend on how many worker threads evaluated them. Scales are
tried in order; the first scale with any admissible trial wins and within it
the trial with the largest summed score (lowest index on ties) is chosen.
When no scale admits a trial the contraction factor is relaxed by a random
step drawn from its own keyed stream.
"""
from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

THREADS_ENV = "CILEDA_THREADS"

_local = threading.local()


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn, items, workers: int | None = None) -> list:
    """Ordered map over a thread pool; nested calls run serially."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1 or getattr(_local, "busy", False):
        return [fn(x) for x in items]

    def run(x):
        _local.busy = True
        try:
            return fn(x)
        finally:
            _local.busy = False

    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(run, items))


@dataclass(frozen=True)
class Candidate:
    w: np.ndarray
    b: float
    scale: float
    trial: int
    scores: np.ndarray  # per-output supervisory values of the chosen trial


@dataclass(frozen=True)
class SearchResult:
    candidate: Candidate | None
    gamma: float
    mu: float
    relaxations: int

    @property
    def failed(self) -> bool:
        return self.candidate is None


# score_fn(W, b, gamma, mu) -> (T, m) array; rows that must be rejected
# outright (e.g. zero hidden output) should hold -inf.
ScoreFn = Callable[[np.ndarray, np.ndarray, float, float], np.ndarray]

_TAU_STREAM = 1


def draw_trials(seed: int, L: int, attempt: int, scale_idx: int, scale: float,
                T: int, p: int):
    rng = np.random.default_rng([seed, L, attempt, 0, scale_idx])
    W = rng.uniform(-scale, scale, size=(T, p))
    b = rng.uniform(-scale, scale, size=T)
    return W, b


def relax_step(seed: int, L: int, attempt: int, gamma: float) -> float:
    """Random tau in (0, 1 - gamma); 0 once gamma has reached 1."""
    room = 1.0 - gamma
    if room <= 0.0:
        return 0.0
    tau = np.random.default_rng([seed, L, attempt, _TAU_STREAM]).uniform(0.0, room)
    return tau if tau > 0.0 else 0.5 * room


def _best(scores: np.ndarray):
    ok = np.all(np.isfinite(scores), axis=1) & (scores.min(axis=1) >= 0)
    if not ok.any():
        return None
    total = np.where(ok, scores.sum(axis=1), -np.inf)
    return int(np.argmax(total))


def search_node(score_fn: ScoreFn, p: int, L: int, gamma: float, *, seed: int,
                scale_set, T_max: int, max_relax: int = 50) -> SearchResult:
    """Configure hidden node number ``L`` (1-based)."""
    scales = list(scale_set)
    workers = worker_count()
    for attempt in range(max_relax + 1):
        mu = (1.0 - gamma) / (L + 1)

        def evaluate(k):
            W, b = draw_trials(seed, L, attempt, k, scales[k], T_max, p)
            scores = score_fn(W, b, gamma, mu)
            i = _best(scores)
            if i is None:
                return None
            return Candidate(W[i], float(b[i]), float(scales[k]), i, scores[i])

        # evaluate scales in worker-sized chunks, keep the first admissible one
        for start in range(0, len(scales), workers):
            chunk = range(start, min(start + workers, len(scales)))
            for cand in parallel_map(evaluate, chunk, workers):
                if cand is not None:
                    return SearchResult(cand, gamma, mu, attempt)
        if attempt < max_relax:
            gamma = gamma + relax_step(seed, L, attempt, gamma)
    return SearchResult(None, gamma, (1.0 - gamma) / (L + 1), max_relax)
