import json
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cileda.cilda import ResidualState  # noqa: E402
from cileda.dataio import DomainDataset, SynthSpec, synth_domains, write_signal_csv  # noqa: E402


def random_dataset(rng, n, p, m, domain="A", all_classes=True):
    labels = rng.integers(0, m, n)
    if all_classes and n >= m:
        labels[:m] = np.arange(m)
    X = rng.normal(size=(n, p)) + labels[:, None] * 0.5
    return DomainDataset.from_labels(domain, X, labels, m)


def write_corpus(root: Path, domains=("A", "B"), n_classes=3, length=2048,
                 fs=12000.0, seed=0):
    """Tone-plus-noise recordings, one per (domain, class); returns manifest path."""
    rng = np.random.default_rng(seed)
    entries = []
    t = np.arange(length) / fs
    for k, dom in enumerate(domains):
        for c in range(n_classes):
            x = (np.sin(2 * np.pi * (300 + 700 * c + 40 * k) * t)
                 + 0.3 * rng.standard_normal(length))
            name = f"{dom}_{c}.csv"
            write_signal_csv(root / name, x)
            entries.append({"path": name, "domain_id": dom, "label": c,
                            "fault_diameter_mils": None if c == 0 else 7.0 * c,
                            "load_hp": k, "rpm": 1797.0 - 20 * k,
                            "sample_rate_hz": fs, "format": "csv"})
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps(entries))
    return manifest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def shifted_pair():
    spec = SynthSpec(n_classes=3, n_features=5, samples_per_class=20, n_domains=2,
                     shift=1.0, rotation=0.3, warp=0.5, seed=3)
    return synth_domains(spec)


def contraction_ok(model, tol=1e-9):
    tr = np.asarray(model.trace)
    lim = (np.asarray(model.gammas) + np.asarray(model.mus)) * tr[:-1] ** 2
    return bool(np.all(tr[1:] ** 2 <= lim + tol) and np.all(np.diff(tr) <= tol))


def weights(C_S=1.0, C_T=1.0, lam=0.0):
    return SimpleNamespace(C_S=C_S, C_T=C_T, lam=lam)


def random_instance(rng, m=None):
    """Residuals, candidate outputs and an existing gap matrix with random weights."""
    m = m or int(rng.integers(1, 5))
    nS, nT, L = int(rng.integers(2, 30)), int(rng.integers(2, 30)), int(rng.integers(0, 6))
    res = ResidualState(rng.normal(size=(nS, m)), rng.normal(size=(nT, m)))
    h_S, h_T = rng.uniform(0, 1, nS), rng.uniform(0, 1, nT)
    d = rng.normal(size=(m + 1, L)) * 0.3
    d_L = rng.normal(size=m + 1) * 0.3
    beta_prev = rng.normal(size=(L, m))
    cfg = weights(10 ** rng.uniform(-2, 2), 10 ** rng.uniform(-2, 2), 10 ** rng.uniform(-2, 2))
    return res, h_S, h_T, d, d_L, beta_prev, cfg


def random_global(rng):
    """Hidden matrices, targets and gaps for one global weight solve."""
    m, L = int(rng.integers(1, 5)), int(rng.integers(1, 8))
    nS, nT = int(rng.integers(L, 40)), int(rng.integers(2, 20))
    H_S, H_T = rng.uniform(size=(nS, L)), rng.uniform(size=(nT, L))
    Y_S, Y_T = rng.normal(size=(nS, m)), rng.normal(size=(nT, m))
    d = rng.normal(size=(m + 1, L)) * 0.3
    cfg = weights(10 ** rng.uniform(-2, 2), 10 ** rng.uniform(-2, 2), 10 ** rng.uniform(-2, 2))
    return H_S, H_T, Y_S, Y_T, d, cfg


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
