import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from cileda.cilda import CildaConfig
from cileda.dataio import SynthSpec, split, synth_domains, write_dataset_csv
from cileda.errors import ShapeMismatch, UnknownParameter, ValidationError
from cileda.harness import (
    DECADES,
    BenchSpec,
    ExperimentConfig,
    MethodResult,
    Report,
    accuracy_of,
    confusion,
    precision_recall,
    run_task,
    sensitivity_grid,
)

FAST = CildaConfig(L_max=12, T_max=8)


@pytest.fixture(scope="module")
def csv_domains(tmp_path_factory):
    root = tmp_path_factory.mktemp("domains")
    spec = SynthSpec(n_classes=3, n_features=5, samples_per_class=30, n_domains=2,
                     shift=1.0, rotation=0.3, warp=0.5, seed=8)
    A, B = synth_domains(spec)
    train_B, test_B = split(B, {0: 5, 1: 5, 2: 10}, {0: 10, 1: 10, 2: 10}, seed=0)
    paths = {}
    for name, ds in (("A", A), ("B", train_B), ("test", test_B)):
        paths[name] = str(root / f"{name}.csv")
        write_dataset_csv(paths[name], ds)
    return paths


class TestMetrics:
    def test_perfect(self):
        C = confusion([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert np.array_equal(C, np.diag([1, 2, 1]))

    def test_all_zero_prediction(self):
        C = confusion([0, 0, 0], [0, 1, 2], 3)
        assert C[:, 0].tolist() == [1, 1, 1] and C[:, 1:].sum() == 0

    def test_hand_precision_recall(self):
        # truth [0, 0, 1], predicted [0, 1, 1]
        C = confusion([0, 1, 1], [0, 0, 1], 2)
        assert C.tolist() == [[1, 1], [0, 1]]
        precision, recall = precision_recall(C)
        np.testing.assert_allclose(precision, [1.0, 0.5])
        np.testing.assert_allclose(recall, [0.5, 1.0])
        assert accuracy_of(C) == pytest.approx(2 / 3)

    def test_empty_column_precision(self):
        precision, _ = precision_recall(confusion([0, 0], [0, 1], 3))
        assert precision[2] == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            confusion([0, 1], [0], 2)

    def test_report_invariants(self):
        r = MethodResult("x", 2)
        r.add(0, confusion([0, 1, 1], [0, 0, 1], 2))
        r.add(1, confusion([0, 0, 1], [0, 0, 1], 2))
        assert r.accuracies == [accuracy_of(C) for C in r.confusions]
        assert r.confusion.sum(axis=1).tolist() == [4, 2]
        assert r.mean == pytest.approx(5 / 6) and r.std == pytest.approx(1 / 6)


class TestConfig:
    def test_repetitions(self):
        with pytest.raises(ValidationError):
            ExperimentConfig("train", repetitions=0)

    def test_task(self):
        with pytest.raises(ValidationError):
            ExperimentConfig("plot")

    def test_seeds(self):
        assert ExperimentConfig("train", seed=7, repetitions=3).seeds == [7, 8, 9]

    def test_missing_inputs(self):
        with pytest.raises(ValidationError):
            run_task(ExperimentConfig("train"))


class TestRunTask:
    def test_single_rep_std_zero(self, csv_domains, tmp_path):
        cfg = ExperimentConfig("train", cilda=FAST, n_classes=3, source=csv_domains["A"],
                               target=csv_domains["B"], test=csv_domains["test"],
                               report=str(tmp_path / "r.json"))
        report = run_task(cfg)
        res = report.methods["cilda2"]
        assert res.std == 0.0 and len(res.accuracies) == 1
        assert res.confusion.sum(axis=1).tolist() == [10, 10, 10]
        d = json.loads((tmp_path / "r.json").read_text())
        C = np.array(d["methods"]["cilda2"]["confusion"])
        assert d["methods"]["cilda2"]["accuracy"][0] == np.trace(C) / C.sum()
        timing = json.loads((tmp_path / "r.timing.json").read_text())
        assert timing["cilda2"]["train_seconds"][0] > 0

    def test_repetitions_and_bytes(self, csv_domains, tmp_path):
        def go(tag):
            cfg = ExperimentConfig("train", cilda=FAST, n_classes=3, repetitions=3, seed=4,
                                   source=csv_domains["A"], target=csv_domains["B"],
                                   test=csv_domains["test"], model=str(tmp_path / f"m{tag}.json"),
                                   report=str(tmp_path / f"r{tag}.json"))
            return run_task(cfg)

        rep = go(1)
        go(2)
        assert rep.methods["cilda2"].seeds == [4, 5, 6]
        assert rep.methods["cilda2"].confusion.sum() == 90
        for a, b in (("m1.json", "m2.json"), ("r1.csv", "r2.csv")):
            assert (tmp_path / a).read_bytes() == (tmp_path / b).read_bytes()
        j1 = json.loads((tmp_path / "r1.json").read_text())
        j2 = json.loads((tmp_path / "r2.json").read_text())
        j1.pop("artifacts"), j2.pop("artifacts")
        assert j1 == j2

    def test_baseline_variant_needs_no_source(self, csv_domains):
        cfg = ExperimentConfig("train", cilda=FAST, n_classes=3, variant="sc3",
                               target=csv_domains["B"], test=csv_domains["test"])
        assert "sc3" in run_task(cfg).methods

    def test_cross_variant_needs_source(self, csv_domains):
        cfg = ExperimentConfig("train", cilda=FAST, n_classes=3, target=csv_domains["B"])
        with pytest.raises(ValidationError):
            run_task(cfg)

    def test_evaluate_saved_model(self, csv_domains, tmp_path):
        model = str(tmp_path / "m.json")
        trained = run_task(ExperimentConfig("train", cilda=FAST, n_classes=3, source=csv_domains["A"],
                                            target=csv_domains["B"], test=csv_domains["test"],
                                            model=model))
        ev = run_task(ExperimentConfig("evaluate", model=model, test=csv_domains["test"]))
        assert np.array_equal(ev.methods["cilda2"].confusion, trained.methods["cilda2"].confusion)

    def test_synth_bench_schema(self, tmp_path):
        cfg = ExperimentConfig("synth-bench", cilda=FAST, repetitions=2,
                               report=str(tmp_path / "b.json"))
        report = run_task(cfg)
        assert {"cilda2", "sc3", "cileda", "self"} <= set(report.methods)
        rows = list(csv.DictReader(open(tmp_path / "b.csv")))
        assert {r["method"] for r in rows} == {"cilda2", "sc3", "cileda", "self"}
        per_class = BenchSpec().test_per_class
        for res in report.methods.values():
            assert res.confusion.sum(axis=1).tolist() == [2 * per_class] * 4


class TestSensitivity:
    def base(self, csv_domains, tmp_path, **kw):
        return ExperimentConfig("sensitivity", cilda=FAST, n_classes=3, source=csv_domains["A"],
                                target=csv_domains["B"], test=csv_domains["test"],
                                grid_out=str(tmp_path / "grid.csv"), **kw)

    def test_single_point_equals_run(self, csv_domains, tmp_path):
        cfg = self.base(csv_domains, tmp_path, repetitions=2, sweep=("cs", "lambda"),
                        grid={"cs": [0.5], "lambda": [2.0]})
        rows = sensitivity_grid(cfg)
        assert len(rows) == 1
        direct = run_task(ExperimentConfig("train", cilda=replace(FAST, C_S=0.5, lam=2.0),
                                           n_classes=3, repetitions=2, source=csv_domains["A"],
                                           target=csv_domains["B"], test=csv_domains["test"]))
        assert rows[0][2] == direct.methods["cilda2"].mean
        assert rows[0][3] == direct.methods["cilda2"].std

    def test_target_weight_sweep_shape(self, csv_domains, tmp_path):
        cfg = self.base(csv_domains, tmp_path, sweep=("cs", "ct"), grid={"cs": [1.0]})
        rows = sensitivity_grid(cfg, fixed={"lambda": 10.0})
        assert [r[1] for r in rows] == list(DECADES) and all(r[0] == 1.0 for r in rows)
        lines = (tmp_path / "grid.csv").read_text().splitlines()
        assert lines[0] == "cs,ct,mean_acc,std_acc" and len(lines) == 8

    def test_dedup(self, csv_domains, tmp_path):
        cfg = self.base(csv_domains, tmp_path, grid={"cs": [1, 10, 1.0], "lambda": [10]})
        assert [r[0] for r in sensitivity_grid(cfg)] == [1.0, 10.0]

    def test_unknown(self, csv_domains, tmp_path):
        with pytest.raises(UnknownParameter):
            sensitivity_grid(self.base(csv_domains, tmp_path, sweep=("cs", "gamma")))
        with pytest.raises(UnknownParameter):
            sensitivity_grid(self.base(csv_domains, tmp_path), fixed={"tmax": 3})

    def test_csv_precision(self, csv_domains, tmp_path):
        cfg = self.base(csv_domains, tmp_path, grid={"cs": [0.1], "lambda": [0.5]})
        sensitivity_grid(cfg)
        row = (tmp_path / "grid.csv").read_text().splitlines()[1].split(",")
        assert float(row[2]) == sensitivity_grid(cfg)[0][2]


class TestReport:
    def test_write_is_deterministic(self, tmp_path):
        r = Report("train", 2)
        r.method("a").add(0, np.array([[3, 1], [0, 2]]), 0.123)
        r.write(tmp_path / "x.json")
        first = (tmp_path / "x.json").read_bytes()
        r.methods["a"].train_seconds[0] = 9.9
        r.write(tmp_path / "x.json")
        assert (tmp_path / "x.json").read_bytes() == first
        assert json.loads((tmp_path / "x.timing.json").read_text())["a"]["train_seconds"] == [9.9]
