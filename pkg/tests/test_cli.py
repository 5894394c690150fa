import json
import subprocess
import sys

import pytest

from cileda import cli, harness
from cileda.dataio import read_dataset_csv
from cileda.errors import NonFinite
from cileda.search import THREADS_ENV

from conftest import write_corpus

FAST = ["--lmax", "10", "--tmax", "8"]


@pytest.fixture(scope="module")
def features(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    manifest = write_corpus(root, domains=("A", "B", "C"), n_classes=3, length=4096)
    out = root / "feat"
    code = cli.main(["extract", "--manifest", str(manifest), "--level", "2", "--window", "256",
                     "--step", "256", "--classes", "3", "--out", str(out)])
    assert code == 0
    return out


def run(argv, threads, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, str(threads))
    return cli.main(argv)


class TestVerbs:
    def test_extract_outputs(self, features):
        for dom in "ABC":
            ds = read_dataset_csv(features / f"{dom}.csv", n_classes=3)
            assert ds.features.shape == (48, 21) and ds.domain_id == dom

    def test_train_evaluate(self, features, tmp_path, monkeypatch):
        model, report = tmp_path / "m.json", tmp_path / "r.json"
        assert run(["train", "--variant", "cilda1", "--source", str(features / "A.csv"),
                    "--target", str(features / "B.csv"), "--cs", "1", "--ct", "100",
                    "--lambda", "10", "--seed", "3", "--classes", "3", "--model", str(model)] + FAST,
                   1, monkeypatch) == 0
        assert json.loads(model.read_text())["variant"] == "cilda1"
        assert run(["evaluate", "--model", str(model), "--test", str(features / "C.csv"),
                    "--report", str(report)], 1, monkeypatch) == 0
        d = json.loads(report.read_text())
        assert sum(map(sum, d["methods"]["cilda1"]["confusion"])) == 48

    def test_ensemble_by_domain_id(self, features, tmp_path, monkeypatch):
        out = tmp_path / "e.json"
        assert run(["ensemble", "--target", "B", "--sources", "A,C", "--data-dir", str(features),
                    "--classes", "3", "--out", str(out)] + FAST, 1, monkeypatch) == 0
        d = json.loads(out.read_text())
        assert d["kind"] == "cileda" and len(d["members"]) == 3

    def test_sensitivity(self, features, tmp_path, monkeypatch):
        grid = tmp_path / "g.csv"
        argv = ["sensitivity", "--sweep", "cs,lambda", "--fixed", "ct=100", "--values1", "1,10",
                "--values2", "0.5", "--source", str(features / "A.csv"), "--target",
                str(features / "B.csv"), "--test", str(features / "C.csv"), "--classes", "3",
                "--out", str(grid)] + FAST
        assert run(argv, 1, monkeypatch) == 0
        assert grid.read_text().splitlines()[0] == "cs,lambda,mean_acc,std_acc"


class TestExitCodes:
    def test_validation(self, tmp_path, capsys):
        assert cli.main(["evaluate", "--model", str(tmp_path / "none.json"),
                         "--test", str(tmp_path / "none.csv")]) == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_parameter(self, features, tmp_path):
        argv = ["sensitivity", "--sweep", "cs,gamma", "--source", "x", "--target", "y",
                "--test", "z", "--out", str(tmp_path / "g.csv")]
        assert cli.main(argv) == 2

    def test_swept_and_fixed(self, features, tmp_path):
        argv = ["sensitivity", "--sweep", "cs,ct", "--fixed", "ct=1", "--source", "x",
                "--target", "y", "--test", "z", "--out", str(tmp_path / "g.csv")]
        assert cli.main(argv) == 2

    def test_duplicate_domain(self, features, tmp_path):
        argv = ["ensemble", "--target", "B", "--sources", "A,B", "--data-dir", str(features),
                "--classes", "3"] + FAST
        assert cli.main(argv) == 2

    def test_training_failure(self, features, monkeypatch):
        def boom(*a, **k):
            raise NonFinite("diverged")

        monkeypatch.setattr(harness, "cilda_train", boom)
        argv = ["train", "--source", str(features / "A.csv"), "--target", str(features / "B.csv"),
                "--classes", "3"] + FAST
        assert cli.main(argv) == 3

    def test_usage(self):
        with pytest.raises(SystemExit) as exc:
            cli.main([])
        assert exc.value.code == 2

    def test_module_entry(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "cileda", "synth-bench", "--seeds", "1",
                               "--lmax", "5", "--tmax", "5", "--report", str(tmp_path / "s.json")],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout)["task"] == "synth-bench"


def outputs(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())
            if p.is_file() and not p.name.endswith(".timing.json")}


class TestDeterminism:
    """Every verb, same seed, 1 and 8 worker threads: identical files."""

    def verbs(self, features, out):
        f = lambda n: str(features / f"{n}.csv")  # noqa: E731
        return [
            ["extract", "--manifest", str(features.parent / "manifest.json"), "--level", "2",
             "--window", "256", "--step", "256", "--classes", "3", "--out", str(out / "feat")],
            ["train", "--variant", "cilda2", "--source", f("A"), "--target", f("B"), "--seed", "5",
             "--classes", "3", "--repetitions", "2", "--test", f("C"), "--model",
             str(out / "m.json"), "--report", str(out / "train.json")] + FAST,
            ["train", "--variant", "sc3", "--target", f("B"), "--classes", "3",
             "--model", str(out / "s.json")] + FAST,
            ["evaluate", "--model", str(out / "m.json"), "--test", f("C"), "--report",
             str(out / "eval.json")],
            ["ensemble", "--target", "B", "--sources", "A,C", "--data-dir", str(features),
             "--classes", "3", "--test", f("C"), "--out", str(out / "e.json"), "--report",
             str(out / "ens.json")] + FAST,
            ["sensitivity", "--sweep", "cs,lambda", "--values1", "1,10", "--values2", "0.5,10",
             "--source", f("A"), "--target", f("B"), "--test", f("C"), "--classes", "3",
             "--out", str(out / "grid.csv"), "--report", str(out / "sens.json")] + FAST,
            ["synth-bench", "--seeds", "2", "--lmax", "10", "--tmax", "8",
             "--report", str(out / "bench.json")],
        ]

    def test_byte_identical(self, features, tmp_path, monkeypatch):
        results = {}
        for threads in (1, 8):
            out = tmp_path / f"t{threads}"
            out.mkdir()
            for argv in self.verbs(features, out):
                assert run(argv, threads, monkeypatch) == 0, argv[0]
            files = outputs(out)
            files.update({f"feat/{k}": v for k, v in outputs(out / "feat").items()})
            results[threads] = files
        a, b = results[1], results[8]
        assert a.keys() == b.keys() and len(a) >= 14
        for name in a:
            text_a = a[name].replace(b"/t1/", b"/tX/")
            text_b = b[name].replace(b"/t8/", b"/tX/")
            assert text_a == text_b, name
