"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 training failure. The worker
thread count comes from the ``CILEDA_THREADS`` environment variable.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .cilda import CildaConfig
from .cloudfeat import FeatureConfig
from .dataio import DEFAULT_CLASSES
from .errors import CiledaError, TrainingError, UnknownParameter, ValidationError
from .harness import SWEEPABLE, BenchSpec, ExperimentConfig, run_task
from .scn import DEFAULT_SCALES


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad number list {text!r}") from exc


def _param(name: str) -> str:
    key = name.strip().lower().replace("_", "")
    if key not in SWEEPABLE:
        raise UnknownParameter(f"{name!r}; choose from {sorted(SWEEPABLE)}")
    return key


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cs", type=float, default=1.0, help="source weight C_S")
    p.add_argument("--ct", type=float, default=100.0, help="target weight C_T")
    p.add_argument("--lambda", dest="lam", type=float, default=10.0,
                   help="domain-matching weight")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lmax", type=int, default=200, help="maximum hidden nodes")
    p.add_argument("--tmax", type=int, default=100, help="candidates per scale")
    p.add_argument("--eps", type=float, default=0.1, help="residual tolerance")
    p.add_argument("--scales", default=",".join(str(s) for s in DEFAULT_SCALES))
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--classes", type=int, default=DEFAULT_CLASSES)


def _cilda_cfg(a, variant="cilda2") -> CildaConfig:
    return CildaConfig(L_max=a.lmax, eps=a.eps, T_max=a.tmax,
                       scale_set=tuple(_floats(a.scales)), seed=a.seed,
                       C_S=a.cs, C_T=a.ct, lam=a.lam,
                       variant=variant if variant.startswith("cilda") else "cilda2")


def _resolve(token: str, data_dir: str) -> str:
    """A dataset argument is either a CSV path or a domain id under ``data_dir``."""
    if Path(token).is_file():
        return token
    candidate = Path(data_dir) / f"{token}.csv"
    if candidate.is_file():
        return str(candidate)
    raise ValidationError(f"no dataset file for {token!r} (looked in {data_dir})")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cileda", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("extract", help="featurize recordings listed in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--level", type=int, default=3)
    p.add_argument("--wavelet", default="db4")
    p.add_argument("--window", type=int, default=1024)
    p.add_argument("--step", type=int, default=1024)
    p.add_argument("--denoise-level", type=int, default=4)
    p.add_argument("--classes", type=int, default=DEFAULT_CLASSES)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--report")

    p = sub.add_parser("train", help="train one network")
    p.add_argument("--variant", choices=["cilda1", "cilda2", "sc1", "sc3"], default="cilda2")
    p.add_argument("--source")
    p.add_argument("--target", required=True)
    p.add_argument("--test", help="optional test CSV, evaluated after each repetition")
    p.add_argument("--model", help="model JSON (first repetition)")
    p.add_argument("--report")
    _add_model_args(p)

    p = sub.add_parser("evaluate", help="score a saved model on a test CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--report")

    p = sub.add_parser("ensemble", help="train the majority-vote ensemble")
    p.add_argument("--target", required=True, help="domain id or CSV path")
    p.add_argument("--sources", required=True, help="comma-separated ids or paths")
    p.add_argument("--data-dir", default=".", help="where <id>.csv files live")
    p.add_argument("--test")
    p.add_argument("--out", help="ensemble JSON")
    p.add_argument("--report")
    _add_model_args(p)

    p = sub.add_parser("sensitivity", help="two-parameter accuracy grid")
    p.add_argument("--sweep", default="cs,lambda", help="two of cs, ct, lambda")
    p.add_argument("--fixed", action="append", default=[], help="name=value, repeatable")
    p.add_argument("--values1", help="comma-separated grid for the first parameter")
    p.add_argument("--values2", help="comma-separated grid for the second parameter")
    p.add_argument("--variant", choices=["cilda1", "cilda2"], default="cilda2")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="grid CSV")
    p.add_argument("--report")
    _add_model_args(p)

    p = sub.add_parser("synth-bench", help="synthetic domain-shift benchmark")
    p.add_argument("--seeds", type=int, default=20, help="number of repetitions")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--shift", type=float, default=BenchSpec.shift)
    p.add_argument("--rotation", type=float, default=BenchSpec.rotation)
    p.add_argument("--warp", type=float, default=BenchSpec.warp)
    p.add_argument("--noise", type=float, default=BenchSpec.noise_sigma)
    p.add_argument("--lmax", type=int, default=200)
    p.add_argument("--tmax", type=int, default=100)
    p.add_argument("--report", default="synth_bench.json")
    return ap


def config_from_args(a) -> ExperimentConfig:
    if a.verb == "extract":
        feats = FeatureConfig(level=a.level, wavelet=a.wavelet, window=a.window,
                              step=a.step, denoise_level=a.denoise_level,
                              n_classes=a.classes)
        return ExperimentConfig("feature-extract", manifest=a.manifest, features=feats,
                                out_dir=a.out, report=a.report, n_classes=a.classes)
    if a.verb == "train":
        return ExperimentConfig("train", cilda=_cilda_cfg(a, a.variant),
                                repetitions=a.repetitions, seed=a.seed,
                                n_classes=a.classes, variant=a.variant,
                                source=a.source, target=a.target, test=a.test,
                                model=a.model, report=a.report)
    if a.verb == "evaluate":
        return ExperimentConfig("evaluate", model=a.model, test=a.test, report=a.report)
    if a.verb == "ensemble":
        sources = tuple(_resolve(s.strip(), a.data_dir)
                        for s in a.sources.split(",") if s.strip())
        return ExperimentConfig("ensemble", cilda=_cilda_cfg(a), repetitions=a.repetitions,
                                seed=a.seed, n_classes=a.classes,
                                target=_resolve(a.target, a.data_dir), sources=sources,
                                test=a.test, model=a.out, report=a.report)
    if a.verb == "sensitivity":
        sweep = tuple(_param(s) for s in a.sweep.split(","))
        if len(sweep) != 2:
            raise ValidationError("--sweep takes exactly two parameters")
        cilda = _cilda_cfg(a, a.variant)
        for item in a.fixed:
            name, _, value = item.partition("=")
            key = _param(name)
            if key in sweep:
                raise ValidationError(f"{key} is both swept and fixed")
            cilda = replace(cilda, **{SWEEPABLE[key]: _floats(value)[0]})
        grid = {}
        for key, vals in zip(sweep, (a.values1, a.values2)):
            if vals:
                grid[key] = _floats(vals)
        return ExperimentConfig("sensitivity", cilda=cilda, repetitions=a.repetitions,
                                seed=a.seed, n_classes=a.classes, variant=a.variant,
                                source=a.source, target=a.target, test=a.test,
                                sweep=sweep, grid=grid, grid_out=a.out, report=a.report)
    bench = BenchSpec(shift=a.shift, rotation=a.rotation, warp=a.warp, noise_sigma=a.noise)
    return ExperimentConfig("synth-bench", cilda=CildaConfig(L_max=a.lmax, T_max=a.tmax),
                            repetitions=a.seeds, seed=a.seed, bench=bench,
                            report=a.report, n_classes=bench.n_classes)


def _summary(report) -> dict:
    out = {"task": report.task}
    for name, res in report.methods.items():
        if res.confusion.sum():
            out[name] = {"mean_accuracy": res.mean, "std_accuracy": res.std}
    if report.artifacts:
        out["artifacts"] = [str(a) for a in report.artifacts]
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = run_task(config_from_args(args))
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 3
    except (CiledaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(_summary(report), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
