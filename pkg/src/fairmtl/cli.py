"""Command-line front end: ``synth``, ``train``, ``compare`` and ``trace``.

Exit codes: 0 success, 2 configuration/validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .data import Dataset, SynthSpec, generate_synthetic, load_csv, split, write_csv
from .errors import ConfigError, FairMTLError, NumericError
from .losses import Action
from .metrics import MetricsReport, relative_report
from .trainer import (
    METHODS,
    TrainConfig,
    TrainedModel,
    evaluate,
    evaluate_stl,
    stl_lambda,
    train,
    train_stl_all,
)

log = logging.getLogger("fairmtl")

REPORT_SCHEMA_ID = "fairmtl.report/1"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


@dataclass
class ExperimentConfig:
    train: TrainConfig
    data: dict
    split: tuple = (0.6, 0.2, 0.2)
    out_dir: str = "runs"
    methods: list = field(default_factory=lambda: ["l2t"])
    seeds: list = field(default_factory=lambda: [0])
    stl_reference: str | None = None

    def __post_init__(self):
        if not self.methods or not self.seeds:
            raise ConfigError("at least one method and one seed are required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
        if "synthetic" not in self.data and "csv" not in self.data:
            raise ConfigError("data must contain a 'synthetic' or 'csv' entry")

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        raw = dict(raw)
        data = raw.pop("data", None)
        if not isinstance(data, dict):
            raise ConfigError("config needs a 'data' object")
        T = data["synthetic"]["T"] if "synthetic" in data else data.get("csv", {}).get("T")
        if T is None:
            raise ConfigError("data source must state T")
        raw.setdefault("n_tasks", T)
        if raw["n_tasks"] != T:
            raise ConfigError(f"n_tasks={raw['n_tasks']} disagrees with data T={T}")
        methods = raw.pop("methods", None) or [raw.get("method", "l2t")]
        seeds = raw.pop("seeds", None) or [raw.get("seed", 0)]
        extra = {k: raw.pop(k) for k in ("split", "out_dir", "stl_reference") if k in raw}
        if "split" in extra:
            extra["split"] = tuple(extra["split"])
        raw.setdefault("method", methods[0])
        raw.setdefault("seed", seeds[0])
        try:
            cfg = TrainConfig.from_dict(raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cls(cfg, data, methods=list(methods), seeds=[int(s) for s in seeds], **extra)

    def to_dict(self) -> dict:
        d = self.train.to_dict()
        d.update(data=self.data, split=list(self.split), out_dir=self.out_dir, methods=list(self.methods),
                 seeds=list(self.seeds), stl_reference=self.stl_reference)
        return d


def load_experiment(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "method":
            raw["method"], raw["methods"] = value, [value]
        elif key == "seed":
            raw["seed"], raw["seeds"] = value, [value]
        elif key == "out":
            raw["out_dir"] = value
    return ExperimentConfig.from_dict(raw)


def build_dataset(data: dict, seed: int) -> Dataset:
    if "synthetic" in data:
        s = dict(data["synthetic"])
        data_seed = s.pop("seed", seed)
        return generate_synthetic(SynthSpec(**s), data_seed)
    c = data["csv"]
    return load_csv(c["path"], int(c["d"]), int(c["T"]))


# -- file emitters ----------------------------------------------------------

def write_trace(trace, path) -> None:
    T = len(trace[0]) if trace else 0
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["epoch"] + [f"task_{t}" for t in range(T)]) + "\n")
        for i, row in enumerate(trace):
            fh.write(",".join([str(i)] + [Action(a).value for a in row]) + "\n")


def read_trace(path) -> list[list[str]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["epoch"]:
        raise ConfigError(f"{path}: not a trace file")
    out = []
    for row in rows[1:]:
        cells = row[1:]
        if any(c not in ("A", "F") for c in cells):
            raise ConfigError(f"{path}: trace cells must be A or F")
        out.append(cells)
    return out


def selection_frequencies(trace) -> list[dict]:
    arr = np.array(trace)
    T = arr.shape[1] if arr.size else 0
    return [{"task": t, "A": float(np.mean(arr[:, t] == "A")), "F": float(np.mean(arr[:, t] == "F"))}
            for t in range(T)]


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _history(model: TrainedModel) -> list[dict]:
    return [{"epoch": i, "val": r.to_dict(), "composite": r.composite()} for i, r in enumerate(model.history)]


def _stl_history(models: list[TrainedModel]) -> list[dict]:
    # tasks that stopped early carry their last epoch forward
    n = max(m.epochs_completed for m in models)
    out = []
    for i in range(n):
        reps = [m.history[min(i, m.epochs_completed - 1)] for m in models]
        r = MetricsReport([x.acc[0] for x in reps], [x.eo[0] for x in reps])
        out.append({"epoch": i, "val": r.to_dict(), "composite": r.composite()})
    return out


def _stl_trace(cfg: TrainConfig, models: list[TrainedModel]) -> list[list[Action]]:
    n = max(m.epochs_completed for m in models)
    row = [Action.FAIRNESS if stl_lambda(cfg, t) > 0 else Action.ACCURACY for t in range(len(models))]
    return [list(row) for _ in range(n)]


def run_one(exp: ExperimentConfig, method: str, seed: int, out_dir: Path, stl_test: MetricsReport | None = None) -> dict:
    """Train one (method, seed) pair and write report.json, trace.csv and checkpoint(s)."""
    t0 = time.perf_counter()
    cfg = replace(exp.train, method=method, seed=seed)
    splits = split(build_dataset(exp.data, seed), exp.split, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    if method == "stl":
        models = train_stl_all(cfg, splits)
        val_rep, test_rep = evaluate_stl(models, splits.val), evaluate_stl(models, splits.test)
        history, trace = _stl_history(models), _stl_trace(cfg, models)
        best_epoch = [m.best_epoch for m in models]
        ckpt_files = []
        for t, m in enumerate(models):
            name = f"checkpoint_task{t}.fmt"
            checkpoint.save_checkpoint(m.net, out_dir / name)
            ckpt_files.append(name)
        stl_test = test_rep
    else:
        model = train(cfg, splits)
        val_rep, test_rep = evaluate(model, splits.val), evaluate(model, splits.test)
        history, trace, best_epoch = _history(model), model.trace, [model.best_epoch]
        checkpoint.save_checkpoint(model.net, out_dir / "checkpoint.fmt")
        ckpt_files = ["checkpoint.fmt"]
        if stl_test is None and exp.stl_reference == "train":
            stl_test = evaluate_stl(train_stl_all(replace(cfg, method="stl"), splits), splits.test)
    ara = areo = None
    if stl_test is not None:
        ara, areo = relative_report(test_rep, stl_test)
    write_trace(trace, out_dir / "trace.csv")
    report = {
        "schema": REPORT_SCHEMA_ID,
        "method": method,
        "seed": seed,
        "config": exp.to_dict(),
        "epochs_completed": len(history),
        "best_epoch": best_epoch,
        "history": history,
        "final": {"val": val_rep.to_dict(), "test": test_rep.to_dict()},
        "stl": stl_test.to_dict() if stl_test is not None else None,
        "ara": ara,
        "areo": areo,
        "files": {"trace": "trace.csv", "checkpoints": ckpt_files},
    }
    _dump_json(report, out_dir / "report.json")
    # wall time lives outside report.json so reports stay byte-reproducible
    _dump_json({"wall_time_s": time.perf_counter() - t0}, out_dir / "timing.json")
    return report


def _run_dir(exp: ExperimentConfig, method: str, seed: int) -> Path:
    return Path(exp.out_dir) / method / f"seed{seed}"


def _load_stl_reference(path) -> MetricsReport:
    try:
        rep = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read STL reference {path}: {exc}") from None
    return MetricsReport.from_dict(rep["final"]["test"])


def _workers(requested: int | None) -> int:
    n = requested or 1
    cap = os.environ.get("FAIRMTL_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _run_many(exp, jobs, parallel):
    """Run ``(method, seed, stl_test)`` jobs, sequentially or in worker processes."""
    workers = _workers(parallel)
    if workers == 1 or len(jobs) == 1:
        return [run_one(exp, m, s, _run_dir(exp, m, s), ref) for m, s, ref in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_one, exp, m, s, _run_dir(exp, m, s), ref) for m, s, ref in jobs]
        return [f.result() for f in futures]


def cmd_train(exp: ExperimentConfig, parallel: int | None = None) -> list[dict]:
    if len(exp.methods) != 1:
        raise ConfigError("train runs exactly one method; use compare for several")
    ref = _load_stl_reference(exp.stl_reference) if exp.stl_reference not in (None, "train") else None
    return _run_many(exp, [(exp.methods[0], s, ref) for s in exp.seeds], parallel)


def _mean_std(values) -> dict:
    a = np.asarray(values, dtype=np.float64)
    return {"mean": a.mean(axis=0).tolist(), "std": a.std(axis=0).tolist()}


def cmd_compare(exp: ExperimentConfig, parallel: int | None = None) -> dict:
    if len(exp.methods) < 2:
        raise ConfigError("compare needs at least two methods")
    methods = list(exp.methods)
    if exp.stl_reference not in (None, "train"):
        fixed_ref = _load_stl_reference(exp.stl_reference)
        stl_by_seed = {s: fixed_ref for s in exp.seeds}
    elif "stl" in methods or exp.stl_reference == "train":
        stl_reports = _run_many(exp, [("stl", s, None) for s in exp.seeds], parallel)
        stl_by_seed = {s: MetricsReport.from_dict(r["final"]["test"]) for s, r in zip(exp.seeds, stl_reports)}
    else:
        raise ConfigError("compare needs STL runs: add 'stl' to methods or set stl_reference")
    others = [m for m in methods if m != "stl"]
    jobs = [(m, s, stl_by_seed[s]) for m in others for s in exp.seeds]
    runs = dict(zip([(m, s) for m, s, _ in jobs], _run_many(exp, jobs, parallel)))
    if "stl" in methods:
        for s in exp.seeds:
            runs[("stl", s)] = json.loads((_run_dir(exp, "stl", s) / "report.json").read_text(encoding="utf-8"))
    summary = {"methods": {}, "seeds": list(exp.seeds)}
    rows = []
    for m in sorted(methods):
        reps = [runs[(m, s)] for s in exp.seeds]
        acc = np.array([r["final"]["test"]["acc"] for r in reps])
        eo = np.array([r["final"]["test"]["eo"] for r in reps])
        ara = [r["ara"] for r in reps]
        areo = [r["areo"] for r in reps]
        entry = {
            "acc": _mean_std(acc), "eo": _mean_std(eo),
            "ara": _mean_std(ara), "areo": _mean_std(areo),
        }
        summary["methods"][m] = entry
        for t in range(acc.shape[1]):
            rows.append([m, str(t), acc[:, t].mean(), acc[:, t].std(), eo[:, t].mean(), eo[:, t].std(), "", "", "", ""])
        rows.append([m, "mean", acc.mean(axis=1).mean(), acc.mean(axis=1).std(), eo.mean(axis=1).mean(),
                     eo.mean(axis=1).std(), entry["ara"]["mean"], entry["ara"]["std"],
                     entry["areo"]["mean"], entry["areo"]["std"]])
    out = Path(exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(summary, out / "comparison.json")
    with (out / "comparison.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("method,task,acc_mean,acc_std,eo_mean,eo_std,ara_mean,ara_std,areo_mean,areo_std\n")
        for row in rows:
            fh.write(",".join(x if isinstance(x, str) else repr(float(x)) for x in row) + "\n")
    return summary


def cmd_synth(spec: SynthSpec, seed: int, out) -> Dataset:
    ds = generate_synthetic(spec, seed)
    try:
        write_csv(ds, out)
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc.strerror}") from None
    print(f"n={ds.n} d={ds.d} T={ds.T}")
    for t, rate in enumerate(ds.Y.mean(axis=0)):
        print(f"task_{t} base_rate={rate:.4f}")
    return ds


def cmd_trace(path, out=None) -> list[dict]:
    trace = read_trace(path)
    freqs = selection_frequencies(trace)
    for i, row in enumerate(trace):
        print(f"{i}\t{' '.join(row)}")
    for f in freqs:
        print(f"task_{f['task']}: A={f['A']:.3f} F={f['F']:.3f}")
    if out:
        with Path(out).open("w", encoding="utf-8", newline="") as fh:
            fh.write("task,A,F\n")
            for f in freqs:
                fh.write(f"{f['task']},{f['A']!r},{f['F']!r}\n")
    return freqs


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairmtl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic biased dataset as CSV")
    s.add_argument("--config", help="JSON file with a SynthSpec (or an experiment config)")
    s.add_argument("--n", type=int)
    s.add_argument("--d", type=int)
    s.add_argument("--T", type=int)
    s.add_argument("--bias", type=float, nargs="+")
    s.add_argument("--noise", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    for name, helptext in (("train", "train one method"), ("compare", "compare methods against STL")):
        c = sub.add_parser(name, help=helptext)
        c.add_argument("config")
        c.add_argument("--seed", type=int)
        c.add_argument("--method", choices=METHODS)
        c.add_argument("--out")
        c.add_argument("--parallel", type=int, default=1)

    t = sub.add_parser("trace", help="print a stored trace with per-task selection frequencies")
    t.add_argument("path")
    t.add_argument("--out")
    return p


def _synth_spec(args) -> SynthSpec:
    fields_ = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        raw = raw.get("data", {}).get("synthetic", raw)
        fields_.update({k: raw[k] for k in ("n", "d", "T", "bias", "noise") if k in raw})
    for k in ("n", "d", "T", "bias", "noise"):
        v = getattr(args, k)
        if v is not None:
            fields_[k] = v
    missing = [k for k in ("n", "d", "T", "bias") if k not in fields_]
    if missing:
        raise ConfigError(f"missing synthetic fields: {', '.join(missing)}")
    if isinstance(fields_["bias"], list) and len(fields_["bias"]) == 1:
        fields_["bias"] = fields_["bias"][0]
    return SynthSpec(**fields_)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "synth":
            cmd_synth(_synth_spec(args), args.seed, args.out)
        elif args.command == "trace":
            cmd_trace(args.path, args.out)
        else:
            exp = load_experiment(args.config, {"seed": args.seed, "method": args.method, "out": args.out})
            if args.command == "train":
                cmd_train(exp, args.parallel)
            else:
                cmd_compare(exp, args.parallel)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FairMTLError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
