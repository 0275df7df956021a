"""Command-line entry point: ``manetids <command> ...``.

Every command writes its outputs plus a ``manifest.json`` in the output
directory. The manifest records the resolved configuration, seeds, input
digests and tool version, and contains no timestamps, so identical inputs
produce identical files.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from .classifiers import (MODEL_KINDS, Hyperparameters, LabelTask, TrainingError, load_model,
                          save_model, train_model)
from .config import ConfigError, SimConfig, load_config
from .features import DatasetError, merge_datasets, read_dataset, write_dataset
from .evaluation import (EvalReport, ExperimentSpec, GridSpec, ScenarioStore, SchemaMismatch,
                         SearchFailure, evaluate, grid_search, run_experiment,
                         run_online_detection, simulate_dataset, write_summary, write_table)

log = logging.getLogger("manetids")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
MANIFEST = "manifest.json"
TASK_NAMES = ("binary", "multiclass")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# -- configuration ------------------------------------------------------------------

SECTIONS = {
    "sim": {f.name for f in dataclasses.fields(SimConfig)},
    "grid": {f.name for f in dataclasses.fields(GridSpec)},
    "experiment": {f.name for f in dataclasses.fields(ExperimentSpec)} - {"base", "grid"},
}


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict[str, dict], pairs: list[str]) -> None:
    """``section.key=value`` or bare ``key=value`` when the key names one section's field."""
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {pair!r}")
        section, dot, name = key.rpartition(".")
        if dot:
            if section not in SECTIONS:
                raise UsageError(f"unknown config section {section!r} in {pair!r}")
        else:
            owners = [s for s, names in SECTIONS.items() if name in names]
            if len(owners) != 1:
                raise UsageError(f"unknown config key {name!r}")
            section = owners[0]
        if name not in SECTIONS[section]:
            raise UsageError(f"unknown key {name!r} in section {section!r}")
        cfg.setdefault(section, {})[name] = _parse_value(raw)


@dataclass
class LoadedConfig:
    sections: dict[str, dict]
    digest: str | None

    def sim(self) -> SimConfig:
        return SimConfig.from_dict(self.sections.get("sim", {}))

    def grid(self) -> GridSpec:
        preset = self.sections.get("grid_preset", "full")
        if preset not in ("full", "reduced"):
            raise ConfigError(f"grid_preset must be 'full' or 'reduced', got {preset!r}")
        base = GridSpec.reduced() if preset == "reduced" else GridSpec()
        over = {k: tuple(v) if isinstance(v, list) else v
                for k, v in self.sections.get("grid", {}).items()}
        return dataclasses.replace(base, **over)

    def experiment(self, sweep: str | None) -> ExperimentSpec:
        opts = dict(self.sections.get("experiment", {}))
        if sweep is not None:
            opts["sweep"] = sweep
        for k in ("models", "tasks", "attacks", "train_counts", "train_pauses", "test_seeds"):
            if k in opts:
                opts[k] = tuple(opts[k])
        try:
            return ExperimentSpec(**opts, grid=self.grid(), base=self.sim())
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def load(path: str | None, overrides: list[str]) -> LoadedConfig:
    sections: dict[str, Any] = {}
    digest = None
    if path is not None:
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        digest = hashlib.sha256(raw).hexdigest()
        data = load_config(path)
        allowed = set(SECTIONS) | {"grid_preset"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        for name, body in data.items():
            if name in SECTIONS:
                if not isinstance(body, dict):
                    raise ConfigError(f"section {name!r} must be an object")
                extra = set(body) - SECTIONS[name]
                if extra:
                    raise ConfigError(f"unknown keys in {name!r}: {sorted(extra)}")
                sections[name] = dict(body)
            else:
                sections[name] = body
    apply_overrides(sections, overrides)
    return LoadedConfig(sections, digest)


def spec_dict(spec: ExperimentSpec) -> dict[str, Any]:
    out = {}
    for f in dataclasses.fields(spec):
        v = getattr(spec, f.name)
        if f.name == "base":
            v = v.to_dict()
        elif f.name == "grid":
            v = v.to_dict()
        elif f.name == "attacks":
            v = [a.value for a in v]
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


# -- manifests ------------------------------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_digest: str | None
    resolved: dict[str, Any]
    seeds: dict[str, Any]
    inputs: dict[str, str] = field(default_factory=dict)      # path -> sha256
    outputs: dict[str, str] = field(default_factory=dict)     # name -> sha256
    version: str = __version__

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_manifest(outdir: Path, manifest: RunManifest, outputs: list[Path]) -> None:
    """One manifest per directory; entries are keyed by their output set so reruns replace them."""
    for p in outputs:
        manifest.outputs[p.name] = file_digest(p)
        sidecar = Path(str(p) + ".json")
        if p.suffix == ".csv" and sidecar.exists():
            manifest.outputs[sidecar.name] = file_digest(sidecar)
    path = outdir / MANIFEST
    runs = {}
    if path.exists():
        try:
            runs = json.loads(path.read_text(encoding="utf-8")).get("runs", {})
        except (json.JSONDecodeError, AttributeError):
            log.warning("replacing unreadable manifest %s", path)
    runs[",".join(sorted(manifest.outputs))] = manifest.to_dict()
    dump_json({"runs": runs}, path)


def out_path(arg: str) -> Path:
    p = Path(arg)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def read_input(path: str):
    try:
        return read_dataset(path)
    except FileNotFoundError as exc:
        raise DataError(f"{path}: no such file") from exc


# -- commands -------------------------------------------------------------------------

def cmd_simulate(args) -> None:
    cfg = load(args.config, args.set)
    sim = cfg.sim()
    if args.seed is not None:
        sim = sim.replace(rng_seed=args.seed)
    out = out_path(args.out)
    data = simulate_dataset(sim)
    write_dataset(data, out)
    log.info("%s: %d rows", sim.scenario_id, len(data))
    write_manifest(out.parent, RunManifest("simulate", cfg.digest, {"sim": sim.to_dict()},
                                           {"rng_seed": sim.rng_seed}), [out])


def cmd_build_dataset(args) -> None:
    parts = [read_input(p) for p in args.inputs]
    merged = merge_datasets(parts)
    out = out_path(args.out)
    write_dataset(merged, out)
    write_manifest(out.parent, RunManifest(
        "build-dataset", None, {"sampling_interval": merged.sampling_interval}, {},
        {p: file_digest(p) for p in args.inputs}), [out])


def cmd_tune(args) -> None:
    cfg = load(args.config, args.set)
    grid = cfg.grid()
    data = read_input(args.data)
    try:
        res = grid_search(args.model, data, LabelTask(args.task), grid, args.seed, args.folds,
                          args.jobs, args.row_cap)
    except SearchFailure as exc:
        raise DataError(str(exc)) from exc
    out = out_path(args.out)
    dump_json(res.to_dict(), out)
    write_manifest(out.parent, RunManifest(
        "tune", cfg.digest, {"grid": grid.to_dict(), "model": args.model, "task": args.task,
                             "folds": args.folds, "row_cap": args.row_cap},
        {"seed": args.seed}, {args.data: file_digest(args.data)}), [out])


REQUIRED_HP = {"mlp": ("eta", "T", "nh"), "linear": ("eta", "T"), "gmm": ("ng",),
               "svm": ("sigma", "c"), "nb": ()}


def read_hyperparameters(args) -> Hyperparameters:
    values: dict[str, Any] = {}
    if args.hp is not None:
        try:
            blob = json.loads(Path(args.hp).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read hyperparameters {args.hp}: {exc}") from exc
        values.update(blob.get("best", blob) if isinstance(blob, dict) else {})
    for pair in args.param:
        key, sep, raw = pair.partition("=")
        if not sep:
            raise UsageError(f"--param expects key=value, got {pair!r}")
        values[key] = _parse_value(raw)
    try:
        hp = Hyperparameters.from_dict(values)
        hp.require(*REQUIRED_HP[args.model])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return hp


def cmd_train(args) -> None:
    hp = read_hyperparameters(args)
    data = read_input(args.data)
    try:
        model = train_model(args.model, data, LabelTask(args.task), hp, args.seed)
    except TrainingError as exc:
        raise DataError(f"training failed: {exc}") from exc
    out = out_path(args.out)
    save_model(model, out)
    inputs = {args.data: file_digest(args.data)}
    if args.hp:
        inputs[args.hp] = file_digest(args.hp)
    write_manifest(out.parent, RunManifest(
        "train", None, {"model": args.model, "task": args.task, "hyperparameters": hp.to_dict()},
        {"seed": args.seed}, inputs), [out])


def read_model(path: str):
    try:
        return load_model(path)
    except FileNotFoundError as exc:
        raise DataError(f"{path}: no such file") from exc
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: not a model file ({exc})") from exc


def cmd_evaluate(args) -> None:
    model = read_model(args.model)
    data = read_input(args.data)
    report = evaluate(model, data, {"dt": data.sampling_interval})
    out = out_path(args.out)
    dump_json(report.to_dict(), out)
    write_manifest(out.parent, RunManifest(
        "evaluate", None, {}, {},
        {args.model: file_digest(args.model), args.data: file_digest(args.data)}), [out])


def cmd_experiment(args) -> None:
    cfg = load(args.config, args.set)
    spec = cfg.experiment(args.sweep)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    store = ScenarioStore(args.store or outdir / "scenarios")
    res = run_experiment(spec, store, args.jobs)
    outputs = [outdir / "reports.json", outdir / "table.csv", outdir / "summary.csv",
               outdir / "tuning.json"]
    dump_json({"reports": [r.to_dict() for r in res.reports], "absent": res.absent}, outputs[0])
    write_table(res.reports, outputs[1])
    write_summary(res.reports, outputs[2])
    dump_json({k: v.to_dict() for k, v in res.tuning.items()}, outputs[3])
    for name, model in sorted(res.models.items()):
        p = outdir / ("model-" + name.replace("/", "-") + ".json")
        save_model(model, p)
        outputs.append(p)
    seeds = {"train_seed": spec.train_seed, "test_seeds": list(spec.test_seeds),
             "model_seed": spec.model_seed}
    write_manifest(outdir, RunManifest("experiment", cfg.digest, spec_dict(spec), seeds), outputs)
    if res.absent:
        log.warning("%d cells absent", len(res.absent))


ALARM_HEADER = ("time", "node", "scope", "label")


def cmd_detect_online(args) -> None:
    cfg = load(args.config, args.set)
    sim = cfg.sim()
    if args.seed is not None:
        sim = sim.replace(rng_seed=args.seed)
    model = read_model(args.model)
    alarms = run_online_detection(sim, model)
    out = out_path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ALARM_HEADER)
        for a in alarms:
            w.writerow((repr(a.time), a.node, a.scope.value, a.label))
    write_manifest(out.parent, RunManifest(
        "detect-online", cfg.digest, {"sim": sim.to_dict()}, {"rng_seed": sim.rng_seed},
        {args.model: file_digest(args.model)}), [out])


def read_reports(path: str) -> list[EvalReport]:
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"{path}: no such file") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if isinstance(blob, dict) and "reports" in blob:
        blob = blob["reports"]
    items = blob if isinstance(blob, list) else [blob]
    try:
        return [EvalReport.from_dict(d) for d in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: not a report file ({exc})") from exc


def cmd_report(args) -> None:
    reports = [r for p in args.inputs for r in read_reports(p)]
    out = out_path(args.out)
    outputs = [out]
    write_table(reports, out)
    if args.summary:
        s = out_path(args.summary)
        write_summary(reports, s)
        outputs.append(s)
    dirs = {p.parent.resolve() for p in outputs}
    for d in sorted(dirs):
        write_manifest(d, RunManifest("report", None, {}, {},
                                      {p: file_digest(p) for p in args.inputs}),
                       [p for p in outputs if p.parent.resolve() == d])


# -- parser -------------------------------------------------------------------------------

class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="manetids", description="MANET intrusion detection lab")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def with_config(sp):
        sp.add_argument("--config", help="JSON config file with sim/grid/experiment sections")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. sim.malicious_count=15")

    sp = sub.add_parser("simulate", help="run one scenario and write its feature dataset")
    with_config(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("build-dataset", help="merge datasets sharing a sampling interval")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_build_dataset)

    sp = sub.add_parser("tune", help="grid search by k-fold cross validation")
    with_config(sp)
    sp.add_argument("--model", required=True, choices=MODEL_KINDS)
    sp.add_argument("--task", default="multiclass", choices=TASK_NAMES)
    sp.add_argument("--data", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--folds", type=int, default=10)
    sp.add_argument("--row-cap", type=int, help="at most this many rows per label")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("train", help="fit a model on a whole dataset")
    sp.add_argument("--model", required=True, choices=MODEL_KINDS)
    sp.add_argument("--task", default="multiclass", choices=TASK_NAMES)
    sp.add_argument("--data", required=True)
    sp.add_argument("--hp", help="hyperparameter JSON (a tune output works)")
    sp.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score a model on a dataset")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("experiment", help="run a sweep end to end")
    with_config(sp)
    sp.add_argument("--sweep", choices=("dt", "attackers", "pause"))
    sp.add_argument("--store", help="scenario cache directory (default OUT/scenarios)")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("detect-online", help="classify nodes at every boundary of a live run")
    with_config(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_detect_online)

    sp = sub.add_parser("report", help="flatten report files into plot-ready tables")
    sp.add_argument("inputs", nargs="*")
    sp.add_argument("--out", required=True)
    sp.add_argument("--summary")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:      # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("manetids: error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"manetids: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DatasetError, SchemaMismatch, OSError) as exc:
        print(f"manetids: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001
        log.exception("internal failure")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
