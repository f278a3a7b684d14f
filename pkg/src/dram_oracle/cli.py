"""Command-line front end: gen-trace, build-dataset, correlate, train, crossval, predict.

Exit codes: 0 success, 1 usage, 2 I/O or file format, 3 validation, 4 numerical.
Every command reads defaults from ``--config`` or, failing that, the file named
by ``DRAM_ORACLE_CONFIG``; explicit flags win over both.
"""
from __future__ import annotations

import argparse
import dataclasses
import glob
import os
import sys
from dataclasses import dataclass, field

from . import config as cfgio
from .dataset import DatasetError, read_dataset, read_features, write_dataset
from .dramsim import DimmFormatError, EnvPoint, SimConfig, SimulationError
from .evaluation import (
    EvaluationError,
    comparison_csv,
    knn_sweep,
    loo_by_workload,
    write_report,
)
from .features import FeatureError, extract_features, rank_features
from .models import (
    ConvergenceError,
    ModelConfig,
    ModelError,
    ModelFormatError,
    load_model,
    predict_many,
    save_model,
    train,
)
from .pipeline import build_datasets
from .trace import SpecError, TraceFormatError, WorkloadSpec, generate_trace, read_trace, write_trace
from .workloads import DEFAULT_DEVICES, GRID_T_REFP, GRID_TEMP, GRID_VDD, DeviceSpec, default_workloads

CONFIG_ENV = "DRAM_ORACLE_CONFIG"
SIM_PREFIX = "sim."

EXIT_USAGE, EXIT_IO, EXIT_VALIDATION, EXIT_NUMERIC = 1, 2, 3, 4


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Defaults shared by all commands. Simulator constants live under ``sim.<field>`` keys."""

    seed: int = 0
    out: str = ""
    t_refp: tuple[float, ...] = GRID_T_REFP
    temp: tuple[float, ...] = GRID_TEMP
    v_dd: float = GRID_VDD
    devices: tuple[str, ...] = tuple(d.to_text() for d in DEFAULT_DEVICES)
    model: str = "knn"
    feature_set: int = 1
    target: str = "wer"
    k: int = 5
    trees: int = 100
    n_exp: int = 10
    sim: SimConfig = field(default_factory=SimConfig)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            if f.name == "sim":
                continue
            lines.append(f"{f.name} = {cfgio.format_value(getattr(self, f.name))}")
        for f in dataclasses.fields(self.sim):
            lines.append(f"{SIM_PREFIX}{f.name} = {cfgio.format_value(getattr(self.sim, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        pairs = cfgio.parse_pairs(text)
        sim_pairs = {k[len(SIM_PREFIX):]: v for k, v in pairs.items() if k.startswith(SIM_PREFIX)}
        own = {k: v for k, v in pairs.items() if not k.startswith(SIM_PREFIX)}
        own.pop("sim", None)
        base = cfgio.from_pairs(cls, own)
        return dataclasses.replace(base, sim=cfgio.from_pairs(SimConfig, sim_pairs))

    def device_specs(self) -> list[DeviceSpec]:
        return [DeviceSpec.parse(t) for t in self.devices]

    def envs(self) -> list[EnvPoint]:
        return [EnvPoint(t, self.v_dd, c) for c in self.temp for t in self.t_refp]


def load_run_config(path: str | None) -> RunConfig:
    path = path or os.environ.get(CONFIG_ENV) or None
    if not path:
        return RunConfig()
    with open(path) as fh:
        return RunConfig.from_text(fh.read())


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"key = value defaults file (else ${CONFIG_ENV})")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file or directory")


def _env_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trefp", type=float, action="append", help="refresh period in s (repeatable)")
    p.add_argument("--temp", type=float, action="append", help="temperature in C (repeatable)")
    p.add_argument("--vdd", type=float, help="supply voltage in V")


def _model_flags(p: argparse.ArgumentParser, repeatable: bool = False) -> None:
    kinds = ["knn", "rdf", "svr", "baseline"]
    if repeatable:
        p.add_argument("--model", choices=kinds, action="append")
        p.add_argument("--feature-set", type=int, choices=[1, 2, 3], action="append")
    else:
        p.add_argument("--model", choices=kinds)
        p.add_argument("--feature-set", type=int, choices=[1, 2, 3])
    p.add_argument("--k", type=int)
    p.add_argument("--trees", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dram-oracle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-trace", help="generate synthetic traces")
    _common(p)
    p.add_argument("--spec", help="workload spec file (key = value)")
    p.add_argument("--workload", action="append", help="name from the default suite (repeatable)")
    p.add_argument("--all", action="store_true", help="every workload of the default suite")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a spec field")

    p = sub.add_parser("build-dataset", help="profile traces and label them by simulation")
    _common(p)
    _env_flags(p)
    p.add_argument("traces", nargs="+", help="trace files or directories of *.dotr")
    p.add_argument("--device", action="append", help="name:seed[:wer_scale] (repeatable)")
    p.add_argument("--n-exp", type=int)

    p = sub.add_parser("correlate", help="rank program features by |Spearman r| against the target")
    _common(p)
    p.add_argument("dataset")

    p = sub.add_parser("train", help="fit a model on a dataset")
    _common(p)
    _model_flags(p)
    p.add_argument("dataset")

    p = sub.add_parser("crossval", help="leave-one-workload-out cross-validation")
    _common(p)
    _model_flags(p, repeatable=True)
    p.add_argument("dataset")

    p = sub.add_parser("predict", help="predict WER or P_UE with a trained model")
    _common(p)
    _env_flags(p)
    p.add_argument("model")
    p.add_argument("--features", help="dataset-schema CSV (target column optional)")
    p.add_argument("--trace", help="trace file to profile")
    p.add_argument("--device", help="device name for --trace queries")
    return parser


def _write_text(text: str, out: str) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _trace_paths(items: list[str]) -> list[str]:
    paths = []
    for item in items:
        if os.path.isdir(item):
            found = sorted(glob.glob(os.path.join(item, "*.dotr")))
            if not found:
                raise FileNotFoundError(f"no *.dotr files in {item}")
            paths += found
        else:
            paths.append(item)
    return paths


def cmd_gen_trace(args, rc: RunConfig) -> int:
    specs: list[WorkloadSpec] = []
    suite = {s.name: s for s in default_workloads()}
    if args.spec:
        with open(args.spec) as fh:
            specs.append(WorkloadSpec.from_pairs(cfgio.parse_pairs(fh.read())))
    for name in args.workload or []:
        if name not in suite:
            raise SpecError(f"workload: unknown name {name!r}; choose from {', '.join(suite)}")
        specs.append(suite[name])
    if args.all:
        specs += list(suite.values())
    if not specs:
        raise UsageError("gen-trace: give --spec, --workload or --all")
    if args.set:
        overrides = cfgio.parse_pairs("\n".join(args.set))
        specs = [WorkloadSpec.from_pairs({**dict(s.to_pairs()), **overrides}) for s in specs]
    if args.seed is not None:
        specs = [dataclasses.replace(s, seed=args.seed) for s in specs]
    out = args.out or rc.out or "."
    many = len(specs) > 1 or os.path.isdir(out)
    if many:
        os.makedirs(out, exist_ok=True)
    for s in specs:
        trace = generate_trace(s, rc.sim.capacity_words, rc.sim.words_per_row)
        path = os.path.join(out, f"{s.name}.dotr") if many else out
        write_trace(trace, path)
        print(f"{path}: {len(trace)} accesses")
    return 0


def cmd_build_dataset(args, rc: RunConfig) -> int:
    rc = dataclasses.replace(
        rc,
        t_refp=tuple(args.trefp) if args.trefp else rc.t_refp,
        temp=tuple(args.temp) if args.temp else rc.temp,
        v_dd=args.vdd if args.vdd is not None else rc.v_dd,
        devices=tuple(args.device) if args.device else rc.devices,
        n_exp=args.n_exp if args.n_exp is not None else rc.n_exp,
        seed=args.seed if args.seed is not None else rc.seed,
    )
    envs = rc.envs()
    for e in envs:
        e.validate()
    traces = [read_trace(p) for p in _trace_paths(args.traces)]
    result = build_datasets(traces, rc.device_specs(), envs, rc.n_exp, rc.seed, rc.sim)
    out = args.out or rc.out or "."
    os.makedirs(out, exist_ok=True)
    write_dataset(result.wer, os.path.join(out, "wer.csv"))
    write_dataset(result.p_ue, os.path.join(out, "p_ue.csv"))
    result.system.write_csv(os.path.join(out, "system_p_ue.csv"))
    print(f"{out}: {len(result.wer)} rows per target ({len(traces)} workloads x "
          f"{len(rc.devices)} devices x {len(envs)} operating points)")
    return 0


def cmd_correlate(args, rc: RunConfig) -> int:
    ds = read_dataset(args.dataset)
    lines = ["feature,r_s,abs_r_s"] + [f"{n},{r:.6g},{abs(r):.6g}" for n, r in rank_features(ds)]
    _write_text("\n".join(lines) + "\n", args.out or rc.out)
    return 0


def _model_config(kind: str, args, rc: RunConfig) -> ModelConfig:
    return ModelConfig(
        kind=kind,
        k=args.k if args.k is not None else rc.k,
        n_trees=args.trees if args.trees is not None else rc.trees,
        seed=args.seed if args.seed is not None else rc.seed,
    )


def cmd_train(args, rc: RunConfig) -> int:
    ds = read_dataset(args.dataset)
    kind = args.model or rc.model
    fs = args.feature_set or rc.feature_set
    model = train(ds, fs, _model_config(kind, args, rc))
    out = args.out or rc.out or f"{kind}_set{fs}_{ds.target_kind}.doml"
    n = save_model(model, out)
    print(f"{out}: {kind} model on feature set {fs}, {len(ds)} samples, {n} bytes")
    return 0


def cmd_crossval(args, rc: RunConfig) -> int:
    ds = read_dataset(args.dataset)
    kinds = args.model or [rc.model]
    sets = args.feature_set or [rc.feature_set]
    out = args.out or rc.out or "crossval"
    reports = []
    for kind in kinds:
        for fs in sets:
            cfg = _model_config(kind, args, rc)
            if kind == "knn" and args.k is None:
                report, _ = knn_sweep(ds, fs, base=cfg)
            else:
                report = loo_by_workload(ds, cfg, fs, latency_queries=0)
            reports.append(report)
            write_report(report, out, stem=f"{kind}_set{fs}_{ds.target_kind}")
            print(report.summary())
    with open(os.path.join(out, "comparison.csv"), "w") as fh:
        fh.write(comparison_csv(reports))
    return 0


def cmd_predict(args, rc: RunConfig) -> int:
    model = load_model(args.model)
    if args.features:
        fvs = read_features(args.features)
    elif args.trace:
        t_refps = args.trefp or list(rc.t_refp)
        temps = args.temp or list(rc.temp)
        vdd = args.vdd if args.vdd is not None else rc.v_dd
        device = args.device or (model.devices[0] if model.devices else "")
        trace = read_trace(args.trace)
        fvs = [
            extract_features(trace, EnvPoint(t, vdd, c), device, rc.sim.clock_hz, rc.sim.stall_cycles,
                             rc.sim.words_per_row)
            for c in temps for t in t_refps
        ]
    else:
        raise UsageError("predict: give --features or --trace")
    preds = predict_many(model, fvs)
    rows = [["workload", "device", "temp", "t_refp", "v_dd", model.target_kind]]
    rows += [[fv.workload, fv.device, repr(fv.temp), repr(fv.t_refp), repr(fv.v_dd), repr(float(p))]
             for fv, p in zip(fvs, preds)]
    text = "".join(",".join(map(str, r)) + "\n" for r in rows)
    sys.stdout.write(text)
    if args.out or rc.out:
        _write_text(text, args.out or rc.out)
    return 0


COMMANDS = {
    "gen-trace": cmd_gen_trace,
    "build-dataset": cmd_build_dataset,
    "correlate": cmd_correlate,
    "train": cmd_train,
    "crossval": cmd_crossval,
    "predict": cmd_predict,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, (ConvergenceError, EvaluationError, FloatingPointError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, (OSError, TraceFormatError, DimmFormatError, ModelFormatError, DatasetError)):
        return EXIT_IO
    if isinstance(exc, (ValueError, SimulationError, FeatureError, ModelError, cfgio.ConfigError)):
        return EXIT_VALIDATION
    raise exc


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(parser.format_usage().strip())
        rc = load_run_config(args.config)
        return COMMANDS[args.command](args, rc)
    except Exception as exc:  # mapped to the documented exit codes
        code = exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
