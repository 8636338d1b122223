"""Command-line front end: ``bnsobol analyze | oat | stats``.

Every flag can also come from an environment variable named ``BNSOBOL_``
plus the flag in upper case (``BNSOBOL_SIGMA2=0.01``); flags given on the
command line win.  Exit status is 2 for configuration errors and 1 for
failures inside the analysis.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bn import BayesianNetwork, NetworkError, network_metrics, parse_assignment
from .encode import DEFAULT_GRID_SIZE, augment_network, augmented_parameter_count, spec_from_json
from .montecarlo import mc_pick_freeze
from .networks import load_network
from .oat import parameter_table, rank_parameters, select_uncertainties, sensitivity_values_all
from .sobol import analyze, target_networks
from .tn import ContractionError
from .tt import DEFAULT_MEMORY_CAP

ENV_PREFIX = "BNSOBOL_"
ENV_FLAGS = (
    "input", "target", "evidence", "sigma2", "bins", "select", "output", "out", "mc-check", "seed", "mem-cap", "top",
)


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    bn: BayesianNetwork
    target: tuple[str, int]
    evidence: dict[str, int]
    sigma2: float
    bins: int
    select: str
    output: str
    out: str | None
    mc_check: int | None
    seed: int
    memory_cap: int
    top: int
    source: str = ""

    @property
    def target_text(self) -> str:
        var, state = self.target
        return f"{var}={self.bn.variable(var).states[state]}"


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", required=False, help="BIF file (optionally .gz) or bundled network name")
    common.add_argument("--target", help="VAR=STATE, or 'random' to draw one with --seed")
    common.add_argument("--evidence", default="", help="comma-separated VAR=STATE list")
    common.add_argument("--sigma2", type=float, default=0.02, help="prior variance of each uncertain entry")
    common.add_argument("--bins", type=int, default=DEFAULT_GRID_SIZE, help="grid points per uncertainty")
    common.add_argument("--select", default="auto", help="'auto' or a JSON file of uncertain entries")
    common.add_argument("--output", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="report path ('-' for stdout)")
    common.add_argument("--mc-check", type=int, dest="mc_check", help="also run a Monte Carlo check with N samples")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--mem-cap", type=int, dest="mem_cap", default=DEFAULT_MEMORY_CAP, help="max entries per intermediate tensor")
    common.add_argument("--top", type=int, default=20, help="rows in the printed table")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bnsobol", description="Sobol sensitivity analysis of Bayesian network parameters.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="variance components and total indices")
    sub.add_parser("oat", parents=[common], help="one-at-a-time sensitivity values of every parameter")
    sub.add_parser("stats", parents=[common], help="network size, augmentation size and timings")
    return parser


def _env_args(environ) -> list[str]:
    args = []
    for flag in ENV_FLAGS:
        value = environ.get(ENV_PREFIX + flag.replace("-", "_").upper())
        if value is not None and value != "":
            args += [f"--{flag}", value]
    return args


def _config(args: argparse.Namespace) -> RunConfig:
    if not args.input:
        raise ConfigError("--input is required")
    if not args.target:
        raise ConfigError("--target is required")
    if not args.sigma2 > 0:
        raise ConfigError("--sigma2 must be positive")
    if args.bins < 2:
        raise ConfigError("--bins must be at least 2")
    if args.mc_check is not None and args.mc_check < 1000:
        raise ConfigError("--mc-check needs at least 1000 samples")
    if args.mem_cap < 1:
        raise ConfigError("--mem-cap must be positive")
    if args.select != "auto" and not Path(args.select).is_file():
        raise ConfigError(f"--select file {args.select!r} not found")
    try:
        bn = load_network(args.input)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc

    try:
        if args.target == "random":
            rng = np.random.default_rng(args.seed)
            var = bn.names[int(rng.integers(len(bn.names)))]
            target = (var, int(rng.integers(bn.cardinality(var))))
        else:
            var, state = parse_assignment(args.target)
            target = (var, bn.variable(var).index(state))
        evidence = {}
        for item in filter(None, (s.strip() for s in args.evidence.split(","))):
            name, state = parse_assignment(item)
            evidence[name] = bn.variable(name).index(state)
    except (NetworkError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        bn, target, evidence, args.sigma2, args.bins, args.select, args.output, args.out,
        args.mc_check, args.seed, args.mem_cap, args.top, args.input,
    )  # fmt: skip


def _specs(cfg: RunConfig, values):
    if cfg.select == "auto":
        return select_uncertainties(
            cfg.bn, cfg.target, cfg.sigma2, cfg.bins, cfg.evidence, values=values, memory_cap=cfg.memory_cap
        )
    try:
        data = json.loads(Path(cfg.select).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read --select file: {exc}") from exc
    if not isinstance(data, list):
        raise ConfigError("--select file must hold a JSON list")
    try:
        return [spec_from_json({"sigma2": cfg.sigma2, **item}, cfg.bn, cfg.bins) for item in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad entry in --select file: {exc}") from exc


def _emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _echo(text: str, cfg: RunConfig) -> None:
    # keep stdout clean when the report itself goes there
    print(text, file=sys.stderr if cfg.out == "-" else sys.stdout)


def _plot_path(out: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + ".plot.csv")


def cmd_analyze(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    values = sensitivity_values_all(cfg.bn, cfg.target, cfg.evidence, memory_cap=cfg.memory_cap)
    specs = _specs(cfg, values)
    if not specs:
        raise NetworkError("no CPT entry qualifies as uncertain for this target")
    t1 = time.perf_counter()
    report = analyze(
        cfg.bn, cfg.target, specs, cfg.evidence, sigma2=cfg.sigma2, sensitivity=values, memory_cap=cfg.memory_cap
    )
    t2 = time.perf_counter()
    mc = None
    if cfg.mc_check:
        mc = _mc_check(cfg, specs, report)
    t3 = time.perf_counter()
    report.timing = {"t_select": t1 - t0, "t_sobol": t2 - t1, "t_mc": t3 - t2, "t_total": t3 - t0}

    payload = report.as_dict(include_timing=False)
    if mc is not None:
        payload["mc_check"] = mc
    payload["timing"] = report.timing
    text = json.dumps(payload, indent=2) + "\n" if cfg.output == "json" else report.to_csv()
    if cfg.out is not None:
        _emit(text, cfg.out)
        if cfg.out != "-":
            _plot_path(cfg.out).write_text(report.plot_csv())

    _echo(f"target {report.target}" + (f" given {report.evidence}" if report.evidence else ""), cfg)
    _echo(f"mean {report.mean:.6f}  variance {report.variance:.6g}  uncertainties {len(specs)}  grid {cfg.bins}", cfg)
    if not report.defined:
        _echo("target variance is zero: Sobol indices are undefined", cfg)
    _echo(report.table(cfg.top), cfg)
    if mc is not None:
        _echo(
            f"Monte Carlo check (N={cfg.mc_check}): max |z| first-order {mc['max_abs_z_first']:.2f}, "
            f"total {mc['max_abs_z_total']:.2f}",
            cfg,
        )
    _echo(f"time: selection {t1 - t0:.3f}s  sobol {t2 - t1:.3f}s  total {t3 - t0:.3f}s", cfg)
    return 0


def _mc_check(cfg: RunConfig, specs, report) -> dict:
    est = mc_pick_freeze(cfg.bn, cfg.target, specs, cfg.mc_check, cfg.seed, cfg.evidence, memory_cap=cfg.memory_cap)
    pos = {s.param: i for i, s in enumerate(specs)}
    rows = []
    zf, zt = [], []
    for rec in report.records:
        i = pos[rec.param]
        row = {
            "label": rec.label,
            "variance_component": float(est.first[i]),
            "variance_component_se": float(est.first_se[i]),
            "total_index": float(est.total[i]),
            "total_index_se": float(est.total_se[i]),
        }
        if report.defined and est.defined:
            zf.append(abs(est.first[i] - rec.variance_component) / est.first_se[i])
            zt.append(abs(est.total[i] - rec.total_index) / est.total_se[i])
        rows.append(row)
    nan = float("nan")
    return {
        "n_samples": cfg.mc_check,
        "seed": cfg.seed,
        "mean": est.mean,
        "variance": est.variance,
        "max_abs_z_first": float(max(zf)) if zf else nan,
        "max_abs_z_total": float(max(zt)) if zt else nan,
        "records": rows,
    }


def cmd_oat(cfg: RunConfig) -> int:
    values = sensitivity_values_all(cfg.bn, cfg.target, cfg.evidence, memory_cap=cfg.memory_cap)
    ranked = dict(rank_parameters(values))
    rows = parameter_table(cfg.bn, ranked)
    if cfg.out is not None:
        if cfg.output == "json":
            text = json.dumps({"target": cfg.target_text, "evidence": _evidence_text(cfg), "parameters": rows}, indent=2) + "\n"
        else:
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(("rank", "parameter", "variable", "child_state", "parent_states", "original", "sensitivity_value"))
            for rank, r in enumerate(rows, 1):
                parents = ";".join(f"{k}={v}" for k, v in r["parent_states"].items())
                sv = "" if r["sensitivity_value"] is None else repr(r["sensitivity_value"])
                writer.writerow((rank, r["parameter"], r["variable"], r["child_state"], parents, repr(r["original"]), sv))
            text = buf.getvalue()
        _emit(text, cfg.out)
    nonzero = sum(1 for r in rows if r["sensitivity_value"])
    _echo(f"target {cfg.target_text}: {len(rows)} parameters, {nonzero} with nonzero sensitivity value", cfg)
    width = max([9] + [len(r["parameter"]) for r in rows[: cfg.top]])
    _echo(f"{'CPT entry':<{width}}  {'Original value':>14}  {'Sensitivity value':>17}", cfg)
    for r in rows[: cfg.top]:
        sv = "n/a" if r["sensitivity_value"] is None else f"{r['sensitivity_value']:.6f}"
        _echo(f"{r['parameter']:<{width}}  {r['original']:14.6f}  {sv:>17}", cfg)
    return 0


def _evidence_text(cfg: RunConfig) -> dict:
    return {k: cfg.bn.variable(k).states[v] for k, v in cfg.evidence.items()}


def cmd_stats(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    metrics = network_metrics(cfg.bn).as_dict()
    values = sensitivity_values_all(cfg.bn, cfg.target, cfg.evidence, memory_cap=cfg.memory_cap)
    specs = _specs(cfg, values)
    if not specs:
        raise NetworkError("no CPT entry qualifies as uncertain for this target")
    t1 = time.perf_counter()
    networks = target_networks(cfg.bn, specs, cfg.target, cfg.evidence)
    t2 = time.perf_counter()
    analyze(
        cfg.bn, cfg.target, specs, cfg.evidence, sigma2=cfg.sigma2, sensitivity=values,
        memory_cap=cfg.memory_cap, networks=networks,
    )  # fmt: skip
    t3 = time.perf_counter()
    stats = {
        "network": cfg.bn.name if cfg.bn.name not in ("", "unknown") else Path(cfg.source).name.split(".")[0],
        "target": cfg.target_text,
        **metrics,
        "n_uncertainties": len(specs),
        "n_augmented_parameters": augmented_parameter_count(augment_network(cfg.bn, specs)),
    }
    timing = {"t_encoding": t2 - t1, "t_sobol": t3 - t2, "t_total": t3 - t0}
    if cfg.out is not None:
        if cfg.output == "json":
            text = json.dumps({**stats, "timing": timing}, indent=2) + "\n"
        else:
            keys = list(stats) + list(timing)
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(keys)
            writer.writerow([{**stats, **timing}[k] for k in keys])
            text = buf.getvalue()
        _emit(text, cfg.out)
    for k, v in {**stats, **timing}.items():
        _echo(f"{k:<24} {v:.4f}" if k.startswith("t_") else f"{k:<24} {v}", cfg)
    return 0


COMMANDS = {"analyze": cmd_analyze, "oat": cmd_oat, "stats": cmd_stats}


def main(argv: list[str] | None = None, environ=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    environ = os.environ if environ is None else environ
    parser = _parser()
    if argv and argv[0] in COMMANDS:
        argv = argv[:1] + _env_args(environ) + argv[1:]
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"bnsobol: error: {exc}", file=sys.stderr)
        return 2
    except (NetworkError, ContractionError, MemoryError, ValueError, ZeroDivisionError) as exc:
        print(f"bnsobol: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
