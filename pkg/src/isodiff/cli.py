"""Command line entry point: ``isodiff <subcommand> ...``.

Results go to files under ``--out`` (short summaries to stdout); logging and
errors go to stderr. Every subcommand writes ``manifest.json`` next to its
outputs; ``isodiff rerun manifest.json`` repeats the run from it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import pandas as pd

from . import __version__
from .analysis import de_probabilities, ma_plot_data, density_grid, posterior_predictive
from .baselines import BASELINE_COLUMNS, mean_normalize, protein_ttest
from .config import (
    ConfigError,
    chain_overrides,
    design_from_config,
    hyper_overrides,
    read_config,
    reference_groups,
    write_config,
)
from .data import (
    DataFormatError,
    Dataset,
    DesignInfo,
    ValidationError,
    infer_design,
    load_dataset,
    read_observations,
    save_dataset,
    validate,
)
from .diagnostics import InsufficientSamplesError, diagnostics
from .gibbs import ChainConfig, run_chains
from .model import Hyperparameters
from .simulate import SimulationSpec, paper_scenario_spec, simulate_dataset, spike_in_scenario_spec
from .traces import TraceFormatError, load_traces, save_traces

log = logging.getLogger("isodiff")


class CLIError(Exception):
    pass


def _write_manifest(out: Path, command: str, argv: list, resolved: dict, paths: dict, started: float) -> None:
    manifest = {
        "subcommand": command,
        "argv": argv,
        "tool_version": __version__,
        "resolved": resolved,
        "paths": {k: str(v) if v is not None else None for k, v in paths.items()},
        "wall_time_seconds": round(time.perf_counter() - started, 3),
    }
    text = json.dumps(manifest, indent=2, sort_keys=True, default=str)
    (out / "manifest.json").write_text(text + "\n", encoding="utf-8")


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CLIError(f"cannot create output directory {out}: {exc}") from None
    return out


def _write_table(df: pd.DataFrame, path: Path) -> None:
    try:
        df.to_csv(path, index=False, lineterminator="\n")
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc}") from None


def _config(path) -> dict:
    if path is None:
        return {}
    try:
        return read_config(path)
    except FileNotFoundError:
        raise CLIError(f"config file not found: {path}") from None


def _dataset(data_path, cfg: dict, design: DesignInfo | None = None, log_transform=False, require_complete=False):
    design = design or design_from_config(cfg)
    ref = None if design is not None else reference_groups(cfg)
    return load_dataset(data_path, design, reference_group=ref, log_transform=log_transform,
                        require_complete=require_complete)


# -- simulate ---------------------------------------------------------------

def run_simulate(spec: SimulationSpec, out: Path) -> dict:
    ds, truth = simulate_dataset(spec)
    save_dataset(ds, out / "data.csv")
    pd.DataFrame(truth.rows(), columns=["parameter", "indices", "value"]).to_csv(
        out / "truth.csv", index=False, lineterminator="\n"
    )
    cfg = spec.to_config()
    cfg["m"] = list(ds.design.spectra_per_protein)
    write_config(cfg, out / "config.cfg", comment="simulation settings and realised design")
    return {"observations": len(ds), "de_counts": truth.de_counts}


def cmd_simulate(args) -> dict:
    cfg = _config(args.config)
    base = spike_in_scenario_spec() if args.scenario == "spike-in" else paper_scenario_spec()
    spec = SimulationSpec.from_config(cfg, base)
    if args.seed is not None:
        spec = SimulationSpec(**{**asdict(spec), "seed": args.seed,
                                 "fixed_effects": dict(spec.fixed_effects), "fixed_spectra": dict(spec.fixed_spectra)})
    out = _outdir(args.out)
    info = run_simulate(spec, out)
    print(f"simulated {info['observations']} observations; DE per treatment group: {info['de_counts']}")
    resolved = spec.to_config()
    return {"resolved": {"spec": resolved}, "paths": {"out": out}}


# -- fit --------------------------------------------------------------------

def run_fit(dataset: Dataset, hyper: Hyperparameters, chain: ChainConfig, out: Path, trace_format: str, workers: int):
    output = run_chains(dataset, hyper, chain, workers=workers)
    trace_path = out / f"traces.{trace_format}"
    save_traces(output, trace_path)
    return output, trace_path


def cmd_fit(args) -> dict:
    cfg = _config(args.config)
    ds = _dataset(args.data, cfg, log_transform=args.log_transform, require_complete=args.require_complete)
    try:
        hyper = Hyperparameters(**hyper_overrides(cfg))
        chain_kw = chain_overrides(cfg)
        for flag, key in (("burnin", "burn_in"), ("keep", "keep"), ("thin", "thin"), ("chains", "num_chains"),
                          ("seed", "seed"), ("init", "init_strategy")):
            if getattr(args, flag) is not None:
                chain_kw[key] = getattr(args, flag)
        chain = ChainConfig(**chain_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    out = _outdir(args.out)
    output, trace_path = run_fit(ds, hyper, chain, out, args.trace_format, args.threads)
    print(f"stored {len(output)} states from {chain.num_chains} chains; mean sigma {output.sigma.mean():.4f}")
    resolved = {
        "design": ds.design.to_dict(),
        "hyperparameters": hyper.to_dict(),
        "chain": chain.to_dict(),
        "log_transform": args.log_transform,
        "require_complete": args.require_complete,
        "trace_format": args.trace_format,
        "chain_wall_time": {str(k): round(v, 3) for k, v in output.wall_time.items()},
    }
    return {"resolved": resolved, "paths": {"data": args.data, "config": args.config, "traces": trace_path}}


# -- summarize ----------------------------------------------------------------

def _load_traces(path):
    try:
        return load_traces(path)
    except FileNotFoundError:
        raise CLIError(f"trace file not found: {path}") from None


def cmd_summarize(args) -> dict:
    output = _load_traces(args.traces)
    out = _outdir(args.out)
    table = de_probabilities(output, threshold=args.threshold)
    _write_table(table, out / "de_results.csv")
    notes = []
    try:
        report = diagnostics(output, max_lag=args.max_lag)
        _write_table(report.table, out / "diagnostics.csv")
        _write_table(report.chain_summaries, out / "chain_summaries.csv")
        notes += report.notes
    except InsufficientSamplesError as exc:
        notes.append(f"diagnostics skipped: {exc}")
    for note in notes:
        log.warning(note)
    called = table.groupby("group")["classified"].sum()
    for g, count in called.items():
        print(f"group {g}: {int(count)} proteins with P(DE) > {args.threshold}")
    print(f"posterior mean sigma: {output.sigma.mean():.4f}")
    return {"resolved": {"threshold": args.threshold, "max_lag": args.max_lag, "notes": notes},
            "paths": {"traces": args.traces}}


# -- ppc --------------------------------------------------------------------

def _parse_coords(text: str | None):
    if not text:
        return None
    try:
        return [tuple(int(v) for v in item.split(",")) for item in text.split(";") if item.strip()]
    except ValueError:
        raise CLIError(f"bad --coords value {text!r}; expected e,g,i,j,k;...") from None


def cmd_ppc(args) -> dict:
    output = _load_traces(args.traces)
    cfg = _config(args.config)
    ds = _dataset(args.data, cfg, design=output.design if not cfg else None,
                  log_transform=args.log_transform, require_complete=args.require_complete)
    coords = _parse_coords(args.coords)
    try:
        table = posterior_predictive(output, ds, coords, rng=args.seed)
    except KeyError as exc:
        raise CLIError(f"unknown coordinate: {exc.args[0]}") from None
    out = _outdir(args.out)
    _write_table(table, out / "ppc.csv")
    if args.grid:
        if coords is None:
            raise CLIError("--grid needs --coords (densities are written per selected observation)")
        _write_table(density_grid(output, ds, coords, args.grid), out / "density.csv")
    print(f"95% predictive coverage: {table['covered'].mean():.4f} over {len(table)} observations")
    return {"resolved": {"seed": args.seed, "coords": args.coords, "grid": args.grid},
            "paths": {"traces": args.traces, "data": args.data, "config": args.config}}


# -- baseline ---------------------------------------------------------------

def cmd_baseline(args) -> dict:
    cfg = _config(args.config)
    ds = _dataset(args.data, cfg, log_transform=args.log_transform, require_complete=args.require_complete)
    try:
        normalized = mean_normalize(ds)
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    table = protein_ttest(normalized, args.group_a, args.group_b, level=args.level)
    out = _outdir(args.out)
    _write_table(table[BASELINE_COLUMNS], out / "baseline.csv")
    print(f"{int(table['significant'].sum())} proteins significant at q <= {args.level}")
    return {"resolved": {"group_a": args.group_a, "group_b": args.group_b, "level": args.level},
            "paths": {"data": args.data, "config": args.config}}


# -- validate / ma ------------------------------------------------------------

def cmd_validate(args) -> dict:
    cfg = _config(args.config)
    design = design_from_config(cfg)
    rows, lines = read_observations(args.data, log_transform=args.log_transform)
    if design is None:
        design = infer_design(rows, reference_groups(cfg))
    report = validate(Dataset.from_observations(design, rows))
    if report.ok:
        print(f"ok: {len(rows)} observations")
        return {}
    for v in report.violations:
        where = f"line {lines[v.row]}: " if v.row is not None else ""
        print(f"{where}{v.kind}: {v.message}", file=sys.stderr)
    raise SystemExit(1)


def cmd_ma(args) -> dict:
    cfg = _config(args.config)
    ds = _dataset(args.data, cfg, log_transform=args.log_transform, require_complete=args.require_complete)
    a = tuple(int(v) for v in args.sample_a.split(","))
    b = tuple(int(v) for v in args.sample_b.split(","))
    try:
        table = ma_plot_data(ds, a, b)
    except (KeyError, ValueError) as exc:
        raise CLIError(f"MA data: {exc}") from None
    out = _outdir(args.out)
    _write_table(table, out / "ma.csv")
    return {"resolved": {"sample_a": a, "sample_b": b}, "paths": {"data": args.data, "config": args.config}}


def cmd_rerun(args) -> dict:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    argv = manifest.get("argv")
    if not argv:
        raise CLIError("manifest has no recorded command line")
    if args.out is not None:
        argv = list(argv)
        if "--out" not in argv:
            raise CLIError("recorded command has no --out to replace")
        argv[argv.index("--out") + 1] = args.out
    return main(argv, _return_result=True)


# -- parser -----------------------------------------------------------------

def _common(p: argparse.ArgumentParser, data_flags=True):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--out", required=True, help="output directory")
    if data_flags:
        p.add_argument("--log-transform", action="store_true", help="take natural logs of raw intensities on ingest")
        p.add_argument("--require-complete", action="store_true",
                       help="drop spectra missing any reporter ion within an experiment")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isodiff", description="Bayesian differential expression for isobaric MS/MS data")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a dataset with ground truth")
    _common(p, data_flags=False)
    p.add_argument("--seed", type=int)
    p.add_argument("--scenario", choices=["paper", "spike-in"], default="paper")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler")
    p.add_argument("data")
    _common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1, help="chains run concurrently (worker processes)")
    p.add_argument("--burnin", type=int)
    p.add_argument("--keep", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--init", choices=["neutral", "data-driven", "random"])
    p.add_argument("--trace-format", choices=["npz", "csv"], default="npz")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="DE probabilities, effect summaries and diagnostics")
    p.add_argument("traces")
    _common(p, data_flags=False)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--max-lag", type=int, default=20)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("ppc", help="posterior predictive intervals and coverage")
    p.add_argument("traces")
    p.add_argument("data")
    _common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coords", help="observations as e,g,i,j,k;e,g,i,j,k (default: all)")
    p.add_argument("--grid", type=int, default=0, help="also write density.csv with this many grid points per coordinate")
    p.set_defaults(func=cmd_ppc)

    p = sub.add_parser("baseline", help="mean normalisation + Welch t-test + BH")
    p.add_argument("data")
    _common(p)
    p.add_argument("--group-a", type=int, default=2)
    p.add_argument("--group-b", type=int, default=1)
    p.add_argument("--level", type=float, default=0.05)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("validate", help="check a data file against its design")
    p.add_argument("data")
    p.add_argument("--config")
    p.add_argument("--log-transform", action="store_true")
    p.set_defaults(func=cmd_validate, out=None)

    p = sub.add_parser("ma", help="MA-plot table for two samples")
    p.add_argument("data")
    _common(p)
    p.add_argument("--sample-a", required=True, help="e,g,i")
    p.add_argument("--sample-b", required=True, help="e,g,i")
    p.set_defaults(func=cmd_ma)

    p = sub.add_parser("rerun", help="repeat a run recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None, _return_result=False):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    started = time.perf_counter()
    try:
        result = args.func(args)
    except (CLIError, ConfigError, DataFormatError, ValidationError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if _return_result:
            raise
        return 2
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if _return_result:
            raise
        return 2
    if args.command not in ("validate", "rerun") and result is not None:
        _write_manifest(Path(args.out), args.command, argv, result.get("resolved", {}), result.get("paths", {}), started)
    if _return_result:
        return result
    return 0


if __name__ == "__main__":
    sys.exit(main())
