"""Command line entry point.

    pstomo forward     --preset fig1c --out out/
    pstomo simulate    --preset fig1b --seed 7 --out out/
    pstomo reconstruct --preset fig1b --out out/ [--counts out/counts.jsonl]
    pstomo bootstrap   --preset fig1b --out out/ --resamples 200
    pstomo fit-gamma   --crossover 15ns --phi-c 9.6e5 --phi-s 1.9e5

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from .reconstruct import bootstrap_counts, fit_counts, records_to_arrays
from .simulate import group_by_bin, read_counts, simulate_tau_series, simulate_tomography, write_counts
from .source import (
    SourceParams,
    cs_inequality_check,
    correlation_tensor,
    fit_gamma,
    pair_rate_components,
    two_photon_dm,
    window_average_dm,
)
from .state import LABELS, concurrence, max_noon_fidelity, negativity

log = logging.getLogger("pstomo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

DM_COLUMNS = ["tau_s"] + [
    f"{part}_{r}_{c}" for r in LABELS for c in LABELS for part in ("re", "im")
] + ["concurrence", "negativity", "cs_violated_a", "cs_violated_b", "sv_rate", "cs_rate"]
SURFACE_COLUMNS = ["phi_c", "phi_s", "concurrence"]
SUMMARY_COLUMNS = ["bin", "tau_lo_s", "tau_hi_s", "tau_center_s", "concurrence",
                   "sigma", "bootstrap_mean", "noon_fidelity", "converged"]


class NumericalFailure(RuntimeError):
    pass


def _write_csv(path: Path, header: dict, columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={header['config_hash']} seed={header['seed']}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _write_json(path: Path, header: dict, payload: dict) -> None:
    path.write_text(json.dumps({"header": header, **payload}, indent=2, sort_keys=True) + "\n")


def _dm_row(params: SourceParams, tau: float) -> list:
    rho = two_photon_dm(params, tau)
    cs = cs_inequality_check(correlation_tensor(params, tau))
    sv, cs_rate = pair_rate_components(params, tau)
    entries = []
    for v in rho.matrix.ravel():
        entries += [float(v.real), float(v.imag)]
    return [float(tau)] + entries + [concurrence(rho), negativity(rho), cs.violated_a,
                                     cs.violated_b, float(sv), float(cs_rate)]


def surface_rows(params: SourceParams, phi_c, phi_s, window) -> list:
    rows = []
    for pc in phi_c:
        for ps in phi_s:
            if pc == 0 and ps == 0:
                rows.append([pc, ps, 0.0])
                continue
            p = params.replace(phi_c=pc, phi_s=ps)
            rho = window_average_dm(p, *window) if window[1] > window[0] else two_photon_dm(p, window[0])
            rows.append([float(pc), float(ps), concurrence(rho)])
    return rows


def cmd_forward(run: cfg.RunConfig) -> int:
    out = run.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = [_dm_row(run.source, t) for t in run.tau_grid]
    _write_csv(out / "dm_vs_tau.csv", run.header(), DM_COLUMNS, rows)
    grid = run.scan if run.scan.kind == "flux_grid" else run.surface
    if grid is not None:
        srows = surface_rows(run.source, grid.phi_c, grid.phi_s, grid.window)
        _write_csv(out / "concurrence_surface.csv", run.header(), SURFACE_COLUMNS, srows)
    if run.scan.kind in ("tau_series", "single"):
        brows = []
        for k, (lo, hi) in enumerate(run.scan.bins()):
            rho = window_average_dm(run.source, lo, hi)
            brows.append([k, lo, hi, 0.5 * (lo + hi), concurrence(rho), negativity(rho)])
        _write_csv(out / "bins_theory.csv", run.header(),
                   ["bin", "tau_lo_s", "tau_hi_s", "tau_center_s", "concurrence", "negativity"], brows)
    log.info("forward results written to %s", out)
    return EXIT_OK


def cmd_simulate(run: cfg.RunConfig) -> int:
    out = run.output_dir
    out.mkdir(parents=True, exist_ok=True)
    if run.scan.kind == "tau_series":
        groups = simulate_tau_series(run.source, run.calib, run.duration_s,
                                     list(run.scan.centers), run.scan.half_width, run.seed)
    elif run.scan.kind == "single":
        groups = [simulate_tomography(run.source, run.calib, run.duration_s, run.scan.window, run.seed)]
    else:
        raise cfg.ConfigError("simulate needs a tau_series or single scan")
    records = [r for g in groups for r in g]
    write_counts(out / "counts.jsonl", records, run.header())
    log.info("wrote %d count records to %s", len(records), out / "counts.jsonl")
    return EXIT_OK


def _reconstruct(run: cfg.RunConfig, counts_path: Path, keep_ensemble: bool) -> int:
    out = run.output_dir
    out.mkdir(parents=True, exist_ok=True)
    records = read_counts(counts_path)
    if not records:
        raise cfg.ConfigError(f"{counts_path} holds no count records")
    summary = []
    all_converged = True
    for k, recs in group_by_bin(records).items():
        try:
            counts, live = records_to_arrays(recs, run.calib)
        except ValueError as exc:
            raise cfg.ConfigError(f"bin {k}: {exc}") from exc
        try:
            fit = fit_counts(counts, live, run.calib, seed=run.seed)
            boot = bootstrap_counts(counts, live, run.calib, run.resamples, seed=run.seed + k,
                                    init=fit.p_hat)
        except ValueError as exc:
            raise NumericalFailure(f"bin {k}: {exc}") from exc
        all_converged &= fit.converged
        c_hat = concurrence(fit.rho_hat)
        noon, theta, phi = max_noon_fidelity(fit.rho_hat)
        lo, hi = recs[0].tau_bin if recs[0].tau_bin is not None else (float("nan"),) * 2
        payload = {
            "bin": k,
            "tau_bin_s": [lo, hi],
            "fit": fit.to_dict(),
            "concurrence": c_hat,
            "concurrence_sigma": boot.concurrence_sigma,
            "bootstrap": boot.to_dict(),
            "noon": {"fidelity": noon, "theta": theta, "phi": phi},
        }
        _write_json(out / f"rho_bin{k}.json", run.header(), payload)
        if keep_ensemble:
            np.savez_compressed(out / f"dm_ensemble_bin{k}.npz", dm=boot.dm_ensemble,
                                concurrence=boot.concurrences)
        summary.append([k, lo, hi, 0.5 * (lo + hi), c_hat, boot.concurrence_sigma,
                        boot.concurrence_mean, noon, fit.converged])
        log.info("bin %d: C = %.3f +- %.3f", k, c_hat, boot.concurrence_sigma)
    _write_csv(out / "summary.csv", run.header(), SUMMARY_COLUMNS, summary)
    if not all_converged:
        log.error("at least one fit did not converge")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_fit_gamma(crossover_tau: float, phi_c: float, phi_s: float, out: Path | None) -> int:
    try:
        g = fit_gamma(crossover_tau, phi_c, phi_s)
    except ValueError as exc:
        raise NumericalFailure(str(exc)) from exc
    params = SourceParams(phi_c, phi_s, g)
    sv, cs = pair_rate_components(params, crossover_tau)
    result = {"gamma": g, "crossover_tau_s": crossover_tau, "phi_c": phi_c, "phi_s": phi_s,
              "epsilon": params.epsilon, "relative_residual": float(sv / cs - 1.0)}
    print(json.dumps(result, indent=2))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "fit_gamma.json").write_text(json.dumps(result, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pstomo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("forward", "simulate", "reconstruct", "bootstrap"):
        p = sub.add_parser(verb)
        p.add_argument("--config", type=Path)
        p.add_argument("--preset", choices=cfg.PRESETS)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path)
        p.add_argument("--resamples", type=int)
        if verb in ("reconstruct", "bootstrap"):
            p.add_argument("--counts", type=Path, help="counts file (default OUT/counts.jsonl)")
    p = sub.add_parser("fit-gamma")
    p.add_argument("--config", type=Path)
    p.add_argument("--preset", choices=cfg.PRESETS)
    p.add_argument("--crossover", default="15ns", help="crossover delay, e.g. 15ns")
    p.add_argument("--phi-c", type=float)
    p.add_argument("--phi-s", type=float)
    p.add_argument("--out", type=Path)
    return parser


def _resolve(args) -> cfg.RunConfig:
    data: dict = {}
    base_dir = Path(".")
    if args.preset:
        data = cfg.preset(args.preset)
    if args.config:
        data.update(cfg.load_config(args.config))
        base_dir = args.config.parent
    if not data:
        raise cfg.ConfigError("give --config or --preset")
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        data["output_dir"] = str(args.out)
    if getattr(args, "resamples", None) is not None:
        data["resamples"] = args.resamples
    return cfg.parse_config(data, base_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "fit-gamma":
            phi_c, phi_s = args.phi_c, args.phi_s
            if args.preset or args.config:
                src = (cfg.preset(args.preset) if args.preset else cfg.load_config(args.config))["source"]
                phi_c = src["phi_c"] if phi_c is None else phi_c
                phi_s = src["phi_s"] if phi_s is None else phi_s
            phi_c = cfg.PAPER_PHI_C if phi_c is None else phi_c
            phi_s = cfg.PAPER_PHI_S if phi_s is None else phi_s
            return cmd_fit_gamma(cfg.parse_time(args.crossover), float(phi_c), float(phi_s), args.out)
        run = _resolve(args)
        if args.verb == "forward":
            return cmd_forward(run)
        if args.verb == "simulate":
            return cmd_simulate(run)
        counts = args.counts or run.output_dir / "counts.jsonl"
        return _reconstruct(run, counts, keep_ensemble=args.verb == "bootstrap")
    except cfg.ConfigError as exc:
        log.error("configuration error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
