"""Command-line entry point: ``overlap-witness {witness,simulate,surface,reproduce}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import estimation, geometry, interference, statemodel
from .config import ConfigError, RunConfig, load_config
from .geometry import OverlapTriple
from .reference import load_reference


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.exc = exc


def _json_dump(obj, path: Path | None = None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"
    if path is not None:
        path.write_text(text)
    return text


def _default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, OverlapTriple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _flatten(prefix, obj, rows):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], rows)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, obj))


def _emit(report: dict, fmt: str, out: Path | None, name: str) -> None:
    if fmt == "json":
        text = _json_dump(report)
    else:
        rows: list = []
        _flatten("", json.loads(_json_dump(report)), rows)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(rows)
        text = buf.getvalue()
    sys.stdout.write(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.{fmt}").write_text(text)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # surfaced with the failing stage named
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------------------
# witness
# ---------------------------------------------------------------------------

def witness_dict(t: OverlapTriple, sigma=None, n_starts: int = 16, samples: int = 10_000,
                 seed: int = 0, tol: float = geometry.BOUNDARY_TOL) -> dict:
    report = geometry.witness_report(t, n_starts=n_starts, seed=seed)
    doc = report.to_dict()
    doc["in_C"] = geometry.in_classical_polytope(t, tol)
    doc["in_Q"] = doc["physical"] = geometry.in_quantum_set(t, tol)
    doc["in_Qb"] = geometry.in_qubit_set(t, tol)
    if not doc["physical"]:
        doc["warning"] = "triple lies outside the quantum body Q (unphysical)"
    if sigma is not None:
        cov = np.diag(np.square(sigma))
        doc["sigma"] = list(map(float, sigma))
        doc["significance"] = {
            "w_c": geometry.witness_sigma(t, cov, "coherence", n_samples=samples, seed=seed),
            "w_d": geometry.witness_sigma(t, cov, "dimension", n_samples=samples, seed=seed)
            if report.w_d > 0 else 0.0,
        }
    return doc


def cmd_witness(args) -> int:
    try:
        t = OverlapTriple(*args.triple)
    except ValueError as exc:
        return _usage_error(f"invalid triple: {exc}")
    if args.sigma is not None and any(s < 0 for s in args.sigma):
        return _usage_error("uncertainties must be non-negative")
    doc = _stage("witness", witness_dict, t, args.sigma, args.starts, args.samples, args.seed or 0, args.tol)
    _emit(doc, args.format, args.out, "witness")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def recorded_model(dist: interference.OutputDistribution, survival: float) -> np.ndarray:
    """Exact distribution of recorded events after ANRD attrition."""
    keep = np.array([estimation.anrd_survival(p, survival) for p in dist.patterns])
    p = dist.probabilities * keep
    return p / p.sum()


def run_simulation(cfg: RunConfig, seed: int, out: Path | None, fmt: str = "csv") -> dict:
    exp = cfg.experiment
    triple = _stage("predict", statemodel.predict_triple, exp)
    gram = _stage("gram", interference.gram_from_triple, triple)
    net = _stage("network", interference.build_network)
    dist = _stage("distribution", interference.output_distribution, net, gram)
    raw = _stage("sample", estimation.sample_events, dist, exp.n_events, seed)
    recorded = _stage("losses", estimation.apply_losses, raw, exp.efficiency, seed)
    if cfg.anrd:
        recorded = _stage("anrd", estimation.apply_anrd, recorded, seed, exp.anrd_survival)
    est = _stage("estimate", estimation.estimate_overlaps, recorded, cfg.anrd, cfg.bootstrap, seed,
                 exp.anrd_survival)
    wit = _stage("witness", witness_dict, est.triple, None, cfg.projection_starts)
    with np.errstate(invalid="ignore"):
        sig_c = _stage("significance", geometry.witness_sigma, est.triple, est.covariance, "coherence",
                       seed=seed) if cfg.bootstrap > 1 else None
    wit["significance"] = {"w_c": sig_c}

    tvd_raw = estimation.tvd(raw.empirical(), dist)
    expected_recorded = recorded_model(dist, exp.anrd_survival) if cfg.anrd else dist.probabilities
    tvd_recorded = estimation.tvd(recorded.empirical().probabilities, expected_recorded)
    summary = {
        "seed": seed,
        "n_events": exp.n_events,
        "n_recorded": recorded.n,
        "predicted_overlaps": dict(zip(interference.PAIRS, triple)),
        "estimate": est.to_dict(),
        "tvd": {"sampled_vs_exact": tvd_raw, "recorded_vs_model": tvd_recorded},
        "witness": wit,
        "config": {
            "photons": {k: {"theta": p.theta, "delay": p.delay} for k, p in zip("ABC", (exp.a, exp.b, exp.c))},
            "calibration": exp.calibration.to_dict(),
            "efficiency": exp.efficiency,
            "anrd": cfg.anrd,
            "anrd_survival": exp.anrd_survival,
            "bootstrap": cfg.bootstrap,
        },
    }
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        dist.metadata = {"kind": "exact", "overlaps": list(triple)}
        empirical = raw.empirical()
        empirical.metadata = {"kind": "empirical", "n_events": exp.n_events, "seed": seed}
        if fmt == "json":
            dist.write_json(out / "distribution_exact.json")
            empirical.write_json(out / "distribution_empirical.json")
        else:
            dist.write_csv(out / "distribution_exact.csv")
            empirical.write_csv(out / "distribution_empirical.csv")
        raw.write_csv(out / "counts_sampled.csv")
        recorded.write_csv(out / "counts_recorded.csv")
        _json_dump(est.to_dict(), out / "estimate.json")
        _json_dump(wit, out / "witness.json")
        _json_dump(summary, out / "summary.json")
    return summary


def _load(path) -> RunConfig:
    try:
        return load_config(path)
    except (ConfigError, ValueError) as exc:
        raise StageError("config", exc) from exc


def cmd_simulate(args) -> int:
    cfg = _load(args.config)
    seed = args.seed if args.seed is not None else cfg.experiment.seed
    if args.starts is not None:
        cfg.projection_starts = args.starts
    summary = run_simulation(cfg, seed, args.out, args.format)
    sys.stdout.write(_json_dump(summary))
    return 0


# ---------------------------------------------------------------------------
# surface
# ---------------------------------------------------------------------------

def cmd_surface(args) -> int:
    cfg = _load(args.config)
    if args.kind == "wc":
        surf = _stage("surface", statemodel.wc_surface, *cfg.wc_grid, cfg.calibration, cfg.wc_signed)
    else:
        starts = args.starts if args.starts is not None else cfg.wd_starts
        surf = _stage("surface", statemodel.wd_surface, *cfg.wd_grid, cfg.calibration, starts,
                      args.seed or 0)
    x, y, vmax = surf.argmax()
    doc = {"kind": args.kind, "max": vmax, "argmax": {surf.x_name: x, surf.y_name: y}}
    if surf.failed is not None:
        doc["failed_cells"] = int(surf.failed.sum())
    if args.kind == "wd":
        positive = np.nan_to_num(surf.values) > geometry.PROJECTION_TOL["Qb"]
        doc["positive_cells"] = int(positive.sum())
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        csv_path, meta_path = surf.write(args.out / f"{args.kind}_surface")
        if args.format == "json":
            grid = {"x": surf.x_axis, "y": surf.y_axis, "values": np.where(np.isnan(surf.values), None, surf.values)}
            _json_dump(grid, args.out / f"{args.kind}_surface_grid.json")
        doc["files"] = [csv_path.name, meta_path.name]
    sys.stdout.write(_json_dump(doc))
    return 0


# ---------------------------------------------------------------------------
# reproduce
# ---------------------------------------------------------------------------

def _row(name, reference, computed, tol):
    return {"row": name, "reference": reference, "computed": computed, "tolerance": tol,
            "pass": bool(abs(computed - reference) <= tol)}


def reproduce_table(table: str, tol: float | None = None, seed: int = 0) -> list[dict]:
    ref = load_reference()
    rows = []
    if table == "t1":
        t1 = ref["t1"]
        tol = t1["tolerance"] if tol is None else tol
        for name, row in t1["rows"].items():
            w = geometry.coherence_witness(OverlapTriple(*row["overlaps"]))
            rows.append(_row(f"{name} W_c", row["w_c"], float(w), tol))
    elif table == "t2":
        t2 = ref["t2"]
        tol = t2["tolerance"] if tol is None else tol
        w = geometry.dimension_witness(OverlapTriple(*t2["overlaps"]), seed=seed)
        rows.append(_row("W_d", t2["w_d"], w, tol))
    elif table == "t3":
        tol = 1e-6 if tol is None else tol
        dx = np.linspace(-400.0, 400.0, 41)
        for pair, p in ref["t3"].items():
            fit = estimation.fit_dip(estimation.synthetic_dip(dx, 1000.0, p["v"], p["sigma"]))
            rows.append(_row(f"{pair} V (relative)", 0.0, fit.v / p["v"] - 1.0, tol))
            rows.append(_row(f"{pair} sigma (relative)", 0.0, fit.sigma / p["sigma"] - 1.0, tol))
            rows[-2]["reference"], rows[-1]["reference"] = p["v"], p["sigma"]
            rows[-2]["fitted"], rows[-1]["fitted"] = fit.v, fit.sigma
    else:
        raise ValueError(f"unknown table {table!r}")
    return rows


def cmd_reproduce(args) -> int:
    rows = _stage("reproduce", reproduce_table, args.table, args.tol, args.seed or 0)
    if args.format == "json":
        sys.stdout.write(_json_dump({"table": args.table, "rows": rows,
                                     "pass": all(r["pass"] for r in rows)}))
    else:
        print(f"{'row':<26}{'reference':>12}{'computed':>14}{'tol':>10}  result")
        for r in rows:
            print(f"{r['row']:<26}{r['reference']:>12.6g}{r['computed']:>14.6g}{r['tolerance']:>10.3g}  "
                  f"{'PASS' if r['pass'] else 'FAIL'}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        _json_dump({"table": args.table, "rows": rows}, args.out / f"reproduce_{args.table}.json")
    return 0


# ---------------------------------------------------------------------------

def _usage_error(message: str) -> int:
    sys.stderr.write(_json_dump({"error": message, "stage": "usage"}))
    return 2


def _common(fmt: str) -> argparse.ArgumentParser:
    # A fresh parent per subcommand: argparse shares parent actions, so
    # per-subcommand defaults would otherwise leak between subcommands.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory for artifacts")
    common.add_argument("--format", choices=("csv", "json"), default=fmt)
    common.add_argument("--tol", type=float, help="comparison / membership tolerance")
    common.add_argument("--starts", type=int, help="multistart count for Q/Qb projections")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="overlap-witness", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("witness", parents=[_common("json")], help="coherence/dimension witnesses of a triple")
    p.add_argument("triple", nargs=3, type=float, metavar=("R_AB", "R_BC", "R_AC"))
    p.add_argument("--sigma", nargs=3, type=float, metavar=("S_AB", "S_BC", "S_AC"),
                   help="1-sigma uncertainties (diagonal covariance)")
    p.add_argument("--samples", type=int, default=10_000, help="Monte Carlo resamples for significance")
    p.set_defaults(func=cmd_witness, starts=16)

    p = sub.add_parser("simulate", parents=[_common("csv")], help="end-to-end simulation of one preparation")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("surface", parents=[_common("csv")], help="witness surfaces over angles or delays")
    p.add_argument("kind", choices=("wc", "wd"))
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("reproduce", parents=[_common("csv")], help="compare against bundled reference values")
    p.add_argument("table", choices=("t1", "t2", "t3"))
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "tol", None) is None and args.command == "witness":
        args.tol = geometry.BOUNDARY_TOL
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", geometry.UnphysicalTripleWarning)
            return args.func(args)
    except StageError as exc:
        sys.stderr.write(_json_dump({"error": str(exc.exc), "stage": exc.stage,
                                     "type": type(exc.exc).__name__}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
