"""Command-line interface: dataset generation, disaggregation runs, and
evaluation exports.

Every command is a thin shell over a library function (cmd_generate,
cmd_run, cmd_eval) so scripted and programmatic use behave identically.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .config import RunConfig, format_config, parse_config
from .errors import ConfigError, DataError, NumericError
from .grid import read_grid, write_grid
from .pipeline import (
    METRIC_COLUMNS,
    SeasonResult,
    SrrmParams,
    _srrm_base,
    iteration_error_trace,
    run_season,
)
from .synth import (
    CLASS_NAMES,
    SeasonDataset,
    default_calendar,
    nearest_scene_day,
    season_days,
    write_season,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_metrics_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c, "nan")) for c in METRIC_COLUMNS) + "\n")


def _load_config(path: str | None, seed: int | None = None, jobs: int | None = None) -> RunConfig:
    cfg = parse_config(path) if path else RunConfig()
    if seed is not None:
        cfg.run.seed = seed
    if jobs is not None:
        cfg.run.jobs = jobs
    return cfg


def _resolve_days(dayspec: str | None, available: list[int]) -> list[int] | None:
    """Map a comma-separated day list onto the nearest dataset days."""
    if dayspec is None:
        return None
    step = available[1] - available[0] if len(available) > 1 else 3
    out = []
    for part in dayspec.split(","):
        want = int(part.strip())
        have = min(available, key=lambda d: (abs(d - want), -d))
        if have != want:
            logger.info("day %d not in dataset; using nearest scene day %d", want, have)
        out.append(have)
    return sorted(set(out))


def cmd_generate(out_dir, config_path=None, seed=None, dayspec=None) -> Path:
    """Generate a synthetic season dataset under out_dir."""
    cfg = _load_config(config_path, seed=seed)
    days = None
    if dayspec is not None:
        grid_days = season_days(cfg.synth.day_step)
        days = sorted({nearest_scene_day(int(p), cfg.synth.day_step) for p in dayspec.split(",")})
        days = [d for d in days if d in grid_days]
    return write_season(
        cfg.scene_spec(),
        default_calendar(),
        cfg.run.seed,
        out_dir,
        days=days if days else (season_days(cfg.synth.day_step) if dayspec is None else days),
    )


def cmd_run(dataset_dir, out_dir, method="both", config_path=None, seed=None,
            dayspec=None, jobs=None) -> SeasonResult:
    """Disaggregate a dataset; writes per-day grids and metrics.csv."""
    cfg = _load_config(config_path, seed=seed, jobs=jobs)
    dataset = SeasonDataset(dataset_dir)
    methods = ("srrm", "pri") if method == "both" else (method,)
    days = _resolve_days(dayspec, dataset.days)
    result = run_season(dataset, cfg, methods=methods, days=days, jobs=jobs)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for day_out in result.days:
        for name, grid in day_out.grids.items():
            write_grid(grid, out / f"doy{day_out.day:03d}_sm_{name}.grid")
    write_metrics_csv(result.rows(), out / "metrics.csv")
    manifest = {
        "dataset": str(Path(dataset_dir).resolve()),
        "dataset_seed": dataset.manifest["seed"],
        "methods": list(methods),
        "days": [d.day for d in result.days],
        "failed_days": result.failures,
        "seed": cfg.run.seed,
        "config": format_config(cfg),
    }
    with open(out / "run_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return result


def _season_kld_rows(dataset, run_dir, days, methods, mcfg):
    """Pooled-over-season KLD per land cover per method."""
    pooled: dict[tuple[str, str], list] = {}
    truth_pool: dict[str, list] = {}
    for day in days:
        scene = dataset.load_scene(day)
        for method in methods:
            path = Path(run_dir) / f"doy{day:03d}_sm_{method}.grid"
            if not path.exists():
                continue
            est = read_grid(path)
            for cls, name in CLASS_NAMES.items():
                mask = scene.lc.values == cls
                if mask.any():
                    pooled.setdefault((method, name), []).append(est.values[mask])
                    truth_pool.setdefault((method, name), []).append(scene.true_sm.values[mask])
    rows = []
    for (method, name), chunks in sorted(pooled.items()):
        est_samples = np.concatenate(chunks)
        tru_samples = np.concatenate(truth_pool[(method, name)])
        if est_samples.size >= 10:
            val = metrics_mod.kld(
                est_samples, tru_samples, bins=mcfg.kld_bins,
                value_range=(mcfg.kld_lo, mcfg.kld_hi),
            )
        else:
            val = float("nan")
        rows.append({"method": method, "landcover": name, "kld": val,
                     "n_pixels": int(est_samples.size)})
    return rows


def cmd_eval(results_dir, dataset_dir, out_dir=None, config_path=None,
             trace_day=None) -> dict:
    """Recompute metrics from stored grids; emit comparison tables.

    Outputs eval_metrics.csv (per day and method), comparison.csv
    (side-by-side RMSE), season_kld.csv (pooled per land cover), and an
    optional per-iteration error trace for one day.
    """
    cfg = _load_config(config_path)
    dataset = SeasonDataset(dataset_dir)
    results_dir = Path(results_dir)
    out = Path(out_dir) if out_dir else results_dir
    out.mkdir(parents=True, exist_ok=True)

    manifest_path = results_dir / "run_manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no run_manifest.json under {results_dir}")
    with open(manifest_path) as fh:
        run_manifest = json.load(fh)
    if run_manifest["dataset_seed"] != dataset.manifest["seed"]:
        raise DataError(
            "results were produced from a different dataset "
            f"(seed {run_manifest['dataset_seed']} vs {dataset.manifest['seed']})"
        )
    days = [d for d in run_manifest["days"] if d in dataset.days]
    methods = run_manifest["methods"]

    from .pipeline import day_metrics

    rows = []
    for day in days:
        scene = dataset.load_scene(day)
        for method in methods:
            path = results_dir / f"doy{day:03d}_sm_{method}.grid"
            if not path.exists():
                continue
            rows.append(day_metrics(scene, method, read_grid(path), cfg.metrics))
    write_metrics_csv(rows, out / "eval_metrics.csv")

    by_day: dict[int, dict] = {}
    for row in rows:
        by_day.setdefault(row["day"], {})[row["method"]] = row
    with open(out / "comparison.csv", "w", newline="") as fh:
        fh.write("day,rmse_srrm,rmse_pri,ztest_srrm,frac_below_srrm\n")
        for day in sorted(by_day):
            srrm = by_day[day].get("srrm", {})
            pri = by_day[day].get("pri", {})
            fh.write(
                f"{day},{_fmt(srrm.get('rmse', float('nan')))},"
                f"{_fmt(pri.get('rmse', float('nan')))},"
                f"{srrm.get('ztest_pass', 'nan')},{_fmt(srrm.get('frac_below', float('nan')))}\n"
            )

    kld_rows = _season_kld_rows(dataset, results_dir, days, methods, cfg.metrics)
    with open(out / "season_kld.csv", "w", newline="") as fh:
        fh.write("method,landcover,kld,n_pixels\n")
        for row in kld_rows:
            fh.write(f"{row['method']},{row['landcover']},{_fmt(row['kld'])},{row['n_pixels']}\n")

    trace = None
    if trace_day is not None:
        day = min(dataset.days, key=lambda d: abs(d - trace_day))
        scene = dataset.load_scene(day)
        params = _srrm_base(cfg)
        trace = iteration_error_trace(scene, params)
        with open(out / f"trace_doy{day:03d}.csv", "w", newline="") as fh:
            fh.write("iteration,rmse\n")
            for it, err in trace:
                fh.write(f"{it},{_fmt(err)}\n")

    summary = {
        "rows": rows,
        "kld": kld_rows,
        "trace": trace,
        "season_mean_rmse": {
            m: float(np.mean([r["rmse"] for r in rows if r["method"] == m]))
            for m in methods if any(r["method"] == m for r in rows)
        },
    }
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smdisagg",
        description="Disaggregate coarse soil-moisture grids with clustered kernel regression",
    )
    parser.add_argument("--print-config", action="store_true",
                        help="print the default configuration and exit")
    sub = parser.add_subparsers(dest="command")

    gen = sub.add_parser("generate", help="write a synthetic season dataset")
    gen.add_argument("--out", required=True, help="dataset output directory")
    gen.add_argument("--config", default=None, help="config file path")
    gen.add_argument("--seed", type=int, default=None, help="override run.seed")
    gen.add_argument("--days", default=None, help="comma-separated days (default: full season)")

    run = sub.add_parser("run", help="disaggregate a dataset")
    run.add_argument("dataset", help="dataset directory from `generate`")
    run.add_argument("--out", required=True, help="results output directory")
    run.add_argument("--method", choices=("srrm", "pri", "both"), default="both")
    run.add_argument("--config", default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--days", default=None, help="comma-separated days; snapped to scene days")
    run.add_argument("--jobs", type=int, default=None, help="parallel day workers (default: cores)")

    ev = sub.add_parser("eval", help="recompute metrics and comparison tables")
    ev.add_argument("results", help="results directory from `run`")
    ev.add_argument("dataset", help="dataset directory the run used")
    ev.add_argument("--out", default=None, help="report directory (default: results dir)")
    ev.add_argument("--config", default=None)
    ev.add_argument("--trace-day", type=int, default=None,
                    help="export per-iteration RMSE for the scene nearest this day")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.print_config:
            print(format_config(), end="")
            return EXIT_OK
        if args.command == "generate":
            out = cmd_generate(args.out, args.config, args.seed, args.days)
            print(f"dataset written to {out}")
            return EXIT_OK
        if args.command == "run":
            result = cmd_run(args.dataset, args.out, args.method, args.config,
                             args.seed, args.days, args.jobs)
            print(f"{len(result.days)} day(s) done, {len(result.failures)} failed; "
                  f"results in {args.out}")
            if result.failures and not result.days:
                return EXIT_NUMERIC
            return EXIT_OK
        if args.command == "eval":
            summary = cmd_eval(args.results, args.dataset, args.out, args.config,
                               args.trace_day)
            for method, value in summary["season_mean_rmse"].items():
                print(f"season mean RMSE [{method}]: {value:.5f}")
            for row in summary["kld"]:
                print(f"KLD [{row['method']}/{row['landcover']}]: {row['kld']:.6g}")
            return EXIT_OK
        parser.print_help()
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
