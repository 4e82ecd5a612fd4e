"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 data or I/O
error, 4 numeric or fitting failure.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import io as aio
from .exceptions import AgwnnError, FitError, InputError, ModeError, UsageError
from .linear import GWRRegressor
from .metrics import compute_metrics
from .model import AGWNNRegressor
from .synthetic import (
    MODEL_NAMES,
    SCENARIOS,
    GridSpec,
    gen_dataset,
    make_estimator,
    run_benchmark,
    sample_size_sweep,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FIT = 0, 2, 3, 4


def exit_code(exc):
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, FitError):
        return EXIT_FIT
    return EXIT_DATA


# config -> estimator parameters ----------------------------------------------

def _train_params(cfg):
    keys = ("lr", "batch_size", "max_epochs", "k_folds", "patience", "min_delta", "optimizer", "refit")
    return {k: cfg[k] for k in keys}


def agwnn_params(cfg):
    return dict(
        _train_params(cfg),
        bandwidth=cfg["bandwidth"],
        kernel=cfg["kernel"],
        mode=cfg["mode"],
        hidden=(cfg["q"], cfg["r"]),
        activation=cfg["activation"],
        output_activation=cfg["agwnn_output_activation"],
        lr_gwa=cfg["lr_gwa"],
        oos_gwa=cfg["oos_gwa"],
    )


def ann_params(cfg):
    return dict(
        _train_params(cfg),
        hidden=(cfg["ann_hidden"],),
        activation=cfg["activation"],
        output_activation=cfg["ann_output_activation"],
    )


def build_estimator(name, cfg):
    if name == "gwr":
        return GWRRegressor(bandwidth=cfg["bandwidth"], kernel=cfg["kernel"])
    return make_estimator(name, cfg["seed"], agwnn_params(cfg), ann_params(cfg))


def _config(args):
    overrides = list(getattr(args, "set", None) or [])
    for flag, key in (("seed", "seed"), ("bandwidth", "bandwidth"), ("mode", "mode"), ("kernel", "kernel")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    return aio.load_config(getattr(args, "config", None), overrides)


# output helpers ---------------------------------------------------------------

def _num(v):
    return "-" if v is None else f"{v:.6g}"


def print_metrics(ms, out=None, label=None):
    out = out or sys.stdout
    if label:
        print(label, file=out)
    for key in ("n", "loss", "mse", "rmse", "mae", "r2", "adj_r2", "pearson_r"):
        v = getattr(ms, key)
        print(f"  {key:<10}{v if key == 'n' else _num(v)}", file=out)


def _csv_list(text, allowed, what):
    items = [s.strip() for s in text.split(",") if s.strip()]
    for s in items:
        if s not in allowed:
            raise UsageError(f"unknown {what} {s!r}; expected one of {', '.join(allowed)}")
    if not items:
        raise UsageError(f"no {what} given")
    return items


# commands --------------------------------------------------------------------

def cmd_synth(args):
    grid = GridSpec(args.side, args.extent)
    if args.noise_sd < 0:
        raise UsageError("--noise-sd must be nonnegative")
    data = gen_dataset(args.scenario, grid, args.seed, args.noise_sd)
    d = data.dataset
    out = Path(args.out)
    aio.write_dataset(out, d)
    truth_dir = Path(args.truth_dir) if args.truth_dir else out.parent
    for s in data.surfaces:
        aio.write_grid(truth_dir / f"{out.stem}_{s}.csv", d.coords, data.truth[s])
    print(f"wrote {out}")
    print(f"n = {d.n}")
    print(f"p = {d.p}")
    for k, s in enumerate(data.surfaces):
        print(f"var({s}) = {np.var(data.betas[:, k]):.6g}")
    return EXIT_OK


def cmd_fit(args):
    cfg = _config(args)
    d = aio.read_dataset(args.data)
    est = build_estimator(args.model, cfg)
    t0 = time.perf_counter()
    est.fit(d.covariates, d.y, d.coords)
    elapsed = time.perf_counter() - t0
    fitted = est.predict(d.covariates, d.coords)
    ms = compute_metrics(d.y, fitted, d.p)
    aio.save_model(args.out, est, seed=cfg["seed"])
    print(f"model      {args.model}")
    if args.model in ("gwr", "agwnn"):
        print(f"bandwidth  {est.kernel_.bandwidth:.6g} ({est.kernel_.family})")
    if args.model == "gwr":
        sel = est.selection_
        if sel is not None and sel.at_boundary:
            print("warning: selected bandwidth lies on the search boundary", file=sys.stderr)
        print(f"aicc       {_num(est.fit_.aicc)}")
        print(f"enp        {_num(est.fit_.enp)}")
    elif args.model == "agwnn":
        diag = est.diagnostics_
        if diag.available:
            print(f"aicc       {_num(diag.aicc)}")
            print(f"enp        {_num(diag.enp)}")
        else:
            print(f"aicc       - ({diag.reason})")
        print(f"epochs     {est.history_.epochs_run} (best {est.history_.best_epoch})")
    print(f"time_s     {elapsed:.3f}")
    print_metrics(ms, label="training")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_predict(args):
    est = aio.load_model(args.model_file)
    d = aio.read_dataset(args.data)
    expected = est.n_features_in_
    if d.p != expected:
        raise InputError(f"model expects p = {expected} covariates, data has p = {d.p}")
    yhat = est.predict(d.covariates, d.coords)
    rows = (np.array([c[0], c[1], t, h]) for c, t, h in zip(d.coords, d.y, yhat))
    aio.atomic_write(args.out, aio._csv_text(["u", "v", "y", "yhat"], rows))
    print_metrics(compute_metrics(d.y, yhat, d.p), label="predicting")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_coeffs(args):
    est = aio.load_model(args.model_file)
    if isinstance(est, AGWNNRegressor):
        if est.model_.mode != "linear":
            raise ModeError(
                "local coefficients exist only for linear-mode AGWNN models: with nonlinear "
                "activations the prediction is not a dot product of covariates and coefficients"
            )
    elif not isinstance(est, GWRRegressor):
        raise ModeError("coefficient surfaces need a gwr or agwnn model")
    grid = GridSpec(args.side, args.extent)
    beta = est.coefficients_at(grid.coords)
    out = Path(args.out)
    written = []
    for k in range(beta.shape[1]):
        path = out / f"beta_{k}.csv"
        aio.write_grid(path, grid.coords, beta[:, k], f"beta_{k}")
        written.append(path)
    print(f"wrote {len(written)} coefficient grids ({grid.n} cells each) to {out}")
    return EXIT_OK


def cmd_bench(args):
    cfg = _config(args)
    scenarios = _csv_list(args.scenarios, tuple(SCENARIOS), "scenario")
    models = _csv_list(args.models, MODEL_NAMES, "model")
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    grid = GridSpec(args.side, args.extent)
    agwnn = agwnn_params(cfg)
    failed = False
    for sc in scenarios:
        report = run_benchmark(models, sc, grid, args.reps, cfg["seed"], args.noise_sd,
                               agwnn_params=agwnn, ann_params=ann_params(cfg))
        out = Path(args.out) / sc
        aio.write_report(report, out, timing=args.timing)
        print(f"scenario {sc}: {args.reps} test replicates, bandwidth {_num(report.bandwidth)}")
        print(f"  {'model':<7}{'pattern':<12}{'time_s':>9}{'enp':>9}{'aicc':>10}{'loss':>10}{'rmse':>8}{'r2':>8}")
        for r in report.rows:
            t = "" if r["time_s"] is None else f"{r['time_s']:.2f}"
            enp = "-" if r["enp"] is None else f"{r['enp']:.1f}"
            aicc = "-" if r["aicc"] is None else f"{r['aicc']:.1f}"
            r2 = "-" if r["r2"] is None else f"{r['r2']:.3f}"
            print(f"  {r['model']:<7}{r['pattern']:<12}{t:>9}{enp:>9}{aicc:>10}"
                  f"{r['loss']:>10.2f}{r['rmse']:>8.3f}{r2:>8}")
        for name, msg in sorted(report.failures.items()):
            print(f"  FAILED {name}: {msg}", file=sys.stderr)
            failed = True
        print(f"  wrote {out}")
    return EXIT_FIT if failed else EXIT_OK


def cmd_sweep(args):
    cfg = _config(args)
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    grid = GridSpec(args.side, args.extent)
    params = agwnn_params(cfg)
    for key in ("max_epochs", "patience", "refit"):
        del params[key]
    points = sample_size_sweep(sizes, args.scenario, grid, cfg["seed"], args.reps, args.noise_sd,
                               agwnn_params=params, epochs=args.epochs)
    header = ["size", "bandwidth", "rmse", "r2", "epochs"] + (["time_s"] if args.timing else [])
    rows = []
    print(f"  {'size':>6}{'bandwidth':>11}{'rmse':>9}{'r2':>8}{'epochs':>8}{'time_s':>9}")
    for pt in points:
        row = [pt.size, pt.bandwidth, pt.rmse, pt.r2, pt.epochs]
        rows.append(row + ([pt.time_s] if args.timing else []))
        print(f"  {pt.size:>6}{pt.bandwidth:>11.4f}{pt.rmse:>9.4f}{_num(pt.r2):>8}{pt.epochs:>8}{pt.time_s:>9.2f}")
    aio.atomic_write(args.out, aio._csv_text(header, rows))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_show_config(args):
    sys.stdout.write(aio.format_config(_config(args)))
    return EXIT_OK


# parser ----------------------------------------------------------------------

def _add_config_flags(p, model_flags=True):
    p.add_argument("--config", metavar="PATH", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    if model_flags:
        p.add_argument("--bandwidth", type=float,
                       help="fixed kernel bandwidth; omitted means AICc selection")
        p.add_argument("--kernel", choices=("gaussian", "bisquare"))
        p.add_argument("--mode", choices=("nonlinear", "linear"), help="AGWNN mode")


def _add_grid_flags(p, side=20):
    p.add_argument("--side", type=int, default=side, help="grid cells per axis (default %(default)s)")
    p.add_argument("--extent", type=float, default=20.0, help="grid extent L of [0, L] (default %(default)s)")


def build_parser():
    parser = argparse.ArgumentParser(prog="agwnn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic dataset and truth grids")
    p.add_argument("--scenario", choices=tuple(SCENARIOS), default="y5")
    _add_grid_flags(p)
    p.add_argument("--noise-sd", type=float, default=0.25, help="coefficient noise sd (default %(default)s)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth-dir", metavar="DIR", help="where truth grids go (default: next to --out)")
    p.add_argument("--out", required=True, metavar="PATH", help="dataset CSV to write")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a model and write a model file")
    p.add_argument("--model", choices=MODEL_NAMES, required=True)
    p.add_argument("--data", required=True, metavar="PATH", help="dataset CSV u,v,x1..xp,y")
    p.add_argument("--out", required=True, metavar="PATH", help="model file to write")
    _add_config_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model-file", required=True, metavar="PATH")
    p.add_argument("--data", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH", help="CSV u,v,y,yhat to write")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("coeffs", help="write local coefficient grids of a gwr or linear agwnn model")
    p.add_argument("--model-file", required=True, metavar="PATH")
    _add_grid_flags(p)
    p.add_argument("--out", required=True, metavar="DIR", help="directory for beta_k.csv files")
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("bench", help="run the comparative benchmark")
    p.add_argument("--scenarios", default="y5", help="comma-separated scenarios (default %(default)s)")
    p.add_argument("--models", default=",".join(MODEL_NAMES),
                   help="comma-separated models (default %(default)s)")
    p.add_argument("--reps", type=int, default=100, help="test replicates (default %(default)s)")
    _add_grid_flags(p)
    p.add_argument("--noise-sd", type=float, default=0.25)
    p.add_argument("--timing", action="store_true",
                   help="record wall times in table.csv (makes output run-dependent)")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flags(p, model_flags=False)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="AGWNN accuracy and time against training sample size")
    p.add_argument("--sizes", default="400,350,300,250,200,150")
    p.add_argument("--scenario", choices=tuple(SCENARIOS), default="y5")
    p.add_argument("--reps", type=int, default=20, help="test replicates per size (default %(default)s)")
    _add_grid_flags(p)
    p.add_argument("--noise-sd", type=float, default=0.25)
    p.add_argument("--epochs", type=int, default=600,
                   help="fixed training epochs per size, early stopping off (default %(default)s)")
    p.add_argument("--timing", action="store_true", help="include wall times in the CSV")
    p.add_argument("--out", required=True, metavar="PATH")
    _add_config_flags(p, model_flags=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("show-config", help="print the effective configuration")
    _add_config_flags(p)
    p.set_defaults(func=cmd_show_config)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except AgwnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    except OSError as exc:
        where = f" ({exc.filename})" if exc.filename else ""
        print(f"error: {exc.strerror or exc}{where}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
