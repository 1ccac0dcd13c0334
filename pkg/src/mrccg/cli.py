"""Command line front end.

Subcommands: train, predict, cv, features, bench. Exit codes: 0 success,
1 solver or numerical failure, 2 usage or data errors.
"""

import argparse
import os
import sys
import time
import warnings
from dataclasses import replace

import numpy as np

from mrccg import __version__
from mrccg.backend import active_backend, available_backends
from mrccg.cg import CgConfig, solve_full, train
from mrccg.classifier import (empirical_error, load_model, predict,
                              predict_proba, save_model)
from mrccg.datasets import (load_csv, standardize, stratified_kfold,
                            synthetic_gaussian)
from mrccg.errors import DataError, LpError, NumericalError
from mrccg.featmap import FeatureMap, identity_map, rff_fit


def _add_data_args(p, label_default="-1"):
    p.add_argument("--data", required=True, help="CSV file with instances")
    p.add_argument("--label-col", default=label_default,
                   help="label column name or 0-based index "
                        f"(default {label_default!r})")
    p.add_argument("--no-header", action="store_true",
                   help="file has no header row")
    p.add_argument("--delimiter", default=",", help="field delimiter")


def _add_fmap_args(p):
    p.add_argument("--fmap", choices=("identity", "rff"), default="identity",
                   help="instance embedding (default identity)")
    p.add_argument("--rff-components", type=int, default=500,
                   help="random Fourier frequency count D, d' = 2D")
    p.add_argument("--rff-gamma", default="scale",
                   help="kernel width gamma, or 'scale' for "
                        "1 / (d * mean feature variance)")
    p.add_argument("--seed", type=int, default=0, help="random seed")


def _add_cg_args(p):
    p.add_argument("--epsilon", type=float, default=1e-4,
                   help="minimum dual violation for adding a feature")
    p.add_argument("--nmax", type=int, default=100,
                   help="max features added per iteration")
    p.add_argument("--kmax", type=int, default=10,
                   help="max subproblem solves after the first")
    p.add_argument("--init-size", type=int, default=None,
                   help="size of the screened initial set (default nmax)")
    p.add_argument("--lambda-scale", type=float, default=1.0,
                   help="scale of the uncertainty box halfwidth")
    p.add_argument("--backend", choices=("numba", "numpy"), default=None,
                   help="kernel backend (default: MRCCG_BACKEND or numba)")
    p.add_argument("--no-standardize", action="store_true",
                   help="skip per-column standardization")


def build_parser():
    p = argparse.ArgumentParser(
        prog="mrccg",
        description="Minimax risk classifiers via LP constraint generation")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a classifier and save it")
    _add_data_args(t)
    _add_fmap_args(t)
    _add_cg_args(t)
    t.add_argument("--out", default="model.json", help="model output path")
    t.add_argument("--dump-lp", default=None, metavar="DIR",
                   help="write each subproblem in LP format to DIR")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="predict with a saved model")
    r.add_argument("--model", required=True, help="model file from train")
    _add_data_args(r, label_default=None)
    r.add_argument("--out", default="predictions.csv",
                   help="predictions output path")
    r.set_defaults(func=cmd_predict)

    c = sub.add_parser("cv", help="stratified cross-validation")
    _add_data_args(c)
    _add_fmap_args(c)
    _add_cg_args(c)
    c.add_argument("--folds", type=int, default=10)
    c.add_argument("--reps", type=int, default=1,
                   help="repetitions with shifted fold seeds")
    c.add_argument("--out", default="cv.csv", help="per-fold results path")
    c.set_defaults(func=cmd_cv)

    f = sub.add_parser("features", help="report selected features")
    f.add_argument("--model", required=True, help="model file from train")
    f.add_argument("--out", default=None,
                   help="CSV output path (default: stdout)")
    f.set_defaults(func=cmd_features)

    b = sub.add_parser("bench",
                       help="time constraint generation against the full LP")
    b.add_argument("--data", default=None, help="CSV file (default synthetic)")
    b.add_argument("--label-col", default="-1")
    b.add_argument("--no-header", action="store_true")
    b.add_argument("--delimiter", default=",")
    b.add_argument("--bench-n", type=int, default=200)
    b.add_argument("--bench-d", type=int, default=20)
    b.add_argument("--bench-classes", type=int, default=2)
    b.add_argument("--bench-separation", type=float, default=1.5)
    _add_fmap_args(b)
    _add_cg_args(b)
    b.add_argument("--nmax-grid", default=None,
                   help="comma-separated n_max values to sweep")
    b.add_argument("--reps", type=int, default=1)
    b.add_argument("--out", default="bench.csv")
    b.set_defaults(func=cmd_bench)
    return p


def _parse_label_col(value):
    try:
        return int(value)
    except (TypeError, ValueError):
        return value


def _load(args):
    return load_csv(args.data, _parse_label_col(args.label_col),
                    header=not args.no_header, delimiter=args.delimiter)


def _resolve_gamma(args, data):
    if args.rff_gamma != "scale":
        return float(args.rff_gamma)
    mean_var = float(data.instances.var(axis=0).mean())
    if mean_var <= 0:
        mean_var = 1.0
    return 1.0 / (data.d * mean_var)


def _make_fmap(args, data):
    if args.fmap == "identity":
        imap = identity_map(data.d)
    else:
        imap = rff_fit(data.d, args.rff_components,
                       _resolve_gamma(args, data), args.seed)
    return FeatureMap(imap, data.n_classes)


def _make_cfg(args, dump_dir=None):
    return CgConfig(epsilon=args.epsilon, n_max=args.nmax, k_max=args.kmax,
                    init_size=args.init_size,
                    lambda_scale=args.lambda_scale, seed=args.seed,
                    backend=args.backend, dump_dir=dump_dir)


def _display_label(model, code):
    if model.label_values is not None:
        return model.label_values[code]
    return code


def cmd_train(args):
    raw = _load(args)
    scaler = None
    data = raw
    if not args.no_standardize:
        data, scaler = standardize(raw)
    fmap = _make_fmap(args, data)
    if args.dump_lp:
        os.makedirs(args.dump_lp, exist_ok=True)
    cfg = _make_cfg(args, dump_dir=args.dump_lp)

    t0 = time.perf_counter()
    model, trace = train(data, fmap, cfg)
    elapsed = time.perf_counter() - t0
    model.scaler = scaler
    model.standardized = scaler is not None

    save_model(model, args.out)
    trace_path = os.path.splitext(args.out)[0] + ".trace.csv"
    trace.to_csv(trace_path)
    det, rand = empirical_error(model, raw)

    print(f"backend: {active_backend() if args.backend is None else args.backend}")
    print(f"R* (worst-case error probability): {model.r_star:.6f}")
    print(f"selected features: {model.selected.size} of {fmap.m}")
    print(f"iterations: {trace.n_iterations}, "
          f"pivots: {sum(r.pivots for r in trace.records)}, "
          f"time: {elapsed:.2f}s")
    print(f"training error: deterministic {det:.4f}, probabilistic {rand:.4f}")
    print(f"model written to {args.out}")
    print(f"trace written to {trace_path}")
    return 0


def _load_matrix(path, header, delimiter):
    import csv as _csv
    with open(path, newline="") as fh:
        rows = [r for r in _csv.reader(fh, delimiter=delimiter) if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    start = 1 if header else 0
    if start >= len(rows):
        raise DataError(f"{path}: no data rows")
    out = []
    for rix in range(start, len(rows)):
        try:
            out.append([float(c) for c in rows[rix]])
        except ValueError as exc:
            raise DataError(f"{path}: row {rix + 1}: {exc}") from None
    X = np.asarray(out, dtype=np.float64)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise DataError(f"{path}: malformed numeric matrix")
    return X


def cmd_predict(args):
    model = load_model(args.model)
    labels = None
    if args.label_col is not None:
        data = load_csv(args.data, _parse_label_col(args.label_col),
                        header=not args.no_header, delimiter=args.delimiter)
        X, labels = data.instances, data.labels
    else:
        X = _load_matrix(args.data, not args.no_header, args.delimiter)
    if X.shape[1] != model.fmap.instance_map.d:
        raise DataError(
            f"model expects {model.fmap.instance_map.d} features, "
            f"data has {X.shape[1]}")

    h = predict_proba(model, X)
    pred = predict(model, X)
    with open(args.out, "w") as fh:
        cols = ",".join(f"p_{_display_label(model, y)}"
                        for y in range(model.n_classes))
        fh.write(f"row,prediction,{cols}\n")
        for i in range(X.shape[0]):
            probs = ",".join(f"{v:.17g}" for v in h[i])
            fh.write(f"{i},{_display_label(model, int(pred[i]))},{probs}\n")
    print(f"predictions written to {args.out}")
    if labels is not None:
        err = float(np.mean(pred != labels))
        print(f"deterministic error: {err:.4f} on {X.shape[0]} instances")
    return 0


def cmd_cv(args):
    raw = _load(args)
    rows = []
    t_all = time.perf_counter()
    for rep in range(args.reps):
        seed_r = args.seed + rep
        for fold, (tr, te) in enumerate(
                stratified_kfold(raw, args.folds, seed_r)):
            dtr_raw = raw.subset(tr)
            dte = raw.subset(te)
            scaler = None
            dtr = dtr_raw
            if not args.no_standardize:
                dtr, scaler = standardize(dtr_raw)
            ns = argparse.Namespace(**vars(args), )
            ns.seed = seed_r
            fmap = _make_fmap(ns, dtr)
            cfg = replace(_make_cfg(args), seed=seed_r)
            t0 = time.perf_counter()
            model, trace = train(dtr, fmap, cfg)
            ms = (time.perf_counter() - t0) * 1e3
            model.scaler = scaler
            model.standardized = scaler is not None
            det, rand = empirical_error(model, dte)
            rows.append((rep, fold, model.r_star, model.selected.size,
                         det, rand, ms))

    with open(args.out, "w") as fh:
        fh.write("rep,fold,r_star,n_selected,det_error,prob_loss,train_ms\n")
        for row in rows:
            fh.write(f"{row[0]},{row[1]},{row[2]:.17g},{row[3]},"
                     f"{row[4]:.17g},{row[5]:.17g},{row[6]:.3f}\n")

    errs = np.array([row[4] for row in rows])
    sizes = np.array([row[3] for row in rows])
    print(f"folds: {args.folds} x {args.reps} rep(s), "
          f"total time {time.perf_counter() - t_all:.2f}s")
    print(f"cv deterministic error: {errs.mean():.4f} +- {errs.std():.4f}")
    print(f"selected features per fold: {sizes.mean():.1f} +- {sizes.std():.1f}")

    # Reference fit on all data, for the worst-case error probability.
    scaler = None
    data = raw
    if not args.no_standardize:
        data, scaler = standardize(raw)
    fmap = _make_fmap(args, data)
    model, _ = train(data, fmap, _make_cfg(args))
    print(f"full-data R*: {model.r_star:.4f}, "
          f"selected {model.selected.size} of {fmap.m}")
    print(f"per-fold results written to {args.out}")
    return 0


def cmd_features(args):
    model = load_model(args.model)
    dp = model.fmap.dprime
    K = model.n_classes
    coef = {}
    for fid in model.selected:
        coef.setdefault(int(fid) % dp, np.zeros(K))
    for fid, val in zip(model.mu.indices, model.mu.values):
        coef[int(fid) % dp][int(fid) // dp] = val
    lines = ["component," + ",".join(f"coef_class{y}" for y in range(K))]
    for p in sorted(coef):
        lines.append(f"{p}," + ",".join(f"{v:.17g}" for v in coef[p]))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"{len(coef)} components written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def bench_run(data, fmap, cfg):
    """One benchmark cell: train vs the one-shot full LP on the same moments.

    Returns a dict with both times, both objectives, and their gap.
    """
    t0 = time.perf_counter()
    model, trace = train(data, fmap, cfg)
    t_cg = time.perf_counter() - t0
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        # Solving the oversized full LP is the entire point of the cell.
        warnings.simplefilter("ignore", RuntimeWarning)
        full = solve_full(data, fmap, stats=model.stats, backend=cfg.backend)
    t_lp = time.perf_counter() - t0
    return {
        "m": fmap.m,
        "t_cg_s": t_cg,
        "t_lp_s": t_lp,
        "rel_time": t_cg / t_lp if t_lp > 0 else float("inf"),
        "r_cg": model.r_star,
        "r_lp": full.r_star,
        "gap": model.r_star - full.r_star,
        "mu_full_norm1": full.mu.norm1(),
        "iterations": trace.n_iterations,
        "n_selected": model.selected.size,
    }


def cmd_bench(args):
    if args.data:
        raw = load_csv(args.data, _parse_label_col(args.label_col),
                       header=not args.no_header, delimiter=args.delimiter)
    else:
        raw = synthetic_gaussian(args.bench_n, args.bench_d,
                                 args.bench_classes,
                                 separation=args.bench_separation,
                                 seed=args.seed)
    data = raw
    if not args.no_standardize:
        data, _ = standardize(raw)
    fmap = _make_fmap(args, data)
    grid = ([int(v) for v in args.nmax_grid.split(",")]
            if args.nmax_grid else [args.nmax])

    print(f"backend: {args.backend or active_backend()} "
          f"(available: {', '.join(available_backends())})")
    print(f"n={data.n}, d={data.d}, classes={data.n_classes}, m={fmap.m}")
    results = []
    for rep in range(args.reps):
        for nmax in grid:
            cfg = replace(_make_cfg(args), n_max=nmax, seed=args.seed + rep)
            cell = bench_run(data, fmap, cfg)
            cell.update(rep=rep, n_max=nmax)
            results.append(cell)
            print(f"rep {rep} n_max {nmax}: cg {cell['t_cg_s']:.2f}s "
                  f"({cell['iterations']} iters, R {cell['r_cg']:.6f})  "
                  f"full {cell['t_lp_s']:.2f}s (R {cell['r_lp']:.6f})  "
                  f"ratio {cell['rel_time']:.3f}")

    cols = ["rep", "n_max", "m", "t_cg_s", "t_lp_s", "rel_time", "r_cg",
            "r_lp", "gap", "iterations", "n_selected"]
    with open(args.out, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for cell in results:
            fh.write(",".join(f"{cell[c]:.17g}"
                              if isinstance(cell[c], float)
                              else str(cell[c]) for c in cols) + "\n")
    print(f"results written to {args.out}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LpError, NumericalError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
