"""Command-line driver: generate, fit, eval, benchmark.

Every command funnels randomness through an explicit ``--seed``, writes
a manifest describing its inputs and configuration, and exits 0 on
success, 2 on an input/validation problem, 3 when an inner solver
failed to converge (outputs are still written, flagged in the
metadata). The benchmark sweeps a JSON grid over
(n, N, p, K, method, seeds) and emits a long-format CSV whose row
order and formatting are independent of scheduling; ``GPLSI_THREADS``
caps its worker threads.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ._version import __version__
from .corpus import (
    generate_synthetic,
    load_counts,
    load_graph,
    load_model,
    read_matrix_csv,
    save_model,
    validate_frequency,
    write_counts_mtx,
    write_graph,
    write_matrix_csv,
)
from .decomposition import FitConfig
from .errors import (
    GplsiError,
    InvalidParameter,
    MaxIterationsExceeded,
    NumericalFailure,
)
from .eval import evaluate
from .model import fit_pipeline

_METRICS = (
    "a_l1", "a_l2", "morans_I", "pas", "rho_hat",
    "sintheta_U", "sintheta_V", "w_l1", "w_l2",
)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _truth_factors(W, A, K):
    """Top-K singular factors of the noiseless signal W A."""
    M = W @ A
    U, _, Vt = np.linalg.svd(M, full_matrices=False)
    return U[:, :K], Vt[:K].T


def cmd_generate(args):
    t0 = time.perf_counter()
    counts, truth, graph = generate_synthetic(
        n=args.n, p=args.p, K=args.K, N=args.N, n_grp=args.n_grp,
        knn=args.knn, noise_sd=args.noise_sd, seed=args.seed,
    )
    out = args.out
    truth_dir = os.path.join(out, "truth")
    os.makedirs(truth_dir, exist_ok=True)
    write_counts_mtx(os.path.join(out, "counts.mtx"), counts)
    write_graph(os.path.join(out, "graph.txt"), graph)
    write_matrix_csv(os.path.join(truth_dir, "W.csv"), truth.W)
    write_matrix_csv(os.path.join(truth_dir, "A.csv"), truth.A)
    write_matrix_csv(os.path.join(truth_dir, "coords.csv"), truth.coords)
    with open(os.path.join(truth_dir, "meta.json"), "w") as fh:
        json.dump({
            "anchor_docs": [int(i) for i in truth.anchor_docs],
            "anchor_words": [int(i) for i in truth.anchor_words],
            "group_ids": [int(i) for i in truth.group_ids],
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    elapsed = time.perf_counter() - t0
    outputs = ["counts.mtx", "graph.txt", "truth/W.csv", "truth/A.csv",
               "truth/coords.csv", "truth/meta.json"]
    # no wall times here: a generate directory is a pure function of its
    # configuration and must be byte-identical across runs
    _write_manifest(os.path.join(out, "manifest.json"), {
        "command": "generate",
        "config": {
            "n": args.n, "p": args.p, "K": args.K, "N": args.N,
            "n_grp": args.n_grp, "knn": args.knn, "noise_sd": args.noise_sd,
            "seed": args.seed,
        },
        "outputs": {rel: _sha256(os.path.join(out, rel)) for rel in outputs},
        "version": __version__,
    })
    print("wrote %s (n=%d, p=%d, K=%d, %.2fs)"
          % (out, args.n, args.p, args.K, elapsed))
    return 0


def _parse_rho_grid(text):
    if text is None:
        return None
    try:
        grid = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise InvalidParameter("--rho-grid must be comma-separated numbers")
    if not grid:
        raise InvalidParameter("--rho-grid must be nonempty")
    return grid


def cmd_fit(args):
    t0 = time.perf_counter()
    counts = load_counts(args.counts)
    X = validate_frequency(counts)
    graph = None
    if args.graph is not None:
        graph = load_graph(args.graph, n_nodes=X.n)
    config = FitConfig(
        K=args.K, rho_grid=_parse_rho_grid(args.rho_grid), b=args.folds,
        eps=args.eps, t_max=args.t_max, cv_seed=args.seed,
    )
    result = fit_pipeline(X, graph, config, method=args.method)
    elapsed = time.perf_counter() - t0
    trace = result["trace"]
    solver_ok = trace.solver_all_converged
    meta = {
        "method": args.method,
        "K": args.K,
        "n": X.n,
        "p": X.p,
        "seed": args.seed,
        "rho_path": [float(r) for r in trace.rho_path],
        "iterations": trace.iterations,
        "converged": bool(trace.converged),
        "solver_converged": bool(solver_ok),
        "anchors": [int(i) for i in result["anchors"]],
        "repair_mass": float(result["repair_mass"]),
        "topic_residual": float(result["topic_residual"]),
        "timings": {"fit_seconds": elapsed},
        "version": __version__,
    }
    save_model(args.out, result["W"], result["A"], meta, extras={
        "U": result["U"],
        "V": result["V"],
        "lambda": np.atleast_2d(result["singular_values"]),
    })
    trace.to_csv(os.path.join(args.out, "trace.csv"))
    inputs = {"counts": _sha256(args.counts)}
    if args.graph is not None:
        inputs["graph"] = _sha256(args.graph)
    _write_manifest(os.path.join(args.out, "manifest.json"), {
        "command": "fit",
        "config": {
            "method": args.method, "K": args.K, "rho_grid": args.rho_grid,
            "folds": args.folds, "eps": args.eps, "t_max": args.t_max,
            "seed": args.seed,
        },
        "inputs": inputs,
        "timings": {"fit_seconds": elapsed},
        "version": __version__,
    })
    if not solver_ok:
        print("warning: TV solver hit its iteration cap; outputs flagged",
              file=sys.stderr)
        return 3
    print("fit %s: %d iterations, rho path %s (%.2fs)"
          % (args.method, trace.iterations,
             ["%.4g" % r for r in trace.rho_path], elapsed))
    return 0


def cmd_eval(args):
    W_hat, A_hat, meta = load_model(args.model)
    W_ref = read_matrix_csv(os.path.join(args.truth, "W.csv"))
    A_ref = read_matrix_csv(os.path.join(args.truth, "A.csv"))
    graph = None
    if args.graph is not None:
        graph = load_graph(args.graph, n_nodes=W_hat.shape[0])
    K = W_hat.shape[1]
    U_ref, V_ref = _truth_factors(W_ref, A_ref, K)
    U_path = os.path.join(args.model, "U.csv")
    V_path = os.path.join(args.model, "V.csv")
    U_hat = read_matrix_csv(U_path) if os.path.exists(U_path) else None
    V_hat = read_matrix_csv(V_path) if os.path.exists(V_path) else None
    report = evaluate(
        W_hat, A_hat, W_ref, A_ref, g=graph,
        U_hat=U_hat, U_ref=U_ref if U_hat is not None else None,
        V_hat=V_hat, V_ref=V_ref if V_hat is not None else None,
    )
    report.to_json(args.out)
    print("wrote %s" % args.out)
    return 0


def _grid_values(grid, key, default=None):
    value = grid.get(key, default)
    if value is None:
        raise InvalidParameter("benchmark grid needs %r" % key)
    if not isinstance(value, list):
        value = [value]
    return value


def _benchmark_cell(cell, grid):
    n, N, p, K, seed = cell
    counts, truth, graph = generate_synthetic(
        n=n, p=p, K=K, N=N,
        n_grp=int(grid.get("n_grp", 30)),
        knn=int(grid.get("knn", 5)),
        noise_sd=float(grid.get("noise_sd", 0.03)),
        seed=seed,
    )
    X = validate_frequency(counts)
    U_ref, V_ref = _truth_factors(truth.W, truth.A, K)
    rows = []
    flagged = []
    for method in grid["methods"]:
        config = FitConfig(
            K=K,
            rho_grid=tuple(grid["rho_grid"]) if grid.get("rho_grid") else None,
            b=int(grid.get("folds", 5)),
            eps=grid.get("eps"),
            t_max=grid.get("t_max"),
            cv_seed=seed,
        )
        result = fit_pipeline(X, graph, config, method=method)
        report = evaluate(
            result["W"], result["A"], truth.W, truth.A, g=graph,
            U_hat=result["U"], U_ref=U_ref,
            V_hat=result["V"], V_ref=V_ref,
        )
        values = report.as_dict()
        values["rho_hat"] = (result["trace"].rho_path or [0.0])[-1]
        if not result["trace"].solver_all_converged:
            flagged.append({"n": n, "N": N, "p": p, "K": K, "seed": seed,
                            "method": method})
        for metric in _METRICS:
            v = values.get(metric)
            rows.append((method, seed, n, N, p, K, metric,
                         float("nan") if v is None else float(v)))
    return rows, flagged


def cmd_benchmark(args):
    t0 = time.perf_counter()
    with open(args.config) as fh:
        try:
            grid = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidParameter("benchmark grid is not valid JSON: %s" % exc)
    if not isinstance(grid, dict):
        raise InvalidParameter("benchmark grid must be a JSON object")
    ns = [int(v) for v in _grid_values(grid, "n")]
    Ns = [int(v) for v in _grid_values(grid, "N")]
    ps = [int(v) for v in _grid_values(grid, "p")]
    Ks = [int(v) for v in _grid_values(grid, "K")]
    methods = _grid_values(grid, "methods")
    for method in methods:
        if method not in ("gplsi", "plsi", "onestep"):
            raise InvalidParameter("unknown method %r in grid" % (method,))
    seeds = grid.get("seeds", 1)
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise InvalidParameter("benchmark grid needs at least one seed")
    grid = dict(grid)
    grid["methods"] = methods

    cells = list(itertools.product(ns, Ns, ps, Ks, seeds))
    workers = max(1, int(os.environ.get("GPLSI_THREADS", "1")))
    all_rows = []
    all_flagged = []
    if workers == 1:
        results = [_benchmark_cell(cell, grid) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _benchmark_cell(c, grid), cells))
    for rows, flagged in results:
        all_rows.extend(rows)
        all_flagged.extend(flagged)
    # ordering is a contract: sorted by grid key, then method/seed/metric,
    # regardless of how many threads ran the cells
    all_rows.sort(key=lambda r: (r[2], r[3], r[4], r[5], r[0], r[1], r[6]))
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write("method,seed,n,N,p,K,metric,value\n")
        for method, seed, n, N, p, K, metric, value in all_rows:
            fh.write("%s,%d,%d,%d,%d,%d,%s,%.17g\n"
                     % (method, seed, n, N, p, K, metric, value))
    elapsed = time.perf_counter() - t0
    _write_manifest(args.out + ".manifest.json", {
        "command": "benchmark",
        "config": grid,
        "config_sha256": _sha256(args.config),
        "cells": len(cells),
        "workers": workers,
        "nonconverged": all_flagged,
        "timings": {"benchmark_seconds": elapsed},
        "version": __version__,
    })
    print("wrote %s (%d rows, %d cells, %.2fs)"
          % (args.out, len(all_rows), len(cells), elapsed))
    if all_flagged:
        print("warning: %d fits hit the solver iteration cap; flagged in "
              "manifest" % len(all_flagged), file=sys.stderr)
        return 3
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gplsi",
        description="Graph-regularized topic modeling: generate synthetic "
                    "corpora, fit mixtures, evaluate, benchmark.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic corpus directory")
    g.add_argument("--n", type=int, required=True, help="number of documents")
    g.add_argument("--p", type=int, required=True, help="vocabulary size")
    g.add_argument("--K", type=int, required=True, help="number of topics")
    g.add_argument("--N", type=int, required=True, help="words per document")
    g.add_argument("--n-grp", type=int, default=30, help="spatial clusters")
    g.add_argument("--knn", type=int, default=5, help="nearest neighbors")
    g.add_argument("--noise-sd", type=float, default=0.03,
                   help="mixture noise standard deviation")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit a topic model to counts (+ graph)")
    f.add_argument("--method", choices=("gplsi", "plsi", "onestep"),
                   default="gplsi")
    f.add_argument("--counts", required=True, help="counts file (.mtx or .csv)")
    f.add_argument("--graph", default=None, help="edge-list file")
    f.add_argument("--K", type=int, required=True)
    f.add_argument("--rho-grid", default=None,
                   help="comma-separated penalties (default: data-driven)")
    f.add_argument("--folds", type=int, default=5)
    f.add_argument("--eps", type=float, default=None,
                   help="outer stopping threshold")
    f.add_argument("--t-max", type=int, default=None,
                   help="outer iteration cap")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True, help="model output directory")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="score a model directory against truth")
    e.add_argument("--model", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--graph", default=None)
    e.add_argument("--out", required=True, help="report JSON path")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("benchmark", help="sweep a JSON grid, write long CSV")
    b.add_argument("--config", required=True, help="grid JSON path")
    b.add_argument("--out", required=True, help="CSV output path")
    b.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (NumericalFailure, MaxIterationsExceeded) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3
    except (GplsiError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
