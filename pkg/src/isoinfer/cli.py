"""Command-line entry point: ``isoinfer {fit,gen,sample-limit,ci,experiment}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace

import numpy as np

from .data_gen import DGP_NAMES, SHAPES, RawSample, draw, named_dgp
from .errors import IsoInferError
from .harness import ExperimentConfig, law_grid, run_config
from .inference import hulc_ci, oracle_pivot_ci, subsample_ci
from .isotonic import diagnostics, pava, sort_sample
from .limit_law import (
    Asymmetric,
    GridConfig,
    NearFlat,
    SlowVarying,
    WrightPoly,
    chernoff_drift,
    make_drift,
    quantile,
    sample_slgcm_zero,
)

EXIT_GATE_FAILED = 2


def read_pairs(path) -> np.ndarray:
    """Two-column numeric ``x,y`` CSV; a non-numeric first row is a header."""
    rows = []
    with open(path, newline="") as fh:
        for i, rec in enumerate(csv.reader(fh)):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != 2:
                raise IsoInferError(f"{path}:{i + 1}: expected 2 columns, got {len(rec)}")
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                if i == 0:
                    continue
                raise IsoInferError(f"{path}:{i + 1}: non-numeric value")
    return np.asarray(rows, dtype=float).reshape(-1, 2)


def read_draws(path) -> np.ndarray:
    vals = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals.append(float(line.split(",")[0]))
            except ValueError:
                continue  # header
    return np.asarray(vals)


def _emit(record: dict, path=None):
    line = json.dumps(record, sort_keys=True)
    if path:
        with open(path, "a") as fh:
            fh.write(line + "\n")
    else:
        print(line)


def cmd_fit(args):
    pairs = read_pairs(args.input)
    s = sort_sample(pairs, args.tie_seed)
    fit = pava(s)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["knot", "level"])
        for k, v in zip(fit.step.knots, fit.step.levels):
            w.writerow([repr(float(k)), repr(float(v))])
    d = diagnostics(s, fit.step)
    _emit({"record": "diagnostics", "n": len(s), "sse": d.sse, "n_blocks": d.n_blocks, "sup_norm": d.sup_norm},
          args.diagnostics)
    return 0


def cmd_gen(args):
    nd = named_dgp(args.dgp, args.n, theta=args.theta, A=args.A, alpha=args.alpha,
                   heteroscedastic=args.heteroscedastic, sigma=args.sigma)
    s = draw(nd.dgp, args.seed)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in zip(s.xs, s.ys):
            w.writerow([repr(float(x)), repr(float(y))])
    _emit({"record": "sample", "dgp": args.dgp, "n": args.n, "seed": args.seed, "x0": nd.dgp.x0,
           "truth_at_x0": s.truth_at_x0, "s_n": nd.rate(args.n)}, args.meta)
    return 0


def drift_from_args(args):
    name = args.drift
    if name == "wright":
        kind = WrightPoly(args.A, args.theta)
    elif name == "slowvar":
        kind = SlowVarying(args.A, args.theta)
    elif name == "asym":
        kind = Asymmetric(args.A1, args.theta1, args.A2, args.theta2)
    elif name == "nearflat":
        kind = NearFlat(tuple(float(c) for c in args.coeffs.split(",")))
    elif name == "chernoff":
        return chernoff_drift(args.theta)
    else:
        kind = SHAPES[name]()
    return make_drift(kind, args.h0, args.sigma2)


def cmd_sample_limit(args):
    drift = drift_from_args(args)
    grid = law_grid(drift)
    grid = GridConfig(args.T or grid.T, args.n_pts or grid.n_pts,
                      grid.max_doublings if args.max_doublings is None else args.max_doublings)
    law = sample_slgcm_zero(drift, grid, args.draws, master_seed=args.seed, workers=args.workers)
    with open(args.out, "w") as fh:
        fh.writelines(f"{v!r}\n" for v in law.draws.tolist())
    if args.emit_quantiles:
        print("p,quantile")
        for p in (float(v) for v in args.emit_quantiles.split(",")):
            print(f"{p!r},{quantile(law, p)!r}")
    return 0


def cmd_ci(args):
    pairs = read_pairs(args.input)
    data = RawSample(pairs[:, 0], pairs[:, 1], args.seed, float("nan"))
    if args.method == "hulc":
        ci = hulc_ci(data, args.x0, args.alpha, args.seed)
    elif args.method == "subsample":
        ci = subsample_ci(data, args.x0, args.alpha, args.seed)
    else:
        if args.theta is None:
            raise IsoInferError("the oracle pivot needs --theta")
        if args.law:
            law = read_draws(args.law)
        else:
            drift = chernoff_drift(args.theta)
            law = sample_slgcm_zero(drift, law_grid(drift), args.law_draws, master_seed=args.seed).draws
        ci = oracle_pivot_ci(data, args.x0, args.alpha, args.theta, args.A, args.h0, args.sigma2, law)
    _emit(ci.as_record())
    return 0


def cmd_experiment(args):
    cfg = ExperimentConfig.load(args.config)
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    if args.out_dir:
        cfg = replace(cfg, out_dir=args.out_dir)
    _, gates = run_config(cfg)
    failed = [g for g in gates if not g.passed]
    for g in gates:
        print(f"{'PASS' if g.passed else 'FAIL'} {g.gate['statistic']} {g.gate['op']} {g.gate['value']}: {g.detail}")
    return EXIT_GATE_FAILED if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isoinfer", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="isotonic fit of an x,y CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--diagnostics", help="append the diagnostics record here instead of stdout")
    p.add_argument("--tie-seed", type=int, default=0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gen", help="draw a sample from a named model")
    p.add_argument("--dgp", choices=DGP_NAMES, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta", type=float, default=2.0)
    p.add_argument("--A", type=float, default=1.0)
    p.add_argument("--alpha", type=float, help="rate exponent for --dgp rates")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--heteroscedastic", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--meta", help="append the metadata record here instead of stdout")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("sample-limit", help="Monte Carlo draws of a limit law")
    p.add_argument("--drift", choices=("wright", "slowvar", "asym", "nearflat", "chernoff", *SHAPES), required=True)
    p.add_argument("--A", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--A1", type=float, default=1.0)
    p.add_argument("--theta1", type=float, default=1.0)
    p.add_argument("--A2", type=float, default=1.0)
    p.add_argument("--theta2", type=float, default=1.0)
    p.add_argument("--coeffs", default="1", help="comma-separated a_1,a_2,... for nearflat")
    p.add_argument("--h0", type=float, default=0.5)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--T", type=float)
    p.add_argument("--n-pts", type=int)
    p.add_argument("--max-doublings", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-quantiles", help="comma-separated probabilities; table printed to stdout")
    p.set_defaults(func=cmd_sample_limit)

    p = sub.add_parser("ci", help="confidence interval at a point")
    p.add_argument("--method", choices=("hulc", "subsample", "oracle"), required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--input", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta", type=float)
    p.add_argument("--A", type=float, default=1.0)
    p.add_argument("--h0", type=float, default=0.5)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--law", help="file of limit-law draws, one per line")
    p.add_argument("--law-draws", type=int, default=20_000)
    p.set_defaults(func=cmd_ci)

    p = sub.add_parser("experiment", help="run a study from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IsoInferError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
