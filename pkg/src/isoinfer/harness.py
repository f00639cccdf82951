"""Simulation studies: rates, drift shapes, QQ agreement, coverage, boundedness.

Every study produces tidy rows ``(study, cell, statistic, value, mc_se)``.
Replication ``r`` of a cell draws its data from the stream keyed by
``(master_seed, study, cell, r)``, so output does not depend on how work is
split across processes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
from scipy.special import gamma

from . import __version__
from .data_gen import SHAPES, named_dgp, draw
from .errors import DegenerateSubsampling, InvalidInput
from .inference import hulc_ci, oracle_pivot_ci, subsample_ci
from .isotonic import diagnostics, fit_value_at, pava, sort_xy
from .limit_law import GridConfig, chernoff_drift, default_grid, sample_slgcm_zero
from .stats import binomial_se, ks_2samp_stat, ks_critical, ols_slope

STUDIES = ("rates", "shapes", "coverage", "qq", "boundedness")
RATE_ALPHAS = (1 / 6, 2 / 6, 3 / 6, 4 / 6, 5 / 6)
COVERAGE_THETAS = (0.2, 0.5, 1.0, 2.0, 5.0, 10.0)
QQ_NAMES = ("wright", "slowvar", "asym", "nearflat", "psi1", "psi2", "psi3", "psi4")
LAW_MAX_DOUBLINGS = 8


def default_n_grid(k: int = 8, lo: float = 6.5, hi: float = 10.0) -> list:
    """``k`` sample sizes equally spaced in log from ``e^lo`` to ``e^hi``."""
    return [int(round(v)) for v in np.exp(np.linspace(lo, hi, k))]


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["study", "dgp", "n_grid", "replications", "master_seed", "out_dir"],
    "properties": {
        "study": {"type": "string", "enum": [s for s in STUDIES] + [s.capitalize() for s in STUDIES] + ["QQ"]},
        "dgp": {
            "type": "object",
            "properties": {
                "name": {"type": "string"},
                "theta": {"type": "number", "exclusiveMinimum": 0},
                "A": {"type": "number", "exclusiveMinimum": 0},
                "sigma": {"type": "number", "minimum": 0},
                "heteroscedastic": {"type": "boolean"},
                "alphas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
                "shapes": {"type": "array", "items": {"type": "string"}},
                "names": {"type": "array", "items": {"type": "string"}},
                "thetas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "methods": {"type": "array", "items": {"enum": ["HulC", "Subsample", "OraclePivot"]}},
            },
        },
        "n_grid": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "replications": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "p": {"type": "number", "exclusiveMinimum": 1, "maximum": 2},
        "law_draws": {"type": "integer", "minimum": 1},
        "qq_draws": {"type": "integer", "minimum": 1},
        "assert": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["statistic", "op", "value"],
                "properties": {
                    "cell": {"type": "string"},
                    "statistic": {"type": "string"},
                    "op": {"enum": ["<", "<=", ">", ">=", "==", "abs<="]},
                    "value": {"type": "number"},
                    "ref": {"type": "number"},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    study: str
    dgp: dict = field(default_factory=dict)
    n_grid: tuple = field(default_factory=lambda: tuple(default_n_grid()))
    replications: int = 500
    master_seed: int = 0
    out_dir: str = "results"
    workers: int = 1
    alpha: float = 0.05
    p: float = 2.0
    law_draws: Optional[int] = None
    qq_draws: int = 500
    gates: tuple = ()

    def __post_init__(self):
        study = "qq" if self.study == "QQ" else self.study.lower()
        object.__setattr__(self, "study", study)
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "gates", tuple(self.gates))
        if study not in STUDIES:
            raise InvalidInput(f"unknown study {self.study!r}")
        if self.replications < 1:
            raise InvalidInput("replications must be at least 1")
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise InvalidInput("n_grid must be non-empty and increasing")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as e:
            raise InvalidInput(f"invalid experiment config: {e.message}") from None
        d = dict(d)
        gates = d.pop("assert", ())
        return cls(gates=tuple(gates), **d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_grid"] = list(self.n_grid)
        d["assert"] = list(d.pop("gates"))
        return {k: v for k, v in d.items() if v is not None}

    def digest(self) -> str:
        """Hash of everything that can change the numbers (not paths or workers)."""
        d = self.to_dict()
        for k in ("out_dir", "workers", "assert"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Row:
    study: str
    cell: str
    statistic: str
    value: float
    mc_se: float = float("nan")


@dataclass
class ExperimentResult:
    rows: list
    provenance: dict
    qq: list = field(default_factory=list)
    cells: list = field(default_factory=list)

    def get(self, statistic: str, cell: Optional[str] = None) -> Row:
        hits = self.select(statistic, cell)
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {statistic!r} in cell {cell!r}")
        return hits[0]

    def select(self, statistic: str, cell: Optional[str] = None) -> list:
        return [r for r in self.rows if r.statistic == statistic and (cell is None or r.cell == cell)]


def cell_key(**parts) -> str:
    return ";".join(f"{k}={_fmt(v)}" for k, v in parts.items())


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


# ---------------------------------------------------------------------------
# Worker units (top-level so they pickle)


def _errors_chunk(name, n, params, keys, reps):
    """Estimation errors ``f_hat(x0) - f(x0)`` for replications ``reps``."""
    nd = named_dgp(name, n, **params)
    out = np.empty(len(reps))
    for i, r in enumerate(reps):
        s = draw(nd.dgp, (*keys, int(r)))
        out[i] = fit_value_at(s.xs, s.ys, nd.dgp.x0) - s.truth_at_x0
    return out


def _supnorm_chunk(name, n, params, keys, reps):
    nd = named_dgp(name, n, **params)
    out = np.empty(len(reps))
    for i, r in enumerate(reps):
        s = draw(nd.dgp, (*keys, int(r)))
        ss = sort_xy(s.xs, s.ys)
        out[i] = diagnostics(ss, pava(ss).step).sup_norm
    return out


def _coverage_chunk(theta, n, keys, methods, alpha, law_draws, reps):
    nd = named_dgp("wright", n, theta=theta)
    h0, s2 = nd.drift.h0, nd.drift.sigma0_sq
    cover = np.full((len(reps), len(methods)), np.nan)
    width = np.full((len(reps), len(methods)), np.nan)
    for i, r in enumerate(reps):
        s = draw(nd.dgp, (*keys, int(r)))
        for j, m in enumerate(methods):
            seed = (*keys, int(r), m)
            try:
                if m == "HulC":
                    ci = hulc_ci(s, 0.0, alpha, seed)
                elif m == "Subsample":
                    ci = subsample_ci(s, 0.0, alpha, seed)
                else:
                    ci = oracle_pivot_ci(s, 0.0, alpha, theta, nd.drift.kind.A, h0, s2, law_draws)
            except DegenerateSubsampling:
                continue
            cover[i, j] = ci.contains(s.truth_at_x0)
            width[i, j] = ci.width
    return cover, width


def _map_reps(fn, args, replications, workers, chunk=50):
    """Apply ``fn(*args, reps)`` over replication chunks and concatenate in order."""
    chunks = [np.arange(a, min(a + chunk, replications)) for a in range(0, replications, chunk)]
    if workers <= 1:
        parts = [fn(*args, c) for c in chunks]
    else:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(fn, *zip(*[(*args, c) for c in chunks])))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)


def _dgp_params(cfg, *drop) -> dict:
    keep = ("theta", "A", "sigma", "heteroscedastic")
    return {k: v for k, v in cfg.dgp.items() if k in keep and k not in drop}


def law_grid(drift) -> GridConfig:
    """Default grid with room for the heavier window extensions of flat shapes."""
    g = default_grid(drift)
    return GridConfig(g.T, g.n_pts, LAW_MAX_DOUBLINGS)


# ---------------------------------------------------------------------------
# Studies


def _mse_curve(cfg, name, params, cell_parts, rows, study):
    """MSE rows along ``cfg.n_grid``; returns ``(n, mse)`` arrays."""
    mses = []
    for n in cfg.n_grid:
        cell = cell_key(**cell_parts, n=n)
        err = _map_reps(_errors_chunk, (name, n, params, (cfg.master_seed, study, cell)), cfg.replications, cfg.workers)
        sq = err**2
        mse = float(np.mean(sq))
        se = float(np.std(sq, ddof=1) / math.sqrt(len(sq))) if len(sq) > 1 else float("nan")
        rows.append(Row(study, cell, "mse", mse, se))
        rows.append(Row(study, cell, "log_mse", math.log(mse), se / mse))
        mses.append(mse)
    return np.asarray(cfg.n_grid, dtype=float), np.asarray(mses)


def run_rates(cfg: ExperimentConfig) -> ExperimentResult:
    """Same local shape, different localisation rates ``s_n = n^alpha``."""
    if cfg.study != "rates":
        raise InvalidInput("run_rates needs study 'rates'")
    alphas = cfg.dgp.get("alphas", RATE_ALPHAS)
    params = _dgp_params(cfg, "theta")
    rows = []
    slopes_sn = []
    for a in alphas:
        part = {"alpha": float(a)}
        ns, mse = _mse_curve(cfg, "rates", {**params, "alpha": float(a)}, part, rows, "rates")
        cell = cell_key(**part)
        if len(ns) > 1:
            b, se = ols_slope(np.log(ns), np.log(mse))
            rows.append(Row("rates", cell, "slope_log_n", b, se))
            rows.append(Row("rates", cell, "slope_log_n_minus_target", b - (a - 1.0), se))
            b2, se2 = ols_slope(np.log(ns / ns**a), np.log(mse))
            rows.append(Row("rates", cell, "slope_log_n_over_sn", b2, se2))
            slopes_sn.append(b2)
    if len(slopes_sn) > 1:
        spread = float(max(slopes_sn) - min(slopes_sn))
        rows.append(Row("rates", "all", "max_pairwise_diff_slope_log_n_over_sn", spread))
    return _result(cfg, rows)


def _law_draws(drift, count, keys):
    seed = _seed_int(*keys)
    return sample_slgcm_zero(drift, law_grid(drift), count, master_seed=seed).draws


def _seed_int(*keys) -> int:
    from .rng import rng_for

    return int(rng_for(*keys).integers(2**62))


def _qq_cell(cfg, name, n, study, cell, rows, qq, **dgp_params):
    """KS and quantile pairs of scaled estimator draws against limit-law draws."""
    nd = named_dgp(name, n, **dgp_params)
    m = cfg.qq_draws
    err = _map_reps(_errors_chunk, (name, n, dgp_params, (cfg.master_seed, study, cell, "qq")), m, cfg.workers)
    scaled = nd.drift.scale * math.sqrt(n / nd.rate(n)) * err
    law = _law_draws(nd.drift, cfg.law_draws or m, (cfg.master_seed, study, cell, "law"))
    ks = ks_2samp_stat(scaled, law)
    crit = ks_critical(len(scaled), len(law), 0.001)
    rows.append(Row(study, cell, "qq_ks", ks))
    rows.append(Row(study, cell, "qq_ks_critical", crit))
    rows.append(Row(study, cell, "qq_ks_margin", crit - ks))
    probs = (np.arange(1, m + 1) - 0.5) / m
    qe = np.quantile(scaled, probs)
    ql = np.quantile(law, probs)
    qq.extend((cell, float(p), float(a), float(b)) for p, a, b in zip(probs, qe, ql))


def run_shapes(cfg: ExperimentConfig) -> ExperimentResult:
    """MSE slopes and QQ agreement for local shapes sharing ``s_n = n^(1/3)``."""
    if cfg.study != "shapes":
        raise InvalidInput("run_shapes needs study 'shapes'")
    shapes = cfg.dgp.get("shapes", list(SHAPES))
    params = _dgp_params(cfg, "theta", "A")
    rows, qq = [], []
    for k in shapes:
        ns, mse = _mse_curve(cfg, k, params, {"shape": k}, rows, "shapes")
        cell = cell_key(shape=k)
        if len(ns) > 1:
            b, se = ols_slope(np.log(ns), np.log(mse))
            rows.append(Row("shapes", cell, "slope_log_n", b, se))
            rows.append(Row("shapes", cell, "slope_log_n_minus_target", b + 2.0 / 3.0, se))
        n_qq = cfg.n_grid[-1]
        _qq_cell(cfg, k, n_qq, "shapes", cell_key(shape=k, n=n_qq), rows, qq, **params)
    return _result(cfg, rows, qq)


def run_qq(cfg: ExperimentConfig) -> ExperimentResult:
    """QQ agreement at the largest ``n`` for several limit laws."""
    if cfg.study != "qq":
        raise InvalidInput("run_qq needs study 'qq'")
    names = cfg.dgp.get("names", list(QQ_NAMES))
    params = _dgp_params(cfg)
    rows, qq = [], []
    n = cfg.n_grid[-1]
    for name in names:
        p = dict(params) if name in ("wright", "slowvar") else _strip(params, "theta", "A")
        _qq_cell(cfg, name, n, "qq", cell_key(dgp=name, n=n), rows, qq, **p)
    return _result(cfg, rows, qq)


def _strip(d, *keys):
    return {k: v for k, v in d.items() if k not in keys}


def run_coverage(cfg: ExperimentConfig) -> ExperimentResult:
    """Coverage and width of the three intervals on fixed power-type means."""
    if cfg.study != "coverage":
        raise InvalidInput("run_coverage needs study 'coverage'")
    thetas = cfg.dgp.get("thetas", COVERAGE_THETAS)
    methods = tuple(cfg.dgp.get("methods", ("HulC", "Subsample", "OraclePivot")))
    rows = []
    for th in thetas:
        law = None
        if "OraclePivot" in methods:
            law = _law_draws(chernoff_drift(th), cfg.law_draws or 20_000, (cfg.master_seed, "coverage", th, "law"))
        for n in cfg.n_grid:
            base = cell_key(theta=float(th), n=n)
            args = (float(th), n, (cfg.master_seed, "coverage", base), methods, cfg.alpha, law)
            cover, width = _map_reps(_coverage_chunk, args, cfg.replications, cfg.workers, chunk=25)
            for j, m in enumerate(methods):
                cell = cell_key(method=m, theta=float(th), n=n)
                ok = ~np.isnan(cover[:, j])
                k = int(ok.sum())
                rows.append(Row("coverage", cell, "valid_reps", k))
                if k == 0:
                    continue
                c = float(np.mean(cover[ok, j]))
                w = width[ok, j]
                rows.append(Row("coverage", cell, "coverage", c, binomial_se(c, k)))
                w_se = float(np.std(w, ddof=1) / math.sqrt(k)) if k > 1 else float("nan")
                rows.append(Row("coverage", cell, "mean_width", float(np.mean(w)), w_se))
                rows.append(Row("coverage", cell, "median_width", float(np.median(w))))
    return _result(cfg, rows)


def abs_moment(p: float) -> float:
    """``(E|Z|^p)^(1/p)`` for standard normal ``Z``."""
    return (2 ** (p / 2) * gamma((p + 1) / 2) / math.sqrt(math.pi)) ** (1 / p)


def sup_norm_constant(p: float) -> float:
    return 2 ** (2 + 1 / p) / (2 ** (p - 1) - 1) ** (1 / p)


def run_boundedness(cfg: ExperimentConfig) -> ExperimentResult:
    """Moment of the sup-norm of the fit against its distribution-free bound."""
    if cfg.study != "boundedness":
        raise InvalidInput("run_boundedness needs study 'boundedness'")
    name = cfg.dgp.get("name", "wright")
    params = _dgp_params(cfg)
    if name not in ("wright", "slowvar"):
        params = _strip(params, "theta", "A")
    p = cfg.p
    rows = []
    probe = np.linspace(-1.0, 1.0, 20_001)
    for n in cfg.n_grid:
        nd = named_dgp(name, n, **params)
        mu_sup = float(np.max(np.abs(nd.dgp.mean()(probe))))
        eta_sup = float(np.max(nd.dgp.noise.sd(probe))) * abs_moment(p)
        bound = mu_sup + sup_norm_constant(p) * eta_sup
        cell = cell_key(dgp=name, n=n)
        sup = _map_reps(_supnorm_chunk, (name, n, params, (cfg.master_seed, "boundedness", cell)),
                        cfg.replications, cfg.workers)
        m = float(np.mean(sup**p))
        val = m ** (1 / p)
        se_m = float(np.std(sup**p, ddof=1) / math.sqrt(len(sup))) if len(sup) > 1 else float("nan")
        rows.append(Row("boundedness", cell, "moment", val, se_m / (p * m ** (1 - 1 / p))))
        rows.append(Row("boundedness", cell, "bound", bound))
        rows.append(Row("boundedness", cell, "mu_sup", mu_sup))
        rows.append(Row("boundedness", cell, "bound_minus_moment", bound - val))
    return _result(cfg, rows)


RUNNERS = {
    "rates": run_rates,
    "shapes": run_shapes,
    "qq": run_qq,
    "coverage": run_coverage,
    "boundedness": run_boundedness,
}


def run(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.study](cfg)


def _result(cfg, rows, qq=()):
    cells = sorted({r.cell for r in rows})
    prov = {"config_hash": cfg.digest(), "master_seed": cfg.master_seed, "version": __version__}
    return ExperimentResult(rows, prov, list(qq), cells)


# ---------------------------------------------------------------------------
# Output and gates


def write_outputs(cfg: ExperimentConfig, res: ExperimentResult) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"results": out / f"{cfg.study}.csv", "manifest": out / f"{cfg.study}_manifest.jsonl"}
    with open(paths["results"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["study", "cell", "statistic", "value", "mc_se"])
        for r in res.rows:
            w.writerow([r.study, r.cell, r.statistic, repr(float(r.value)), repr(float(r.mc_se))])
    if res.qq:
        paths["qq"] = out / f"{cfg.study}_qq.csv"
        with open(paths["qq"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell", "p", "estimator_quantile", "law_quantile"])
            for cell, p, a, b in res.qq:
                w.writerow([cell, repr(p), repr(a), repr(b)])
    with open(paths["manifest"], "w") as fh:
        head = {"record": "run", **res.provenance, "study": cfg.study, "config": cfg.to_dict()}
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for cell in res.cells:
            rec = {"record": "cell", "cell": cell, "seed_keys": [cfg.master_seed, cfg.study, cell],
                   "replications": cfg.replications}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return paths


_OPS = {
    "<": lambda v, t, ref: v < t,
    "<=": lambda v, t, ref: v <= t,
    ">": lambda v, t, ref: v > t,
    ">=": lambda v, t, ref: v >= t,
    "==": lambda v, t, ref: v == t,
    "abs<=": lambda v, t, ref: abs(v - ref) <= t,
}


@dataclass(frozen=True)
class GateOutcome:
    gate: dict
    passed: bool
    detail: str


def check_gates(res: ExperimentResult, gates) -> list:
    """Evaluate ``assert`` gates; a gate matching no row fails."""
    out = []
    for g in gates:
        rows = res.select(g["statistic"], g.get("cell"))
        fn = _OPS[g["op"]]
        bad = [r for r in rows if not fn(r.value, g["value"], g.get("ref", 0.0))]
        passed = bool(rows) and not bad
        detail = f"{len(rows)} rows, {len(bad)} failing" + (f": {bad[0].cell}={bad[0].value:.6g}" if bad else "")
        out.append(GateOutcome(dict(g), passed, detail))
    return out


def run_config(cfg: ExperimentConfig, write: bool = True):
    res = run(cfg)
    if write:
        write_outputs(cfg, res)
    return res, check_gates(res, cfg.gates)


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))
