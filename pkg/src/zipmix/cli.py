"""Command-line interface: ingest, fit, compare and run coverage studies.

Every report echoes the effective configuration.  Option precedence is
command-line flag > ``--config`` JSON file > built-in default.  The default
output directory comes from ``ZIPMIX_OUTPUT_DIR`` (else the working directory).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._em import standard_errors
from .conjugate import PosteriorPhi, empirical_bayes_mixture, empirical_bayes_zipm, phi_credible_interval
from .em_mixture import ci_theta_mixture, fit_em_mixture, observed_info_mixture
from .em_zipm import ci_theta_zipm, fit_em_zipm, observed_info_zipm
from .errors import (NegativeCount, NotConvergedWarning, ParseError, RaggedRows, ZipmixError)
from .integrated import (integrated_loglik_given_y, integrated_loglik_mixture, integrated_loglik_n,
                         integrated_loglik_zn, mcmc_posterior_theta)
from .model import DataSet, ExposureGrid, ModelParams, PriorSpec, validate_params
from .observed import (ci_theta_arcsine, ci_theta_lognormal, conjugate_posterior_observed, mile,
                       mle_observed, split_from_data)
from .simulate import SimConfig, simulate_dataset
from .ztp import ztp_discrepancy_report

SCHEMA_VERSION = "1.0"
OUTPUT_ENV = "ZIPMIX_OUTPUT_DIR"

__all__ = [
    "SCHEMA_VERSION",
    "ingest_counts",
    "export_counts",
    "emit_report",
    "run_coverage_study",
    "build_parser",
    "main",
]


# ---------------------------------------------------------------- ingest / export

def _parse_float(text, line, col):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {text!r} as a number", line, col) from None
    return v


def _parse_count(text, line, col):
    text = text.strip()
    try:
        v = int(text)
    except ValueError:
        f = _parse_float(text, line, col)
        if not f.is_integer():
            raise ParseError(f"count {text!r} is not an integer", line, col) from None
        v = int(f)
    if v < 0:
        raise NegativeCount(f"negative count {v}", line, col)
    return v


def _ingest_csv(text: str):
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(k + 1, r) for k, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError("empty file", 1)
    hline, header = rows[0]
    if header[0].strip() != "t":
        raise ParseError("header must start with 't'", hline, 1)
    J = len(header) - 1
    if J < 1:
        raise ParseError("header names no sites", hline)
    if len(rows) < 2:
        raise ParseError("no data rows", hline + 1)
    t, n = [], []
    for line, r in rows[1:]:
        if len(r) != J + 1:
            raise RaggedRows(f"row has {len(r)} fields, expected {J + 1}", line)
        t.append(_parse_float(r[0], line, 1))
        n.append([_parse_count(c, line, k + 2) for k, c in enumerate(r[1:])])
    return t, n, None


def _ingest_json(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict) or "t" not in doc or "n" not in doc:
        raise ParseError("JSON input needs keys 't' and 'n'")
    t, n = doc["t"], doc["n"]
    if not isinstance(n, list) or not n or not all(isinstance(r, list) for r in n):
        raise ParseError("'n' must be a non-empty list of rows")
    J = len(n[0])
    for i, r in enumerate(n):
        if len(r) != J:
            raise RaggedRows(f"row {i} has {len(r)} entries, expected {J}", i + 1)
        for j, v in enumerate(r):
            if not float(v).is_integer():
                raise ParseError(f"count {v!r} is not an integer", i + 1, j + 1)
            if v < 0:
                raise NegativeCount(f"negative count {v}", i + 1, j + 1)
    if len(t) != len(n):
        raise ParseError(f"'t' has {len(t)} entries but 'n' has {len(n)} rows")
    return [float(v) for v in t], [[int(v) for v in r] for r in n], doc.get("y")


def ingest_counts(path, format: str | None = None):
    """Read a count table.  Returns (DataSet, ExposureGrid).

    CSV: header ``t,s1,...,sJ`` then one row per day.  JSON: ``{"t": [...],
    "n": [[...], ...]}`` with an optional site-label list ``"y"``.
    """
    path = Path(path)
    fmt = format or ("json" if path.suffix.lower() == ".json" else "csv")
    text = path.read_text()
    if fmt == "csv":
        t, n, y = _ingest_csv(text)
    elif fmt == "json":
        t, n, y = _ingest_json(text)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    arr = np.array(n, dtype=np.int64)
    g = ExposureGrid(np.array(t), arr.shape[1])
    return DataSet(n=arr, y=None if y is None else np.asarray(y)), g


def export_counts(d: DataSet, g: ExposureGrid, path, format: str = "csv") -> None:
    """Write the canonical form read back by :func:`ingest_counts`."""
    path = Path(path)
    if format == "csv":
        lines = ["t," + ",".join(f"s{j + 1}" for j in range(g.J))]
        for ti, row in zip(g.t, d.n):
            lines.append(repr(float(ti)) + "," + ",".join(str(int(v)) for v in row))
        path.write_text("\n".join(lines) + "\n")
    elif format == "json":
        doc = {"t": [float(v) for v in g.t], "n": d.n.tolist()}
        if d.y is not None:
            doc["y"] = d.y.tolist()
        path.write_text(json.dumps(doc) + "\n")
    else:
        raise ValueError(f"unknown format {format!r}")


# ---------------------------------------------------------------- reports

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, ModelParams):
        return {"pi": x.pi, "eps": x.eps, "mu": x.mu, "nu": x.nu, "theta": x.theta}
    if hasattr(x, "as_dict"):
        return _jsonable(x.as_dict())
    return x


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def emit_report(results, path, format: str = "json") -> Path:
    """Write a JSON document (with ``schema_version``) or a CSV table.

    For CSV, ``results`` is ``{"columns": [...], "rows": [[...], ...]}`` or a list
    of flat dicts; floats carry 17 significant digits.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if format == "json":
        doc = {"schema_version": SCHEMA_VERSION}
        doc.update(_jsonable(results))
        path.write_text(json.dumps(doc, indent=2) + "\n")
    elif format == "csv":
        if isinstance(results, dict):
            cols, rows = list(results["columns"]), results["rows"]
        else:
            cols = list(results[0].keys()) if results else []
            rows = [[r[c] for c in cols] for r in results]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        path.write_text(buf.getvalue())
    else:
        raise ValueError(f"unknown format {format!r}")
    return path


# ---------------------------------------------------------------- configuration

DEFAULTS = {
    "I": 20, "J": 100, "t": None, "pi": 0.3, "eps": 0.8, "mu": 6.0, "nu": 2.0,
    "seed": 0, "replicates": 1, "level": 0.95, "tol": 1e-8, "max_iter": 5000,
    "alpha": 1.0, "beta": 1.0, "delta": 1.0, "eta": 1.0, "kappa": 1.0,
    "improper": False, "clamp_eps": False, "regime": "mixture", "format": "json",
    "theta_min": 0.05, "theta_max": 20.0, "points": 50, "mode": "exact", "samples": 2000,
    "proposal_sd": 0.5, "n_samples": 5000, "x_max": 10, "workers": 1,
    "estimators": "lognormal,arcsine,mixture,zipm,eb-mixture,eb-zipm",
    "input": None, "input_format": None, "labels": None, "output": None,
    "with_latent": False,
}


def _effective(args, command: str) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"config is not valid JSON: {exc.msg}", exc.lineno, exc.colno) from None
        cfg.update({k.replace("-", "_"): v for k, v in file_cfg.items()})
    for k, v in vars(args).items():
        if k in ("config", "func") or v is None:
            continue
        cfg[k] = v
    cfg["command"] = command
    return cfg


def _output_dir(cfg) -> Path:
    out = cfg.get("output_dir") or os.environ.get(OUTPUT_ENV) or "."
    return Path(out)


def _out_path(cfg, stem, ext) -> Path:
    if cfg.get("output"):
        return Path(cfg["output"])
    return _output_dir(cfg) / f"{stem}.{ext}"


def _grid_from_cfg(cfg) -> ExposureGrid:
    t = cfg.get("t")
    if t is None:
        return ExposureGrid.uniform(int(cfg["I"]), int(cfg["J"]))
    if isinstance(t, str):
        t = [float(v) for v in t.split(",")]
    t = np.asarray(t, dtype=float)
    if t.size != int(cfg["I"]):
        # a short t-vector is repeated to fill I days
        t = np.resize(t, int(cfg["I"]))
    return ExposureGrid(t, int(cfg["J"]))


def _params_from_cfg(cfg) -> ModelParams:
    return ModelParams(float(cfg["pi"]), float(cfg["eps"]), float(cfg["mu"]), float(cfg["nu"]))


def _prior_from_cfg(cfg) -> PriorSpec:
    return PriorSpec(delta=float(cfg["delta"]), alpha=float(cfg["alpha"]), beta=float(cfg["beta"]),
                     eta=float(cfg["eta"]), kappa=float(cfg["kappa"]))


def _load_input(cfg):
    if not cfg.get("input"):
        raise ParseError("--input is required for this command")
    d, g = ingest_counts(cfg["input"], cfg.get("input_format"))
    labels = cfg.get("labels")
    if labels is not None:
        if isinstance(labels, str):
            labels = [int(v) for v in labels.split(",")]
        d = DataSet(n=d.n, y=np.asarray(labels))
    return d, g


def _jsonable_cfg(cfg):
    return {k: v for k, v in cfg.items() if k not in ("func",)}


# ---------------------------------------------------------------- fitting helpers

def _fit_report(fit, info, level, names, ci_fn):
    out = {
        "params": fit.params,
        "theta": fit.theta,
        "loglik": fit.loglik,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "boundary": fit.boundary,
        "loglik_trace": fit.loglik_trace,
    }
    if info is not None:
        out["information"] = {"order": names, "matrix": info}
        try:
            out["standard_errors"] = dict(zip(names, standard_errors(info)))
        except ZipmixError as exc:
            out["standard_errors_error"] = str(exc)
        try:
            out["ci_theta"] = ci_fn(fit, info, level)
        except ZipmixError as exc:
            out["ci_theta_error"] = f"{type(exc).__name__}: {exc}"
    return out


def _info_or_none(fn, *args):
    try:
        return fn(*args)
    except ZipmixError:
        return None


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg):
    g = _grid_from_cfg(cfg)
    sc = SimConfig(g, _params_from_cfg(cfg), seed=int(cfg["seed"]), replicates=int(cfg["replicates"]))
    outdir = _output_dir(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for r in range(sc.replicates):
        d = simulate_dataset(sc, r)
        p = outdir / f"sim_{r:04d}.csv"
        export_counts(d, g, p, "csv")
        files.append(str(p))
        if cfg.get("with_latent"):
            lat = {"replicate": r, "y": d.y, "z": d.z, "m": d.m, "n": d.n, "t": g.t}
            emit_report(lat, outdir / f"sim_{r:04d}_latent.json", "json")
    return {"files": files}


def cmd_fit_observed(cfg):
    d, g = _load_input(cfg)
    if d.y is None:
        raise ParseError("fit-observed needs site labels (--labels or 'y' in JSON input)")
    level = float(cfg["level"])
    s = split_from_data(d, g)
    out = {"split": {"r": s.r, "m_S": s.m_S, "m_T": s.m_T, "K_tbar": s.K_tbar}}
    mu, nu, th = mle_observed(s)
    out["mle"] = {"mu": mu, "nu": nu, "theta": th}
    for name, fn in (("ci_lognormal", ci_theta_lognormal), ("ci_arcsine", ci_theta_arcsine)):
        try:
            out[name] = fn(s, level)
        except ZipmixError as exc:
            out[name + "_error"] = str(exc)
    out["mile"] = mile(s, float(cfg["delta"]), level)
    prior = _prior_from_cfg(cfg)
    post = conjugate_posterior_observed(s, prior)
    out["posterior"] = {"a": post.a, "b": post.b, "scale_Kt": post.scale_Kt, "r": post.r,
                        "interval": phi_credible_interval(post, level),
                        "point_is_mean": post.has_mean}
    return out


def cmd_fit_mixture(cfg):
    d, g = _load_input(cfg)
    m = DataSet(n=d.mixture_counts)
    fit = fit_em_mixture(m, g, tol=float(cfg["tol"]), max_iter=int(cfg["max_iter"]))
    info = _info_or_none(observed_info_mixture, m, g, fit.params)
    return _fit_report(fit, info, float(cfg["level"]), ["pi", "mu", "nu"], ci_theta_mixture)


def cmd_fit_zipm(cfg):
    d, g = _load_input(cfg)
    fit = fit_em_zipm(d, g, tol=float(cfg["tol"]), max_iter=int(cfg["max_iter"]),
                      clamp_eps=bool(cfg["clamp_eps"]))
    info = _info_or_none(observed_info_zipm, d, g, fit.params)
    return _fit_report(fit, info, float(cfg["level"]), ["pi", "eps", "mu", "nu"], ci_theta_zipm)


def cmd_fit_eb(cfg):
    d, g = _load_input(cfg)
    prior = _prior_from_cfg(cfg)
    level = float(cfg["level"])
    if cfg["regime"] == "mixture":
        fit = fit_em_mixture(d, g, tol=float(cfg["tol"]), max_iter=int(cfg["max_iter"]))
        eb = empirical_bayes_mixture(d, g, fit, prior, improper=bool(cfg["improper"]))
    elif cfg["regime"] == "zipm":
        fit = fit_em_zipm(d, g, tol=float(cfg["tol"]), max_iter=int(cfg["max_iter"]),
                          clamp_eps=bool(cfg["clamp_eps"]))
        eb = empirical_bayes_zipm(d, g, fit, prior=prior, improper=bool(cfg["improper"]))
    else:
        raise ParseError(f"unknown regime {cfg['regime']!r}")
    post = eb.posterior
    return {"em_params": fit.params, "estimate": eb.estimate, "stats": eb.stats,
            "posterior": {"a": post.a, "b": post.b, "scale_Kt": post.scale_Kt, "r": post.r},
            "interval": phi_credible_interval(post, level)}


def _curve_fn(cfg, d, g):
    prior = _prior_from_cfg(cfg)
    regime = cfg["regime"]
    if regime == "given-y":
        if d.y is None:
            raise ParseError("regime given-y needs site labels")
        return lambda th: integrated_loglik_given_y(d, g, d.y, prior.delta, th)
    if regime == "mixture":
        return lambda th: integrated_loglik_mixture(d, g, prior, th)
    if regime == "zn":
        z = (d.n > 0).astype(int)
        return lambda th: integrated_loglik_zn(d, z, g, prior, th)
    if regime == "n":
        mode = cfg["mode"]
        return lambda th: integrated_loglik_n(d, g, prior, th, mode=mode, samples=int(cfg["samples"]),
                                              seed=int(cfg["seed"]))[0]
    raise ParseError(f"unknown regime {regime!r}")


def cmd_loglik_curve(cfg):
    d, g = _load_input(cfg)
    fn = _curve_fn(cfg, d, g)
    thetas = np.geomspace(float(cfg["theta_min"]), float(cfg["theta_max"]), int(cfg["points"]))
    rows = [[float(th), float(fn(th))] for th in thetas]
    p = _out_path(cfg, "loglik_curve", "csv")
    emit_report({"columns": ["theta", "loglik"], "rows": rows}, p, "csv")
    return {"curve_csv": str(p), "points": len(rows)}


def cmd_posterior_mcmc(cfg):
    d, g = _load_input(cfg)
    fn = _curve_fn(cfg, d, g)
    prior = _prior_from_cfg(cfg)
    phi = PosteriorPhi(a=prior.alpha, b=prior.beta, scale_Kt=g.K * g.tbar, r=0.5)
    chain = mcmc_posterior_theta(fn, lambda th: float(phi.logpdf(th)), int(cfg["n_samples"]),
                                 proposal_sd=float(cfg["proposal_sd"]), seed=int(cfg["seed"]))
    p = _output_dir(cfg) / "chain.csv"
    emit_report({"columns": ["iteration", "theta"],
                 "rows": [[k, float(v)] for k, v in enumerate(chain.samples)]}, p, "csv")
    s = chain.samples
    return {"chain_csv": str(p), "acceptance_rate": chain.acceptance_rate, "burn_in": chain.burn_in,
            "mean": float(s.mean()), "median": float(np.median(s)),
            "quantiles": {"0.025": float(np.quantile(s, 0.025)), "0.975": float(np.quantile(s, 0.975))},
            "prior": {"alpha": prior.alpha, "beta": prior.beta, "scale_Kt": phi.scale_Kt, "r": 0.5}}


def cmd_ztp_compare(cfg):
    p = ModelParams(float(cfg["pi"]), float(cfg["eps"]), float(cfg["mu"]), float(cfg["nu"]))
    t = cfg.get("t")
    t = 1.0 if t is None else float(t if not isinstance(t, (list, str)) else str(t).split(",")[0])
    rep = ztp_discrepancy_report(p, t, int(cfg["x_max"]))
    rows = [[x, c, m, dd] for x, c, m, dd in zip(rep["x"], rep["conditional_zipm"],
                                                 rep["ztp_mixture"], rep["difference"])]
    path = _out_path(cfg, "ztp_compare", "csv")
    emit_report({"columns": ["x", "conditional_zipm", "ztp_mixture", "difference"], "rows": rows},
                path, "csv")
    return {"csv": str(path), "max_abs_difference": rep["max_abs_difference"],
            "sign_changes": rep["sign_changes"], "identity_root": rep["identity_root"]}


# ---------------------------------------------------------------- coverage study

ESTIMATORS = ("lognormal", "arcsine", "mixture", "zipm", "eb-mixture", "eb-zipm", "mile")


def _one_replicate(job):
    """Fit every requested estimator on replicate ``r``; returns per-estimator outcomes."""
    cfg, r = job
    g = _grid_from_cfg(cfg)
    truth = _params_from_cfg(cfg)
    sc = SimConfig(g, truth, seed=int(cfg["seed"]), replicates=r + 1)
    d = simulate_dataset(sc, r)
    level = float(cfg["level"])
    prior = _prior_from_cfg(cfg)
    theta = truth.theta
    m_only = DataSet(n=d.m)
    n_only = DataSet(n=d.n)
    out = {}
    cache = {}

    def mixture_fit():
        if "mix" not in cache:
            cache["mix"] = fit_em_mixture(m_only, g, tol=float(cfg["tol"]), max_iter=int(cfg["max_iter"]))
        return cache["mix"]

    def zipm_fit():
        if "zipm" not in cache:
            cache["zipm"] = fit_em_zipm(n_only, g, tol=float(cfg["tol"]), max_iter=int(cfg["max_iter"]),
                                        clamp_eps=bool(cfg["clamp_eps"]))
        return cache["zipm"]

    for name in cfg["estimators"]:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", NotConvergedWarning)
                if name == "lognormal":
                    iv = ci_theta_lognormal(split_from_data(DataSet(n=d.m, y=d.y), g), level)
                elif name == "arcsine":
                    iv = ci_theta_arcsine(split_from_data(DataSet(n=d.m, y=d.y), g), level)
                elif name == "mile":
                    iv = mile(split_from_data(DataSet(n=d.m, y=d.y), g), prior.delta, level)
                elif name == "mixture":
                    f = mixture_fit()
                    iv = ci_theta_mixture(f, observed_info_mixture(m_only, g, f.params), level)
                elif name == "zipm":
                    f = zipm_fit()
                    iv = ci_theta_zipm(f, observed_info_zipm(n_only, g, f.params), level)
                elif name == "eb-mixture":
                    eb = empirical_bayes_mixture(m_only, g, mixture_fit(), prior)
                    iv = phi_credible_interval(eb.posterior, level)
                elif name == "eb-zipm":
                    eb = empirical_bayes_zipm(n_only, g, zipm_fit(), prior=prior)
                    iv = phi_credible_interval(eb.posterior, level)
                else:
                    raise ValueError(f"unknown estimator {name!r}")
            out[name] = {"hit": bool(iv.contains(theta)), "width": iv.width, "point": iv.point}
        except NotConvergedWarning:
            out[name] = {"failure": "NotConverged"}
        except ZipmixError as exc:
            out[name] = {"failure": type(exc).__name__}
    return r, out


def run_coverage_study(cfg: dict) -> dict:
    """Simulate ``replicates`` datasets and record theta-interval hits per estimator.

    Per-replicate failures are counted by kind and never abort the study.
    """
    cfg = dict(DEFAULTS, **cfg)
    est = cfg["estimators"]
    if isinstance(est, str):
        est = [e.strip() for e in est.split(",") if e.strip()]
    cfg["estimators"] = list(est)
    reps = int(cfg["replicates"])
    if reps < 100 and not cfg.get("allow_small"):
        raise ValueError("a coverage study needs replicates >= 100")
    validate_params(_params_from_cfg(cfg), allow_eps_one=True)
    jobs = [(cfg, r) for r in range(reps)]
    workers = int(cfg.get("workers") or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_one_replicate, jobs, chunksize=max(1, reps // (4 * workers))))
    else:
        results = [_one_replicate(j) for j in jobs]
    results.sort(key=lambda x: x[0])
    summary = {}
    for name in cfg["estimators"]:
        outcomes = [o[name] for _, o in results]
        ok = [o for o in outcomes if "hit" in o]
        failures = {}
        for o in outcomes:
            if "failure" in o:
                failures[o["failure"]] = failures.get(o["failure"], 0) + 1
        summary[name] = {
            "coverage": (sum(o["hit"] for o in ok) / len(ok)) if ok else None,
            "mean_width": float(np.mean([o["width"] for o in ok])) if ok else None,
            "successes": len(ok),
            "failures": failures,
        }
    return {"config": _jsonable_cfg(cfg), "truth_theta": _params_from_cfg(cfg).theta,
            "estimators": summary,
            "replicate_seeds": {"seed": int(cfg["seed"]), "spawn_keys": list(range(reps))}}


def cmd_coverage_study(cfg):
    return run_coverage_study(cfg)


# ---------------------------------------------------------------- parser

def _add_common(p, *, seed=False, inp=False):
    p.add_argument("--config", help="JSON file of option values (flags override it)")
    p.add_argument("--output-dir", dest="output_dir",
                   help=f"directory for outputs (default ${OUTPUT_ENV} or the working directory)")
    p.add_argument("--output", help="path of the main report file")
    p.add_argument("--format", choices=["json", "csv"], help="report format for the summary (default json)")
    if seed:
        p.add_argument("--seed", type=int, help="master seed (default 0)")
    if inp:
        p.add_argument("--input", help="count table (CSV 't,s1..sJ' or JSON {t, n})")
        p.add_argument("--input-format", dest="input_format", choices=["csv", "json"],
                       help="override the format inferred from the file suffix")
        p.add_argument("--labels", help="comma-separated site labels y_1..y_J")


def _add_model(p):
    p.add_argument("--I", type=int, help="number of days (default 20)")
    p.add_argument("--J", type=int, help="number of sites (default 100)")
    p.add_argument("--t", help="comma-separated exposures, recycled to length I (default all 1)")
    p.add_argument("--pi", type=float, help="rare-component probability (default 0.3)")
    p.add_argument("--eps", type=float, help="inclusion probability (default 0.8)")
    p.add_argument("--mu", type=float, help="rare-component rate (default 6)")
    p.add_argument("--nu", type=float, help="common-component rate (default 2)")


def _add_prior(p):
    p.add_argument("--alpha", type=float, help="phi prior shape alpha (default 1)")
    p.add_argument("--beta", type=float, help="phi prior shape beta (default 1)")
    p.add_argument("--delta", type=float, help="gamma prior shape on lambda (default 1)")
    p.add_argument("--eta", type=float, help="beta prior eta on eps (default 1)")
    p.add_argument("--kappa", type=float, help="beta prior kappa on eps (default 1)")


def _add_em(p):
    p.add_argument("--tol", type=float, help="log-likelihood tolerance (default 1e-8)")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="iteration cap (default 5000)")
    p.add_argument("--level", type=float, help="interval level (default 0.95)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zipmix", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"zipmix {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate count tables")
    _add_common(p, seed=True)
    _add_model(p)
    p.add_argument("--replicates", type=int, help="number of tables (default 1)")
    p.add_argument("--with-latent", dest="with_latent", action="store_const", const=True,
                   help="also write y, z, m as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-observed", help="closed-form inference with site labels known")
    _add_common(p, inp=True)
    _add_prior(p)
    p.add_argument("--level", type=float, help="interval level (default 0.95)")
    p.set_defaults(func=cmd_fit_observed)

    p = sub.add_parser("fit-mixture", help="EM for the Poisson mixture without inflation")
    _add_common(p, inp=True)
    _add_em(p)
    p.set_defaults(func=cmd_fit_mixture)

    p = sub.add_parser("fit-zipm", help="EM for the zero-inflated Poisson mixture")
    _add_common(p, inp=True)
    _add_em(p)
    p.add_argument("--clamp-eps", dest="clamp_eps", action="store_const", const=True,
                   help="also cap eps at 1/2")
    p.set_defaults(func=cmd_fit_zipm)

    p = sub.add_parser("fit-eb", help="empirical Bayes posterior for theta")
    _add_common(p, inp=True)
    _add_em(p)
    _add_prior(p)
    p.add_argument("--regime", choices=["mixture", "zipm"], help="model (default mixture)")
    p.add_argument("--improper", action="store_const", const=True,
                   help="allow alpha = beta = 0")
    p.add_argument("--clamp-eps", dest="clamp_eps", action="store_const", const=True,
                   help="also cap eps at 1/2 in the ZIPM fit")
    p.set_defaults(func=cmd_fit_eb)

    for name, helptext, fn in (("loglik-curve", "integrated log-likelihood on a theta grid", cmd_loglik_curve),
                               ("posterior-mcmc", "Metropolis draws from the theta posterior",
                                cmd_posterior_mcmc)):
        p = sub.add_parser(name, help=helptext)
        _add_common(p, seed=True, inp=True)
        _add_prior(p)
        p.add_argument("--regime", choices=["given-y", "mixture", "zn", "n"],
                       help="which integrated likelihood (default mixture)")
        p.add_argument("--mode", choices=["exact", "monte_carlo"], help="for regime n (default exact)")
        p.add_argument("--samples", type=int, help="Monte Carlo draws for regime n (default 2000)")
        if name == "loglik-curve":
            p.add_argument("--theta-min", dest="theta_min", type=float, help="default 0.05")
            p.add_argument("--theta-max", dest="theta_max", type=float, help="default 20")
            p.add_argument("--points", type=int, help="log-spaced grid size (default 50)")
        else:
            p.add_argument("--n-samples", dest="n_samples", type=int, help="kept draws (default 5000)")
            p.add_argument("--proposal-sd", dest="proposal_sd", type=float,
                           help="random-walk sd on log theta (default 0.5)")
        p.set_defaults(func=fn)

    p = sub.add_parser("ztp-compare", help="nonzero ZIPM law versus a zero-truncated mixture")
    _add_common(p)
    p.add_argument("--pi", type=float, help="default 0.3")
    p.add_argument("--mu", type=float, help="default 6")
    p.add_argument("--nu", type=float, help="default 2")
    p.add_argument("--eps", type=float, help="ignored by the comparison; default 0.8")
    p.add_argument("--t", help="exposure (default 1)")
    p.add_argument("--x-max", dest="x_max", type=int, help="largest x tabulated (default 10)")
    p.set_defaults(func=cmd_ztp_compare)

    p = sub.add_parser("coverage-study", help="Monte Carlo coverage of theta intervals")
    _add_common(p, seed=True)
    _add_model(p)
    _add_em(p)
    _add_prior(p)
    p.add_argument("--replicates", type=int, help="simulated datasets, at least 100")
    p.add_argument("--estimators", help=f"comma-separated subset of {','.join(ESTIMATORS)}")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--clamp-eps", dest="clamp_eps", action="store_const", const=True,
                   help="cap eps at 1/2 in ZIPM fits")
    p.set_defaults(func=cmd_coverage_study)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = _effective(args, args.command)
    try:
        result = args.func(cfg)
    except (ZipmixError, OSError, ValueError) as exc:
        print(f"zipmix {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    report = {"command": args.command, "config": _jsonable_cfg(cfg), "result": result}
    fmt = cfg.get("format") or "json"
    if fmt == "csv":
        flat = _flatten(_jsonable(result))
        flat.update({f"config.{k}": v for k, v in _flatten(_jsonable(_jsonable_cfg(cfg))).items()})
        path = _report_path(cfg, args.command, "csv")
        emit_report([flat], path, "csv")
    else:
        path = _report_path(cfg, args.command, "json")
        emit_report(report, path, "json")
    print(str(path))
    return 0


def _report_path(cfg, command, ext) -> Path:
    # commands that already write a table to --output keep the summary beside it
    stem = command.replace("-", "_") + "_report"
    if command in ("loglik-curve", "ztp-compare"):
        return _output_dir(cfg) / f"{stem}.{ext}"
    return _out_path(cfg, stem, ext)


def _flatten(x, prefix=""):
    out = {}
    if isinstance(x, dict):
        for k, v in x.items():
            out.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(x, list) and x and isinstance(x[0], (dict, list)):
        for k, v in enumerate(x):
            out.update(_flatten(v, f"{prefix}{k}."))
    else:
        out[prefix[:-1]] = json.dumps(x) if isinstance(x, list) else x
    return out


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
