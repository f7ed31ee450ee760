"""Command-line entry point.

Every subcommand reads a YAML (or JSON) config, applies ``--set`` and flag
overrides, validates the whole thing before computing anything, and writes
its results plus a ``manifest.json`` echoing the resolved config into the
output directory.

Exit codes: 0 success, 1 invalid input, 2 numerical degeneracy, 3 I/O.
"""

import argparse
import copy
import json
import logging
import platform
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__, kernels
from .core import DistanceSpec, Prior, load_table, save_table
from .curves import in_support, support_grid
from .errors import ConfigError, DegenerateError
from .glm import (build_posterior, choose_smoothing, fit_glm, fit_glm_uniform,
                  marginal_posterior)
from .modelselect import bayes_factor, model_marginal_density, stability_sweep
from .models import make_model
from .regbaseline import kde_posterior, reg_adjust
from .sampler import (DEFAULT_CHUNK, FixedEpsilon, RetainBest, fit_pca, pilot_covariance,
                      pilot_statistics, run_rejection)
from .toymodel import ComparisonConfig, cell_curves, run_comparison_grid

log = logging.getLogger("abcglm")

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE, EXIT_IO = 0, 1, 2, 3

# defaults of every mapping-valued section; keys outside these are rejected
SECTION_DEFAULTS = {
    "sampler": {"mode": "fixed_epsilon", "epsilon": None, "target": None,
                "max_proposals": 10_000_000, "n": None, "budget": None,
                "chunk_size": DEFAULT_CHUNK},
    "distance": {"kind": "euclidean", "covariance": None, "pilot_n": 1000},
    "pca": {"enabled": False, "k": None, "variance_fraction": 0.95, "pilot_n": 1000},
    "glm": {"smoothing_scale": 1.0, "grid_points": 512, "uniform_refit": False,
            "refit_epsilon": None, "refit_n": None},
    "reg": {"transform": "none", "weighting": "none", "bandwidth": "auto",
            "bw_multiplier": 1.0, "grid_points": 512},
    "sweep": {"acceptance_rates": [0.001, 0.002, 0.005, 0.01, 0.02, 0.05],
              "budget": 100_000, "independent": False},
    "experiment": dict({f.name: f.default_factory() if callable(f.default_factory) else f.default
                        for f in fields(ComparisonConfig) if f.name not in ("seed", "workers")},
                       write_curves=False),
}

COMMON = {"seed": 0, "workers": 1, "out": "abcglm-out"}

COMMANDS = {
    "sample": (("model", "prior", "s_obs", "sampler"), ("distance", "pca")),
    "glm-posterior": (("table",), ("s_obs", "prior", "glm")),
    "reg-posterior": (("table",), ("s_obs", "prior", "reg")),
    "bayes-factor": (("model_a", "model_b", "s_obs", "sampler"),
                     ("distance", "glm", "prior_prob_a")),
    "stability-sweep": (("model_a", "model_b", "s_obs"), ("sweep", "glm", "distance")),
    "compare": ((), ("experiment",)),
}


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------

def load_config(path):
    if path is None:
        return {}
    text = Path(path).read_text()
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return cfg


def apply_override(cfg, assignment):
    """Apply ``section.key=value``; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects section.key=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    parts = [p for p in dotted.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"--set has an empty key: {assignment!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"--set {dotted}: cannot parse value {raw!r}") from exc
    node = cfg
    for p in parts[:-1]:
        child = node.setdefault(p, {})
        if not isinstance(child, dict):
            raise ConfigError(f"--set {dotted}: {p!r} is not a section")
        node = child
    node[parts[-1]] = value


def _section(cfg, name):
    given = cfg.get(name) or {}
    if not isinstance(given, dict):
        raise ConfigError(f"{name}: must be a mapping")
    defaults = SECTION_DEFAULTS[name]
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"{name}: unknown keys {unknown}; allowed: {sorted(defaults)}")
    return {**copy.deepcopy(defaults), **given}


def _positive(value, field, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    try:
        num = int(value) if integer else float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected a number, got {value!r}") from None
    if integer and num != value:
        raise ConfigError(f"{field}: expected an integer, got {value!r}")
    if not num > 0:
        raise ConfigError(f"{field}: must be > 0, got {value!r}")
    return num


def _vector(value, field):
    try:
        vec = np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected a number or list of numbers") from None
    if vec.ndim != 1 or not np.all(np.isfinite(vec)):
        raise ConfigError(f"{field}: expected a flat list of finite numbers")
    return vec


def _prior(spec, field="prior"):
    try:
        return Prior.from_spec(spec)
    except ConfigError as exc:
        raise ConfigError(f"{field}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{field}: {exc}") from exc


def _model_pair(cfg, name):
    entry = cfg[name]
    if not isinstance(entry, dict) or set(entry) != {"model", "prior"}:
        raise ConfigError(f"{name}: needs exactly the keys 'model' and 'prior'")
    model = make_model(entry["model"])
    prior = _prior(entry["prior"], f"{name}.prior")
    if model.n_params != prior.dim:
        raise ConfigError(f"{name}: model has {model.n_params} parameters, "
                          f"prior has {prior.dim}")
    return model, prior


def _sampler_mode(sec):
    mode = sec["mode"]
    if mode == "fixed_epsilon":
        if sec["n"] is not None or sec["budget"] is not None:
            raise ConfigError("sampler: 'n' and 'budget' belong to mode retain_best")
        eps = _positive(sec["epsilon"], "sampler.epsilon")
        target = _positive(sec["target"], "sampler.target", True, True)
        cap = _positive(sec["max_proposals"], "sampler.max_proposals", True)
        return FixedEpsilon(eps, target, cap)
    if mode == "retain_best":
        if sec["epsilon"] is not None or sec["target"] is not None:
            raise ConfigError("sampler: 'epsilon' and 'target' belong to mode fixed_epsilon")
        n = _positive(sec["n"], "sampler.n", True)
        budget = _positive(sec["budget"], "sampler.budget", True)
        if n > budget:
            raise ConfigError("sampler.n: must not exceed sampler.budget")
        return RetainBest(n, budget)
    raise ConfigError(f"sampler.mode: expected fixed_epsilon or retain_best, got {mode!r}")


def _distance(sec, n_stats, allow_pilot=False):
    kind = sec["kind"]
    if kind == "euclidean":
        if sec["covariance"] is not None:
            raise ConfigError("distance.covariance: only used with kind mahalanobis")
        return DistanceSpec()
    if kind != "mahalanobis":
        raise ConfigError(f"distance.kind: expected euclidean or mahalanobis, got {kind!r}")
    cov = sec["covariance"]
    if cov is None:
        raise ConfigError("distance.covariance: required for mahalanobis "
                          + ("(a matrix, or 'pilot')" if allow_pilot else "(a matrix)"))
    if cov == "pilot":
        if not allow_pilot:
            raise ConfigError("distance.covariance: 'pilot' is only supported by `sample`")
        _positive(sec["pilot_n"], "distance.pilot_n", True)
        return "pilot"
    try:
        spec = DistanceSpec("mahalanobis", np.asarray(cov, dtype=float))
    except (TypeError, ValueError, DegenerateError) as exc:
        raise ConfigError(f"distance.covariance: {exc}") from exc
    if spec.covariance.shape[0] != n_stats:
        raise ConfigError(f"distance.covariance: must be {n_stats}x{n_stats}")
    return spec


def resolve_config(command, args):
    """Merged, validated config for ``command``; raises ConfigError."""
    cfg = load_config(args.config)
    for assignment in args.set or []:
        apply_override(cfg, assignment)
    for key in COMMON:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    required, optional = COMMANDS[command]
    allowed = set(required) | set(optional) | set(COMMON)
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys for `{command}`: {unknown}; "
                          f"allowed: {sorted(allowed)}")
    missing = [k for k in required if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required config keys for `{command}`: {missing}")
    for key, default in COMMON.items():
        cfg.setdefault(key, default)
    seed = cfg["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {seed!r}")
    cfg["workers"] = _positive(cfg["workers"], "workers", True)
    for name in required + optional:
        if name in SECTION_DEFAULTS:
            cfg[name] = _section(cfg, name)
    return cfg


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def write_curve(path, k, curve):
    return write_csv(path, [f"theta_{k + 1}", "density"], zip(curve.grid, curve.density))


def _plain(obj):
    """JSON/YAML-friendly copy (numpy arrays and scalars to lists and floats)."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_report(path, report):
    Path(path).write_text(yaml.safe_dump(_plain(report), sort_keys=False))
    return Path(path)


def write_manifest(out, command, cfg, outputs, extra=None):
    manifest = {
        "command": command,
        "config": _plain(cfg),
        "versions": {"abcglm": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "kernel_backend": kernels.BACKEND,
        "outputs": sorted(str(Path(p).name) for p in outputs),
    }
    manifest.update(_plain(extra or {}))
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_sample(cfg, out):
    model = make_model(cfg["model"])
    prior = _prior(cfg["prior"])
    if model.n_params != prior.dim:
        raise ConfigError(f"prior has {prior.dim} dimensions, model needs {model.n_params}")
    s_obs = _vector(cfg["s_obs"], "s_obs")
    if s_obs.size != model.n_stats:
        raise ConfigError(f"s_obs: model produces {model.n_stats} statistics, got {s_obs.size}")
    mode = _sampler_mode(cfg["sampler"])
    chunk = _positive(cfg["sampler"]["chunk_size"], "sampler.chunk_size", True)
    pca_cfg = cfg["pca"]
    transform = None
    if pca_cfg["enabled"]:
        pilot_n = _positive(pca_cfg["pilot_n"], "pca.pilot_n", True)
        frac = float(pca_cfg["variance_fraction"])
        if not 0 < frac <= 1:
            raise ConfigError("pca.variance_fraction: must lie in (0, 1]")
        k = _positive(pca_cfg["k"], "pca.k", True, True)
        n_dist = k or model.n_stats
    else:
        n_dist = model.n_stats
    dist = _distance(cfg["distance"], n_dist, allow_pilot=True)

    seed = cfg["seed"]
    if pca_cfg["enabled"]:
        try:
            transform = fit_pca(pilot_statistics(model, prior, pilot_n, seed), k, frac)
        except ValueError as exc:
            raise DegenerateError(f"PCA of pilot statistics failed: {exc}") from exc
    if dist == "pilot":
        dist = DistanceSpec("mahalanobis", pilot_covariance(
            model, prior, int(cfg["distance"]["pilot_n"]), seed, transform))
    table = run_rejection(model, prior, s_obs, dist, mode, seed=seed,
                          workers=cfg["workers"], chunk_size=chunk, transform=transform)
    extra = {"model": model.to_spec(), "prior": prior.to_spec(), "s_obs_raw": s_obs.tolist()}
    csv = out / "table.csv"
    side = save_table(table, csv, extra)
    log.info("kept %d of %d proposals (epsilon %.6g)", table.n, table.total_proposals,
             table.epsilon)
    return [csv, side], {"n_seq": getattr(model, "n_seq", None)}


def _load(cfg):
    s_obs = None if cfg.get("s_obs") is None else _vector(cfg["s_obs"], "s_obs")
    table = load_table(cfg["table"], s_obs)
    prior = _prior(cfg["prior"]) if cfg.get("prior") is not None else None
    if prior is not None and prior.dim != table.n_params:
        raise ConfigError(f"prior has {prior.dim} dimensions, table has {table.n_params}")
    return table, prior


def cmd_glm_posterior(cfg, out):
    table, prior = _load(cfg)
    sec = cfg["glm"]
    scale = _positive(sec["smoothing_scale"], "glm.smoothing_scale")
    n_grid = _positive(sec["grid_points"], "glm.grid_points", True)
    if prior is not None:
        domain = prior.domain
    else:
        from .core import ParameterDomain
        lo, hi = table.params.min(axis=0), table.params.max(axis=0)
        domain = ParameterDomain.box(lo, np.where(hi > lo, hi, lo + 1.0))
    if sec["uniform_refit"]:
        spec = table.metadata.get("model")
        if spec is None:
            raise ConfigError("glm.uniform_refit: the table's sidecar names no model")
        eps = _positive(sec["refit_epsilon"] or table.epsilon, "glm.refit_epsilon")
        n = _positive(sec["refit_n"] or table.n, "glm.refit_n", True)
        fit = fit_glm_uniform(make_model(spec), domain, table.s_obs, table.distance, eps, n,
                              cfg["seed"], cfg["workers"])
    else:
        fit = fit_glm(table)
    smoothing = choose_smoothing(table, domain, scale)
    mix = build_posterior(fit, smoothing, table, domain=domain)
    outputs, warnings = [], []
    for k in range(domain.dim):
        grid = support_grid(((domain.lows[k], domain.highs[k]),), n_grid)
        curve = marginal_posterior(mix, k, grid)
        warnings += list(curve.warnings)
        outputs.append(write_curve(out / f"posterior_theta_{k + 1}.csv", k, curve))
    report = {
        "N": table.n, "epsilon": table.epsilon, "acceptance_rate": table.acceptance_rate,
        "s_obs": table.s_obs, "C": fit.C, "c0": fit.c0, "Sigma_s": fit.Sigma_s,
        "smoothing_sigmas": smoothing.sigmas, "T": mix.T,
        "log_normalizer": mix.log_normalizer, "sigma_floored": mix.sigma_floored,
        "normalization": mix.diagnostics.get("normalization"),
        "uniform_refit": bool(sec["uniform_refit"]), "warnings": warnings,
    }
    outputs.append(write_report(out / "glm_report.yaml", report))
    return outputs, {}


def cmd_reg_posterior(cfg, out):
    table, prior = _load(cfg)
    sec = cfg["reg"]
    n_grid = _positive(sec["grid_points"], "reg.grid_points", True)
    mult = _positive(sec["bw_multiplier"], "reg.bw_multiplier")
    bw = sec["bandwidth"]
    if bw != "auto":
        bw = _positive(bw, "reg.bandwidth")
    if sec["transform"] not in ("none", "hamilton"):
        raise ConfigError(f"reg.transform: expected none or hamilton, got {sec['transform']!r}")
    if sec["weighting"] not in ("none", "epanechnikov"):
        raise ConfigError(f"reg.weighting: expected none or epanechnikov, "
                          f"got {sec['weighting']!r}")
    transform = None
    if sec["transform"] == "hamilton":
        if prior is None:
            raise ConfigError("reg.transform: hamilton needs a prior to supply the bounds")
        transform = list(zip(prior.domain.lows, prior.domain.highs))
    adjusted = reg_adjust(table, transform=transform, weighting=sec["weighting"])
    outputs, report = [], {"N": table.n, "epsilon": table.epsilon, "bandwidths": [],
                           "outside_support": [], "warnings": []}
    for k in range(table.n_params):
        if prior is not None:
            support = prior.components[k].intervals
            grid = support_grid(((support[0][0], support[-1][1]),), n_grid)
            report["outside_support"].append(
                int(np.count_nonzero(~in_support(adjusted[:, k], support))))
        else:
            support, grid = ((-np.inf, np.inf),), None
        curve = kde_posterior(adjusted[:, k], support, bandwidth=bw, grid=grid, n_grid=n_grid,
                              bw_multiplier=mult)
        report["bandwidths"].append(curve.info["bandwidth"])
        report["warnings"] += list(curve.warnings)
        outputs.append(write_curve(out / f"reg_theta_{k + 1}.csv", k, curve))
    outputs.append(write_report(out / "reg_report.yaml", report))
    return outputs, {"bandwidths": report["bandwidths"]}


def _glm_scale(cfg):
    return _positive(cfg["glm"]["smoothing_scale"], "glm.smoothing_scale")


def cmd_bayes_factor(cfg, out):
    model_a, prior_a = _model_pair(cfg, "model_a")
    model_b, prior_b = _model_pair(cfg, "model_b")
    s_obs = _vector(cfg["s_obs"], "s_obs")
    for name, model in (("model_a", model_a), ("model_b", model_b)):
        if model.n_stats != s_obs.size:
            raise ConfigError(f"{name}: produces {model.n_stats} statistics, "
                              f"s_obs has {s_obs.size}")
    mode = _sampler_mode(cfg["sampler"])
    dist = _distance(cfg["distance"], s_obs.size)
    scale = _glm_scale(cfg)
    pi_a = cfg.get("prior_prob_a", 0.5)
    if not isinstance(pi_a, (int, float)) or not 0 < pi_a < 1:
        raise ConfigError(f"prior_prob_a: must lie in (0, 1), got {pi_a!r}")
    estimates = {}
    for name, model, prior in (("model_a", model_a, prior_a), ("model_b", model_b, prior_b)):
        table = run_rejection(model, prior, s_obs, dist, mode, seed=cfg["seed"],
                              workers=cfg["workers"])
        fit = fit_glm(table)
        estimates[name] = model_marginal_density(fit, choose_smoothing(table, prior.domain,
                                                                       scale), table)
    res = bayes_factor(estimates["model_a"], estimates["model_b"], float(pi_a))
    report = {
        "log_B_AB": res.log_B_AB, "B_AB": res.B_AB, "posterior_prob_A": res.posterior_prob_A,
        "prior_prob_A": res.prior_prob_A, "infinite": res.infinite,
    }
    for name, est in estimates.items():
        report[name] = {"log_marginal_density": est.log_value,
                        "acceptance_rate": est.acceptance_rate,
                        "acceptance_rate_stderr": est.acceptance_rate_stderr,
                        "N": est.N, "degenerate": est.degenerate}
    return [write_report(out / "bayes_factor.yaml", report)], {}


def cmd_stability_sweep(cfg, out):
    model_a, prior_a = _model_pair(cfg, "model_a")
    model_b, prior_b = _model_pair(cfg, "model_b")
    s_obs = _vector(cfg["s_obs"], "s_obs")
    sec = cfg["sweep"]
    budget = _positive(sec["budget"], "sweep.budget", True)
    rates = sec["acceptance_rates"]
    if not isinstance(rates, list) or not rates:
        raise ConfigError("sweep.acceptance_rates: expected a non-empty list")
    for a in rates:
        if not isinstance(a, (int, float)) or not 0 < a <= 1:
            raise ConfigError(f"sweep.acceptance_rates: {a!r} is outside (0, 1]")
    dist = _distance(cfg["distance"], s_obs.size)
    points = stability_sweep(model_a, model_b, prior_a, prior_b, s_obs, rates, budget,
                             seed=cfg["seed"], spec=dist, smoothing_scale=_glm_scale(cfg),
                             independent=bool(sec["independent"]), workers=cfg["workers"])
    csv = write_csv(out / "sweep.csv",
                    ["acceptance_rate", "log_bayes_factor", "n_retained", "flag"],
                    [(p.acceptance_rate, p.log_bayes_factor, str(p.n_retained), p.flag)
                     for p in points])
    return [csv], {}


def cmd_compare(cfg, out):
    sec = dict(cfg["experiment"])
    write_curves = bool(sec.pop("write_curves"))
    try:
        config = ComparisonConfig(**sec, seed=cfg["seed"], workers=cfg["workers"])
        _prior(config.prior, "experiment.prior")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"experiment: {exc}") from exc
    result = run_comparison_grid(config)
    rows = [(c.method, str(c.S_obs), c.epsilon, c.mean_L1, c.stderr_L1,
             "true" if c.worse_than_prior else "false") for c in result.cells]
    outputs = [write_csv(out / "cells.csv", ["method", "S_obs", "epsilon", "mean_L1",
                                              "stderr_L1", "worse_than_prior"], rows)]
    if write_curves:
        cdir = out / "curves"
        cdir.mkdir(exist_ok=True)
        for S_obs in config.S_obs_list:
            for eps in config.epsilon_list:
                curves = cell_curves(result, S_obs, eps)
                grid = curves["analytic"].grid
                cols = ["theta"] + list(curves)
                data = zip(grid, *(curves[name](grid) for name in curves))
                path = write_csv(cdir / f"S{S_obs}_eps{eps:g}.csv", cols, data)
                outputs.append(path)
    incomplete = sorted({(c.S_obs, c.epsilon) for c in result.cells if not c.complete})
    extra = {
        "n_seq": config.n_seq,
        "bandwidths": {"chosen": result.best_setting,
                       "candidates": {f"{m}:{v:g}": score for (m, v), score
                                      in result.candidate_grand_means.items()}},
        "grand_mean_L1": result.grand_mean,
        "prior_L1": {str(k): v for k, v in result.prior_L1.items()},
        "incomplete_cells": [list(c) for c in incomplete],
    }
    return outputs, extra


HELP = {
    "sample": "rejection-sample a model and write a reference table",
    "glm-posterior": "ABC-GLM marginal posteriors from a reference table",
    "reg-posterior": "ABC-REG (regression-adjusted KDE) posteriors from a reference table",
    "bayes-factor": "Bayes factor of two models at s_obs",
    "stability-sweep": "log Bayes factor across acceptance rates",
    "compare": "rejection / ABC-REG / ABC-GLM against the analytic toy posterior",
}

HANDLERS = {
    "sample": cmd_sample,
    "glm-posterior": cmd_glm_posterior,
    "reg-posterior": cmd_reg_posterior,
    "bayes-factor": cmd_bayes_factor,
    "stability-sweep": cmd_stability_sweep,
    "compare": cmd_compare,
}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="abcglm", description="ABC-GLM posteriors, Bayes factors and method comparisons.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", metavar="PATH", help="YAML or JSON run config")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--workers", type=int, help="worker threads")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
    return parser


def run(argv=None):
    """Run the CLI and return the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        outputs, extra = HANDLERS[args.command](cfg, out)
        write_manifest(out, args.command, cfg, outputs, extra)
    except ConfigError as exc:
        print(f"abcglm: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DegenerateError as exc:
        print(f"abcglm: numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as exc:
        print(f"abcglm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"abcglm: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"wrote {out}")
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
