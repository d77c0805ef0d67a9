"""Experiment configuration and orchestration.

A configuration is an INI document with the sections ``problem``,
``solver``, ``gradient``, ``prox``, ``analysis``, ``output`` and
``sweep``. Every key is typed and unknown keys are rejected, so a config
file fully determines a run.
"""

from __future__ import annotations

import configparser
import copy
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import generators as gen
from .analysis import analyze, optima_path
from .errors import ConfigError, SolverError, TVProxError
from .gradients import GradOracleConfig, ZerothOrderConfig
from .io import TRACE_SCHEMA_VERSION, config_hash, trace_to_csv, write_json
from .problem import problem_constants
from .prox import ProxOracleConfig
from .solver import SolverConfig, run

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
BOUND_NAMES = ("per_step", "unrolled", "cumulative", "asymptotic", "regret_strong", "regret_convex")


def _floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _pairs(text):
    out = []
    for item in str(text).replace(";", ",").split(","):
        if item.strip():
            a, b = item.split("-")
            out.append((int(a), int(b)))
    return tuple(out)


def _str(text):
    return str(text).strip()


def _float_or_auto(text):
    v = str(text).strip().lower()
    return "auto" if v == "auto" else float(v)


def _x0(text):
    v = str(text).strip().lower()
    return "zeros" if v == "zeros" else _floats(v)


def _eps(text):
    vals = _floats(text)
    return vals[0] if len(vals) == 1 else vals


def _bounds(text):
    v = str(text).strip().lower()
    if v == "all":
        return list(BOUND_NAMES)
    if v == "none":
        return []
    names = [s.strip() for s in v.split(",") if s.strip()]
    bad = [s for s in names if s not in BOUND_NAMES]
    if bad:
        raise ValueError(f"unknown bound(s) {bad}")
    return names


# section -> key -> (parser, default)
SCHEMA = {
    "problem": {
        "generator": (_str, "quadratic_box"), "seed": (int, 0),
        "n": (int, 10), "m": (int, 5), "K": (int, 100),
        "mu": (float, 0.5), "L": (float, 2.0), "lower": (float, -1.0), "upper": (float, 1.0),
        "drift": (_str, "none"), "drift_scale": (float, 0.0), "drift_period": (float, 50.0),
        "w": (float, 1.0),
        "nu": (float, 0.2), "z_max": (float, 3.0), "margin": (float, 0.05),
        "gain_var": (float, 1e-2), "power_var": (float, 1e-3), "w_var": (float, 1e-2),
        "kappa_var": (float, 1e-3), "n_nodes": (int, 6),
        "edges": (_pairs, gen.DEFAULT_EDGES), "flows": (_pairs, gen.DEFAULT_FLOWS),
    },
    "solver": {"alpha": (_float_or_auto, "auto"), "x0": (_x0, "zeros"), "seed": (int, 0),
               "horizon": (int, 0)},
    "gradient": {"model": (_str, "exact"), "gamma_e": (float, 0.0), "M": (int, 2),
                 "s": (float, 1e-2), "antithetic": (_bool, False)},
    "prox": {"mode": (_str, "exact"), "eps": (_eps, 0.0), "margin": (float, 0.0),
             "inner_budget": (int, 0)},
    "analysis": {"bounds": (_bounds, list(BOUND_NAMES)), "reference_tol": (float, 1e-10),
                 "tail_start": (int, 0), "D_samples": (int, 64), "D_seed": (int, 0),
                 "baseline": (_bool, False)},
    "output": {"dir": (_str, "")},
    "sweep": {"seeds": (_ints, []), "eps": (_floats, []), "gamma_e": (_floats, []),
              "jobs": (int, 1)},
}

GENERATOR_KEYS = {
    "quadratic_box": {"n", "K", "mu", "L", "lower", "upper", "drift", "drift_scale",
                      "drift_period"},
    "lasso_stream": {"n", "K", "w", "drift", "drift_scale", "drift_period"},
    "least_squares_box": {"n", "m", "K", "lower", "upper", "drift", "drift_scale",
                          "drift_period"},
    "network_flow": {"K", "nu", "z_max", "margin", "gain_var", "power_var", "w_var",
                     "kappa_var", "n_nodes", "edges", "flows"},
}


@dataclass
class ExperimentConfig:
    """Normalized experiment description (one dict per config section)."""

    sections: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.sections[name]

    def to_doc(self) -> dict:
        """Plain, JSON-ready view used for hashing and summaries."""
        doc = {}
        for sec, values in self.sections.items():
            doc[sec] = {k: (list(map(list, v)) if k in ("edges", "flows") else v)
                        for k, v in values.items()}
        p = doc["problem"]
        keep = GENERATOR_KEYS[p["generator"]] | {"generator", "seed"}
        doc["problem"] = {k: v for k, v in p.items() if k in keep}
        return doc

    @property
    def sha256(self) -> str:
        return config_hash(self.to_doc())

    def with_overrides(self, **by_section) -> "ExperimentConfig":
        new = copy.deepcopy(self.sections)
        for sec, values in by_section.items():
            new[sec].update(values)
        cfg = ExperimentConfig(new)
        validate(cfg)
        return cfg


def default_config() -> ExperimentConfig:
    return ExperimentConfig({sec: {k: copy.deepcopy(d) for k, (_, d) in keys.items()}
                             for sec, keys in SCHEMA.items()})


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    cfg = default_config()
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            fn = SCHEMA[sec][key][0]
            try:
                cfg.sections[sec][key] = fn(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from None
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def validate(cfg: ExperimentConfig):
    """Check cross-field consistency by building every configured object once."""
    p = cfg["problem"]
    if p["generator"] not in GENERATOR_KEYS:
        raise ConfigError(f"unknown generator {p['generator']!r}")
    if p["drift"] not in gen.DRIFT_KINDS:
        raise ConfigError(f"unknown drift {p['drift']!r}")
    try:
        grad_config(cfg)
        prox_config(cfg)
    except TVProxError as exc:
        raise ConfigError(str(exc)) from None
    g, x = cfg["gradient"], cfg["prox"]
    if p["generator"] == "network_flow" and g["model"] == "zeroth-order" \
            and x["mode"] == "restricted-margin" and x["margin"] < g["s"]:
        # probes at radius s must stay inside the utility's domain
        raise ConfigError(f"restriction margin {x['margin']} is smaller than the "
                          f"zeroth-order radius s = {g['s']}")
    a = cfg["solver"]["alpha"]
    if a != "auto" and not a > 0:
        raise ConfigError("alpha must be positive or 'auto'")
    if cfg["sweep"]["jobs"] < 1:
        raise ConfigError("sweep jobs must be at least 1")


def grad_config(cfg) -> GradOracleConfig:
    g = cfg["gradient"]
    zo = None
    if g["model"] == "zeroth-order":
        zo = ZerothOrderConfig(g["M"], g["s"], g["antithetic"])
    return GradOracleConfig(g["model"], g["gamma_e"], zo)


def prox_config(cfg) -> ProxOracleConfig:
    p = cfg["prox"]
    return ProxOracleConfig(p["mode"], p["eps"], p["margin"], p["inner_budget"])


def build_problem(cfg: ExperimentConfig):
    p = cfg["problem"]
    name = p["generator"]
    try:
        drift = gen.Drift(p["drift"], p["drift_scale"], p["drift_period"])
        if name == "quadratic_box":
            return gen.gen_quadratic_box(p["n"], p["K"], drift, p["seed"], p["mu"], p["L"],
                                         p["lower"], p["upper"])
        if name == "lasso_stream":
            return gen.gen_lasso_stream(p["n"], p["K"], drift, p["w"], p["seed"])
        if name == "least_squares_box":
            return gen.gen_least_squares_box(p["n"], p["m"], p["K"], drift, p["seed"],
                                             p["lower"], p["upper"])
        topo = gen.NetworkTopology(p["n_nodes"], tuple(p["edges"]), tuple(p["flows"]))
        return gen.gen_network_flow(topo, p["K"], gain_var=p["gain_var"],
                                    power_var=p["power_var"], w_var=p["w_var"],
                                    kappa_var=p["kappa_var"], nu=p["nu"],
                                    z_max=p["z_max"], margin=p["margin"], seed=p["seed"])
    except TVProxError as exc:
        raise ConfigError(f"problem generator {name!r}: {exc}") from None


def problem_spec(cfg: ExperimentConfig, problem=None) -> dict:
    """Generator name, parameters and the derived problem constants."""
    problem = build_problem(cfg) if problem is None else problem
    return {"schema_version": TRACE_SCHEMA_VERSION,
            "problem": cfg.to_doc()["problem"],
            "name": problem.name, "dimension": problem.dimension,
            "horizon": problem.horizon, "L": problem.L, "mu": problem.mu,
            "has_closed_form": problem.minimizer is not None}


def solver_config(cfg, problem, exact=False) -> SolverConfig:
    s = cfg["solver"]
    alpha = 1.0 / problem.L if s["alpha"] == "auto" else s["alpha"]
    x0 = np.zeros(problem.dimension) if s["x0"] == "zeros" else np.asarray(s["x0"], float)
    if x0.size != problem.dimension:
        raise ConfigError(f"x0 has {x0.size} entries, problem dimension is {problem.dimension}")
    grad, prox = (GradOracleConfig(), ProxOracleConfig()) if exact else \
        (grad_config(cfg), prox_config(cfg))
    return SolverConfig(alpha, x0, grad, prox, s["seed"], s["horizon"] or None)


def plateau(avg, fraction=0.25) -> dict:
    """Relative change of the running average over the final ``fraction``."""
    K = avg.size
    start = max(K - int(round(fraction * K)), 1)
    ref = avg[-1]
    change = abs(avg[-1] - avg[start - 1]) / abs(ref) if ref != 0 else 0.0
    return {"final": float(ref), "from_k": start, "relative_change": float(change)}


@dataclass
class ExperimentResult:
    exit_code: int
    summary: dict
    csv: Optional[str] = None
    baseline_csv: Optional[str] = None
    trace: object = None
    report: object = None
    baseline_trace: object = None
    baseline_report: object = None


def _analysis_kwargs(cfg):
    a = cfg["analysis"]
    return {"bounds": a["bounds"], "tail_start": a["tail_start"] or None}


def _constants(cfg, problem, alpha):
    a = cfg["analysis"]
    want = "regret_strong" in a["bounds"] and a["D_samples"] > 0
    return problem_constants(problem, alpha, with_D=want, n_samples=a["D_samples"],
                             seed=a["D_seed"])


def _report_summary(report, trace):
    out = report.to_dict()
    out["plateau"] = plateau(report.running_average)
    out["steps"] = len(trace)
    out["final_tracking_error"] = float(report.tracking_error[-1])
    return out


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Generator, solver run(s), analysis, and output files.

    With ``[analysis] baseline = true`` an exact-oracle run on the same
    problem is analysed alongside the configured one. The exit code is 0
    when every applicable bound holds, 1 on a violation and 3 when a run
    fails (the error is recorded in the summary).
    """
    out_dir = Path(out_dir) if out_dir else (Path(cfg["output"]["dir"])
                                             if cfg["output"]["dir"] else None)
    problem = build_problem(cfg)
    summary = {"schema_version": TRACE_SCHEMA_VERSION, "config": cfg.to_doc(),
               "config_sha256": cfg.sha256, "problem": problem_spec(cfg, problem)}
    result = ExperimentResult(EXIT_OK, summary)
    variants = [("run", False)]
    if cfg["analysis"]["baseline"]:
        variants.append(("baseline", True))

    path = None
    for label, exact in variants:
        scfg = solver_config(cfg, problem, exact)
        try:
            trace = run(problem, scfg)
        except SolverError as exc:
            log.error("%s failed: %s", label, exc)
            summary[label] = {"error": str(exc), "k": exc.k,
                              "completed_steps": len(exc.trace) if exc.trace else 0}
            result.exit_code = EXIT_RUNTIME
            if exc.trace is not None and len(exc.trace):
                _store(result, label, trace_to_csv(exc.trace), exc.trace, None)
            continue
        try:
            if path is None:
                path = optima_path(problem, cfg["analysis"]["reference_tol"])
            horizon = len(trace)
            p = path if horizon == path.horizon else _truncate(path, horizon)
            constants = _constants(cfg, problem, scfg.alpha)
            report = analyze(problem, trace, p, constants, **_analysis_kwargs(cfg))
        except TVProxError as exc:
            log.error("analysis of %s failed: %s", label, exc)
            summary[label] = {"error": f"analysis: {exc}"}
            result.exit_code = EXIT_RUNTIME
            _store(result, label, trace_to_csv(trace), trace, None)
            continue
        summary[label] = _report_summary(report, trace)
        if problem.name == "network_flow":
            summary[label]["network"] = _network_context(problem, trace, p)
        if not report.all_satisfied and result.exit_code == EXIT_OK:
            result.exit_code = EXIT_VIOLATION
        _store(result, label, trace_to_csv(trace, report), trace, report)

    if "run" in summary and "baseline" in summary and "plateau" in summary["run"] \
            and "plateau" in summary.get("baseline", {}):
        summary["ordering"] = {
            "inexact_plateau": summary["run"]["plateau"]["final"],
            "exact_plateau": summary["baseline"]["plateau"]["final"],
            "inexact_ge_exact": summary["run"]["plateau"]["final"]
            >= summary["baseline"]["plateau"]["final"],
        }
    summary["exit_code"] = result.exit_code
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if result.csv is not None:
            (out_dir / "trace.csv").write_text(result.csv, encoding="utf-8")
        if result.baseline_csv is not None:
            (out_dir / "baseline_trace.csv").write_text(result.baseline_csv, encoding="utf-8")
        write_json(out_dir / "summary.json", summary)
    return result


def _store(result, label, text, trace, report):
    if label == "run":
        result.csv, result.trace, result.report = text, trace, report
    else:
        result.baseline_csv, result.baseline_trace, result.baseline_report = text, trace, report


def _truncate(path, K):
    from .analysis import path_metrics
    return path_metrics(path.optima[:K + 1], path.method)


def _network_context(problem, trace, path):
    z = gen.source_rates(problem, trace.X)
    z_opt = gen.source_rates(problem, path.optima[1:])
    return {"sigma_max": float(path.sigma.max()), "sigma_mean": float(path.sigma.mean()),
            "mean_rate": z.mean(axis=0).tolist(), "mean_optimal_rate": z_opt.mean(axis=0).tolist()}


def reevaluate_bounds(cfg: ExperimentConfig, trace) -> tuple:
    """Bound report for a trace read back from CSV (x0 taken from the config)."""
    problem = build_problem(cfg)
    scfg = solver_config(cfg, problem)
    from .solver import initial_point
    trace.x0 = initial_point(problem, scfg.x0)
    path = optima_path(problem, cfg["analysis"]["reference_tol"])
    if len(trace) != path.horizon:
        path = _truncate(path, len(trace))
    report = analyze(problem, trace, path, _constants(cfg, problem, scfg.alpha),
                     **_analysis_kwargs(cfg))
    code = EXIT_OK if report.all_satisfied else EXIT_VIOLATION
    return report, code


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def sweep_variants(cfg: ExperimentConfig):
    """Cartesian grid over seeds, eps schedules and gamma_e (empty axes are fixed)."""
    sw = cfg["sweep"]
    seeds = sw["seeds"] or [cfg["solver"]["seed"]]
    epss = sw["eps"] or [None]
    gammas = sw["gamma_e"] or [None]
    out = []
    for i, (seed, eps, ge) in enumerate(itertools.product(seeds, epss, gammas)):
        over = {"solver": {"seed": seed}}
        tag = f"run_{i:03d}_seed{seed}"
        if eps is not None:
            over["prox"] = {"eps": eps}
            tag += f"_eps{eps:g}"
        if ge is not None:
            over["gradient"] = {"gamma_e": ge}
            tag += f"_ge{ge:g}"
        out.append((tag, cfg.with_overrides(**over)))
    return out


def _sweep_one(args):
    tag, sections, out_dir = args
    res = run_experiment(ExperimentConfig(sections), Path(out_dir) / tag)
    return tag, res.exit_code


def run_sweep(cfg: ExperimentConfig, out_dir, jobs=None) -> int:
    """One independent pipeline per grid point, each in its own directory."""
    out_dir = Path(out_dir)
    variants = sweep_variants(cfg)
    jobs = cfg["sweep"]["jobs"] if jobs is None else jobs
    tasks = [(tag, c.sections, str(out_dir)) for tag, c in variants]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    codes = dict(results)
    write_json(out_dir / "sweep.json", {"config_sha256": cfg.sha256,
                                        "runs": [{"tag": t, "exit_code": c}
                                                 for t, c in results]})
    return max(codes.values()) if codes else EXIT_OK
