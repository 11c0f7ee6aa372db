"""Config parsing, end-to-end experiment runs, sweeps and plot-data export."""

from __future__ import annotations

import configparser
import io
import math
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import centralized as cen
from . import data as dpipe
from . import decentralized as dec
from .graphs import build_topology, metropolis_weights, spectral_gap
from .metrics import MetricRecorder, Trace, fit_rate, plateau
from .objectives import (LogisticProblem, QuadraticProblem, make_least_squares_problem, make_quadratic_problem,
                         reference_solution)

OUTPUT_ROOT_ENV = "GTVR_OUTPUT_ROOT"
CENTRALIZED = ("sgd", "saga", "svrg")
ALGORITHMS = CENTRALIZED + dec.ALGORITHMS
ALPHA_PRESETS = ("one_over_L", "one_over_L_global", "theoretical")
PLOT_METRICS = ("optimality_gap", "mse", "consensus_error", "tracking_residual", "test_accuracy")
X_AXES = {"epoch": "epoch", "grad_evals": "grad_evals_per_node", "comm_rounds": "comm_rounds_per_node"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending ``section.key``."""


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {type(exc).__name__}: {exc}")
        self.stage = stage


# -- schema ----------------------------------------------------------------------

def _choice(*options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return conv


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _auto(conv):
    def wrapped(text):
        return "auto" if text == "auto" else conv(text)
    return wrapped


def _positive(conv):
    def wrapped(text):
        val = conv(text)
        if not val > 0:
            raise ValueError("must be positive")
        return val
    return wrapped


def _alpha(text):
    return text if text in ALPHA_PRESETS else _positive(float)(text)


def _int_pair(text):
    parts = [int(p) for p in text.replace(" ", "").split(",")]
    if len(parts) != 2 or parts[0] == parts[1]:
        raise ValueError("expected two distinct integers such as 3,8")
    return tuple(parts)


def _fmt(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, tuple):
        return ",".join(str(v) for v in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


REQUIRED = object()

SCHEMA: dict[str, dict[str, tuple]] = {
    "experiment": {
        "name": (str, "run"),
        "seed": (int, 0),
    },
    "graph": {
        "kind": (_choice("ring", "complete", "exponential", "random_geometric"), REQUIRED),
        "n": (_positive(int), REQUIRED),
        "radius": (_auto(_positive(float)), "auto"),
        "seed": (_auto(int), "auto"),
    },
    "weights": {
        "method": (_choice("metropolis", "lazy_metropolis"), "metropolis"),
    },
    "data": {
        "source": (_choice("synthetic", "idx"), "synthetic"),
        "train_images": (str, ""),
        "train_labels": (str, ""),
        "test_images": (str, ""),
        "test_labels": (str, ""),
        "classes": (_int_pair, (3, 8)),
        "normalize": (_bool, True),
        "partition": (_choice(*dpipe.PARTITION_MODES), "balanced_homogeneous"),
        "partition_seed": (_auto(int), "auto"),
        "samples": (_positive(int), 1200),
        "test_samples": (int, 0),
        "dim": (_positive(int), 10),
        "separation": (float, 1.0),
        "noise": (float, 1.0),
    },
    "objective": {
        "kind": (_choice("logistic", "quadratic", "least_squares"), "logistic"),
        "lambda_reg": (_auto(_positive(float)), "auto"),
        "components_per_node": (_positive(int), 1),
        "dim": (_positive(int), 5),
        "heterogeneity": (float, 1.0),
        "noise": (float, 0.0),
        "ridge": (float, 0.0),
        "fixture": (str, ""),
    },
    "algorithm": {
        "name": (_choice(*ALGORITHMS), REQUIRED),
        "schedule": (_choice(*cen.SCHEDULES), "constant"),
        "alpha": (_alpha, "one_over_L"),
        "harmonic_offset": (_positive(float), 1.0),
        "T": (_auto(_positive(int)), "auto"),
        "svrg_option": (_choice("a", "b", "c"), "a"),
        "svrg_tracker": (_choice(*dec.SVRG_TRACKERS), "refresh"),
        "saga_storage": (_choice(*cen.SAGA_STORAGE), "full"),
        "budget_epochs": (_positive(float), 60.0),
        "seed": (_auto(int), "auto"),
        "workers": (_positive(int), 1),
    },
    "output": {
        "directory": (str, "runs/run"),
        "record_every": (_auto(_positive(int)), "auto"),
    },
}


@dataclass
class ExperimentConfig:
    """Typed values for every schema key, plus the directory relative paths resolve against."""

    values: dict[str, dict[str, object]]
    base_dir: Path = field(default_factory=Path.cwd)

    def get(self, path: str):
        section, key = _split(path)
        return self.values[section][key]

    def with_value(self, path: str, text: str) -> "ExperimentConfig":
        section, key = _split(path)
        conv, _ = SCHEMA[section][key]
        vals = {s: dict(kv) for s, kv in self.values.items()}
        try:
            vals[section][key] = conv(str(text))
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return ExperimentConfig(vals, self.base_dir)

    def path(self, path: str) -> Path | None:
        raw = self.get(path)
        if not raw:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p


def _split(path: str):
    section, _, key = path.partition(".")
    if section not in SCHEMA or key not in SCHEMA[section]:
        raise ConfigError(f"unknown parameter {path!r}")
    return section, key


def parse_config_text(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
    values: dict[str, dict[str, object]] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (conv, default) in keys.items():
            if parser.has_option(section, key):
                try:
                    values[section][key] = conv(parser[section][key].strip())
                except ValueError as exc:
                    raise ConfigError(f"{section}.{key}: {exc}") from None
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {section}.{key}")
            else:
                values[section][key] = default
    cfg = ExperimentConfig(values, base_dir or Path.cwd())
    _validate(cfg)
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, path.resolve().parent)


def write_config(cfg: ExperimentConfig) -> str:
    out = io.StringIO()
    for section, keys in cfg.values.items():
        out.write(f"[{section}]\n")
        for key, val in keys.items():
            out.write(f"{key} = {_fmt(val)}\n")
        out.write("\n")
    return out.getvalue()


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.get("graph.kind") == "random_geometric" and cfg.get("graph.radius") == "auto":
        raise ConfigError("graph.radius is required for random_geometric graphs")
    if cfg.get("objective.kind") == "logistic" and cfg.get("data.source") == "idx":
        for key in ("data.train_images", "data.train_labels"):
            p = cfg.path(key)
            if p is None:
                raise ConfigError(f"{key} is required when data.source = idx")
            if not p.exists():
                raise ConfigError(f"{key}: file not found: {p}")
        test = [cfg.path("data.test_images"), cfg.path("data.test_labels")]
        if (test[0] is None) != (test[1] is None):
            raise ConfigError("data.test_images and data.test_labels must be given together")
        for key, p in zip(("data.test_images", "data.test_labels"), test):
            if p is not None and not p.exists():
                raise ConfigError(f"{key}: file not found: {p}")
    fixture = cfg.path("objective.fixture")
    if fixture is not None and not fixture.exists():
        raise ConfigError(f"objective.fixture: file not found: {fixture}")


# -- pipeline --------------------------------------------------------------------

@dataclass
class Problem:
    oracle: object
    theta_star: np.ndarray
    test_set: dpipe.Dataset | None
    partition_mode: str


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    echo: str
    directory: Path
    trace_path: Path
    trace: Trace
    summary: dict


def _seed(cfg, key):
    val = cfg.get(key)
    return cfg.get("experiment.seed") if val == "auto" else val


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _load_data(cfg):
    classes = cfg.get("data.classes")
    test = None
    if cfg.get("data.source") == "idx":
        train = dpipe.load_idx(cfg.path("data.train_images"), cfg.path("data.train_labels"))
        if cfg.path("data.test_images") is not None:
            test = dpipe.load_idx(cfg.path("data.test_images"), cfg.path("data.test_labels"))
    else:
        seed = cfg.get("experiment.seed")
        total = cfg.get("data.samples") + cfg.get("data.test_samples")
        pool = dpipe.make_blobs(total, cfg.get("data.dim"), classes, cfg.get("data.separation"),
                                cfg.get("data.noise"), seed)
        n_train = cfg.get("data.samples")
        train = dpipe.Dataset(pool.features[:n_train], pool.labels[:n_train])
        if cfg.get("data.test_samples") > 0:
            test = dpipe.Dataset(pool.features[n_train:], pool.labels[n_train:])
    train = dpipe.binarize_classes(train, *classes)
    if test is not None:
        test = dpipe.binarize_classes(test, *classes)
    if cfg.get("data.normalize"):
        train = dpipe.normalize_unit(train)
        test = dpipe.normalize_unit(test) if test is not None else None
    return train, test


def build_problem(cfg: ExperimentConfig) -> Problem:
    n = cfg.get("graph.n")
    kind = cfg.get("objective.kind")
    seed = cfg.get("experiment.seed")
    if kind == "logistic":
        train, test = _stage("data", _load_data, cfg)
        part = _stage("partition", dpipe.partition, train, n, cfg.get("data.partition"),
                      _seed(cfg, "data.partition_seed"))
        lam = cfg.get("objective.lambda_reg")
        oracle = LogisticProblem.from_partition(train, part, None if lam == "auto" else lam)
        mode = cfg.get("data.partition")
    else:
        test = None
        mode = "balanced_homogeneous"
        fixture = cfg.path("objective.fixture")
        m, p = cfg.get("objective.components_per_node"), cfg.get("objective.dim")
        het, noise, ridge = cfg.get("objective.heterogeneity"), cfg.get("objective.noise"), cfg.get("objective.ridge")
        if fixture is not None:
            oracle = _stage("objective", QuadraticProblem.load, fixture)
        elif kind == "quadratic":
            oracle = make_quadratic_problem(n, m, p, heterogeneity=het, noise=noise, ridge=ridge, seed=seed)
        else:
            oracle = make_least_squares_problem(n, m, p, heterogeneity=het, noise=noise, ridge=ridge or 0.1, seed=seed)
        if oracle.n != n:
            raise ConfigError(f"objective.fixture has {oracle.n} nodes but graph.n = {n}")
    theta_star = _stage("reference solve", reference_solution, oracle)
    return Problem(oracle, theta_star, test, mode)


def resolve_T(cfg, oracle, lam: float, mode: str) -> int | None:
    name = cfg.get("algorithm.name")
    if name not in ("svrg", "gt_svrg"):
        return None
    T = cfg.get("algorithm.T")
    if T != "auto":
        return T
    if cfg.get("algorithm.alpha") == "theoretical":
        kappa = oracle.smoothness().kappa
        if name == "svrg":
            return int(math.ceil(50 * kappa))
        return int(math.ceil(kappa**2 * math.log(max(kappa, math.e)) / (1.0 - lam) ** 2))
    per_node = oracle.num_components / (1 if name == "svrg" else oracle.n)
    factor = 4 if mode == "unbalanced_single_class" else 1
    return max(1, int(round(factor * per_node)))


def resolve_alpha(cfg, oracle, lam: float) -> float:
    alpha = cfg.get("algorithm.alpha")
    if not isinstance(alpha, str):
        return float(alpha)
    info = oracle.smoothness()
    name = cfg.get("algorithm.name")
    harmonic = cfg.get("algorithm.schedule") == "harmonic"
    if alpha == "one_over_L":
        base = 1.0 / info.L
    elif alpha == "one_over_L_global":
        base = 1.0 / (info.L_global or info.L)
    elif name in CENTRALIZED:
        base = {"sgd": 1.0 / info.L, "saga": 1.0 / (3 * info.L), "svrg": 1.0 / (10 * info.L)}[name]
    else:
        base = (1.0 - lam) ** 2 / (info.L * info.kappa)
    # a harmonic schedule c/(k+1) needs c of order 1/mu for the O(1/k) rate
    if harmonic and alpha == "theoretical":
        base = 1.0 / info.mu
    return base


def iterations_for_budget(name: str, sizes, budget_epochs: float, T: int | None) -> int:
    """Largest iteration count (outer loops for SVRG types) within the per-node evaluation budget."""
    sizes = np.asarray(sizes)
    per_node = sizes.sum() / len(sizes)
    if name in CENTRALIZED:
        per_node, M = float(sizes.sum()), int(sizes.sum())
    else:
        M = int(sizes.max())
    budget = int(math.floor(budget_epochs * per_node + 1e-9))
    count = {
        "sgd": budget, "dsgd": budget, "gt_dsgd": budget - 1,
        "saga": budget - M, "gt_saga": budget - M,
        "gt_dgd": budget // M - 1,
        "svrg": budget // (M + 2 * T) if T else 0, "gt_svrg": budget // (M + 2 * T) if T else 0,
    }[name]
    return max(1, int(count))


def execute(cfg: ExperimentConfig, problem: Problem | None = None, workers: int | None = None):
    """Run the configured algorithm; returns ``(trace, resolved, info)``."""
    problem = problem or build_problem(cfg)
    oracle = problem.oracle
    name = cfg.get("algorithm.name")
    n = cfg.get("graph.n")
    topo = _stage("graph", build_topology, cfg.get("graph.kind"), n,
                  {} if cfg.get("graph.radius") == "auto" else {"radius": cfg.get("graph.radius")},
                  _seed(cfg, "graph.seed"))
    W = metropolis_weights(topo, lazy=cfg.get("weights.method") == "lazy_metropolis")
    lam = _stage("weights", spectral_gap, W).lam
    T = resolve_T(cfg, oracle, lam, problem.partition_mode)
    alpha = resolve_alpha(cfg, oracle, lam)
    schedule = cen.StepSchedule(cfg.get("algorithm.schedule"), alpha, cfg.get("algorithm.harmonic_offset"))
    seed = _seed(cfg, "algorithm.seed")
    sizes = oracle.sizes
    iters = iterations_for_budget(name, sizes, cfg.get("algorithm.budget_epochs"), T)
    every = cfg.get("output.record_every")
    if name in CENTRALIZED:
        target = oracle.pooled() if oracle.n > 1 else oracle
        every = every if every != "auto" else dec.default_record_every(name, target)
        rec = MetricRecorder(target, problem.theta_star, problem.test_set, every, algorithm=name)
        if name == "sgd":
            run = lambda: cen.run_sgd(target, schedule, iters, seed, recorder=rec)
        elif name == "saga":
            run = lambda: cen.run_saga(target, alpha, iters, seed, storage=cfg.get("algorithm.saga_storage"),
                                       recorder=rec)
        else:
            run = lambda: cen.run_svrg(target, alpha, T, iters, cfg.get("algorithm.svrg_option"), seed,
                                       recorder=rec, record_every=every)
        trace = _stage("optimizer", run)
    else:
        every = every if every != "auto" else dec.default_record_every(name, oracle)
        rc = dec.RunConfig(name, schedule, iters, seed=seed, T=T, svrg_option=cfg.get("algorithm.svrg_option"),
                           svrg_tracker=cfg.get("algorithm.svrg_tracker"),
                           saga_storage=cfg.get("algorithm.saga_storage"), record_every=every,
                           workers=workers or cfg.get("algorithm.workers"))
        rec = MetricRecorder(oracle, problem.theta_star, problem.test_set, every, algorithm=name)
        trace = _stage("optimizer", dec.run, oracle, W, rc, recorder=rec)
    info = oracle.smoothness()
    resolved = {"alpha": alpha, "T": T, "iterations": iters, "lambda": lam, "L": info.L, "mu": info.mu,
                "kappa": info.kappa, "record_every": every, "N": oracle.num_components}
    return trace, resolved, info


def _materialize(cfg: ExperimentConfig, resolved: dict) -> ExperimentConfig:
    out = cfg
    master = str(cfg.get("experiment.seed"))
    for key in ("graph.seed", "data.partition_seed", "algorithm.seed"):
        if cfg.get(key) == "auto":
            out = out.with_value(key, master)
    if cfg.get("algorithm.T") == "auto" and resolved["T"] is not None:
        out = out.with_value("algorithm.T", str(resolved["T"]))
    if cfg.get("output.record_every") == "auto":
        out = out.with_value("output.record_every", str(resolved["record_every"]))
    if cfg.get("objective.lambda_reg") == "auto" and cfg.get("objective.kind") == "logistic":
        out = out.with_value("objective.lambda_reg", repr(1.0 / resolved["N"]))
    return out


def output_directory(cfg: ExperimentConfig) -> Path:
    raw = Path(cfg.get("output.directory"))
    if raw.is_absolute():
        return raw
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return (Path(root) if root else cfg.base_dir) / raw


def summarize(trace: Trace, resolved: dict, cfg: ExperimentConfig) -> dict:
    gaps = trace.column("optimality_gap")
    ks = trace.column("k")
    summary = {
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": cfg.get("experiment.seed"),
        "algorithm": cfg.get("algorithm.name"),
        "gap_metric": trace.gap_metric,
        "final_gap": trace.last.optimality_gap,
        "final_mse": trace.last.mse,
        "final_epoch": trace.last.epoch,
        "grad_evals_per_node": trace.last.grad_evals_per_node,
        "comm_rounds_per_node": trace.last.comm_rounds_per_node,
    }
    summary.update({f"resolved_{k}": v for k, v in resolved.items()})
    try:
        fit = fit_rate(gaps, ks)
        summary["fitted_slope"] = fit.slope
        summary["fitted_r_squared"] = fit.r_squared
    except ValueError:
        summary["fitted_slope"] = None
        summary["fitted_r_squared"] = None
    plat = plateau(gaps, ks)
    summary["plateau"] = plat.level if plat.flat else None
    if trace.last.test_accuracy is not None:
        summary["test_accuracy"] = trace.last.test_accuracy
    return summary


def run_experiment(cfg: ExperimentConfig, directory: Path | None = None, workers: int | None = None) -> ExperimentResult:
    """Build, run and write ``config.echo``, ``trace.csv`` and ``summary.txt``."""
    trace, resolved, _ = execute(cfg, workers=workers)
    echo_cfg = _materialize(cfg, resolved)
    echo = write_config(echo_cfg)
    out = directory or output_directory(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo").write_text(echo)
    trace_path = out / "trace.csv"
    trace.write_csv(trace_path)
    summary = summarize(trace, resolved, cfg)
    (out / "summary.txt").write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in summary.items()))
    return ExperimentResult(echo_cfg, echo, out, trace_path, trace, summary)


def sweep(base: ExperimentConfig, parameter: str, values, root: Path | None = None) -> dict[str, ExperimentResult]:
    """Independent runs with ``parameter`` set to each value, keyed by the value text."""
    _split(parameter)
    root = root or output_directory(base)
    results = {}
    for val in values:
        text = str(val)
        cfg = base.with_value(parameter, text)
        results[text] = run_experiment(cfg, root / f"{parameter}={text}")
    return results


def emit_plot_data(runs: dict[str, Trace], x_axis: str = "epoch") -> str:
    """Long-format CSV ``run_label,x,metric,value`` with one row per present metric value."""
    if x_axis not in X_AXES:
        raise ValueError(f"unknown x axis {x_axis!r}; expected one of {tuple(X_AXES)}")
    schemas = {t.gap_metric for t in runs.values()}
    if len(schemas) > 1:
        raise ValueError(f"traces mix gap metrics {sorted(schemas)}; cannot combine them")
    lines = ["run_label,x,metric,value"]
    col = X_AXES[x_axis]
    for label, trace in runs.items():
        for rec in trace.records:
            x = getattr(rec, col)
            xs = repr(float(x)) if col == "epoch" else str(int(x))
            for metric in PLOT_METRICS:
                val = getattr(rec, metric)
                if val is not None:
                    lines.append(f"{label},{xs},{metric},{float(val)!r}")
    return "\n".join(lines) + "\n"
