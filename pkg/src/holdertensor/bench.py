"""Experiment runner: instances from short specs, trace files, bound replay,
empirical rate slopes and lower-bound evaluators.

A run writes two files into its output directory:

``trace.csv``
    One row per iteration with the columns of :data:`TRACE_COLUMNS` (and an
    optional ``x_coords`` column with space-separated coordinates).  Reals are
    written in scientific notation with 17 significant digits, so reading the
    file back reproduces the in-memory values exactly.
``summary.json``
    Terminal status, counts, the run configuration, the instance metadata the
    bound replays need, and a few scheme-specific scalar sequences.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from types import SimpleNamespace

import numpy as np

from .instances import zoo
from .oracle import CompositePart
from .schemes import (
    TRACE_COLUMNS,
    RunTrace,
    SchemeConfig,
    SchemeError,
    evaluate_N,
    evaluate_Ntilde,
    run_accelerated,
    run_alg1,
    run_alg2,
    run_alg3,
    run_alg4,
    run_alg6_restart,
)

__all__ = [
    "SCHEMES",
    "BOUND_TAGS",
    "SCHEMA_VERSION",
    "ConfigError",
    "InstanceSpec",
    "ExperimentConfig",
    "BoundReport",
    "parse_instance_spec",
    "build_instance",
    "run_experiment",
    "run_batch",
    "write_trace_csv",
    "read_trace_csv",
    "write_summary",
    "load_run",
    "replay_bounds",
    "slope_estimate",
    "lower_bound_evaluate",
]

SCHEMES = ("alg1", "alg2", "alg3", "alg4", "alg5", "alg6", "algA")
SCHEMA_VERSION = 1
TRACE_FILE = "trace.csv"
SUMMARY_FILE = "summary.json"
_SUMMARY_SERIES = ("A", "a", "x_grad", "z_f", "f_grad", "j", "min_trial_grad")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the field path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


# --------------------------------------------------------------------------- instances

_INSTANCE_KEYS = {
    "quadratic": {"n", "x0", "cond", "phi", "weight", "bound"},
    "power_norm": {"n", "x0", "degree", "center", "phi", "weight", "bound"},
    "log_sum_exp": {"n", "x0", "scale", "phi", "weight", "bound"},
    "hard": {"n", "x0", "k", "phi", "weight", "bound"},
}


@dataclass(frozen=True)
class InstanceSpec:
    """Zoo function name plus string-valued parameters."""

    name: str
    params: tuple = ()

    def get(self, key, default=None):
        return dict(self.params).get(key, default)

    def __str__(self):
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={v}" for k, v in self.params)


def parse_instance_spec(text):
    """Parse ``name:key=value,key=value``.

    Recognised keys: ``n`` (dimension), ``x0`` (``random``, ``zero`` or
    ``ones``), ``phi`` (``none``, ``l1`` or ``box``) with ``weight`` and
    ``bound``, and per function ``cond`` (quadratic), ``degree`` and
    ``center`` (power_norm), ``scale`` (log_sum_exp), ``k`` (hard).
    """
    if isinstance(text, InstanceSpec):
        return text
    name, _, rest = str(text).strip().partition(":")
    if name not in _INSTANCE_KEYS:
        raise ConfigError("instance.name", f"unknown function {name!r}; choose from "
                          f"{sorted(_INSTANCE_KEYS)}")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        key = key.strip()
        if not eq:
            raise ConfigError(f"instance.params.{key}", "expected key=value")
        if key not in _INSTANCE_KEYS[name]:
            raise ConfigError(f"instance.params.{key}", f"not a parameter of {name}")
        params[key] = value.strip()
    return InstanceSpec(name, tuple(sorted(params.items())))


def _param(spec, key, kind, default):
    raw = spec.get(key)
    if raw is None:
        return default
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"instance.params.{key}", f"cannot read {raw!r} as {kind.__name__}") \
            from exc


def build_instance(spec, p=2, nu=None, seed=0):
    """Oracle, composite part, starting point and replay metadata for a spec.

    Random data (the quadratic's matrix and vector, the power-norm center and
    a random starting point) are drawn from ``numpy.random.default_rng(seed)``
    in that order.
    """
    spec = parse_instance_spec(spec)
    rng = np.random.default_rng(seed)
    n = _param(spec, "n", int, 8)
    if n < 1:
        raise ConfigError("instance.params.n", "must be positive")
    name = spec.name
    extra = {}
    try:
        if name == "quadratic":
            cond = _param(spec, "cond", float, 10.0)
            if not cond >= 1.0:
                raise ConfigError("instance.params.cond", "must be at least 1")
            U, _ = np.linalg.qr(rng.standard_normal((n, n)))
            lam = np.linspace(1.0, cond, n)
            Q = (U * lam) @ U.T
            Q = 0.5 * (Q + Q.T)
            f = zoo(name, n, p=p, nu=nu, Q=Q, b=rng.standard_normal(n))
        elif name == "power_norm":
            center = spec.get("center", "random")
            if center not in ("random", "zero"):
                raise ConfigError("instance.params.center", "must be random or zero")
            c = rng.standard_normal(n) if center == "random" else np.zeros(n)
            f = zoo(name, n, p=p, nu=nu, degree=_param(spec, "degree", float, 3.0), center=c)
        elif name == "log_sum_exp":
            f = zoo(name, n, p=p, nu=nu, scale=_param(spec, "scale", float, 1.0))
        else:
            f = zoo(name, n, p=p, nu=nu, k=_param(spec, "k", int, n))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"instance.{name}", str(exc)) from exc

    start = spec.get("x0", "zero" if name == "hard" else "random")
    if start == "random":
        x0 = rng.standard_normal(n)
    elif start == "zero":
        x0 = np.zeros(n)
    elif start == "ones":
        x0 = np.ones(n)
    else:
        raise ConfigError("instance.params.x0", "must be random, zero or ones")

    kind = spec.get("phi", "none")
    if kind == "none":
        phi = None
    elif kind == "l1":
        phi = CompositePart.l1(_param(spec, "weight", float, 0.1))
    elif kind == "box":
        b = _param(spec, "bound", float, 1.0)
        if not b > 0:
            raise ConfigError("instance.params.bound", "must be positive")
        phi = CompositePart.box(-b * np.ones(n), b * np.ones(n))
        x0 = np.clip(x0, -b, b)
    else:
        raise ConfigError("instance.params.phi", "must be none, l1 or box")

    info = f.info
    if phi is None:
        f0 = f.value(x0)
        if name == "quadratic":
            gap = max(f0 - info["f_star"], 0.0)
            extra["D0"] = math.sqrt(2.0 * gap / info["lambda_min"])
        elif name == "power_norm":
            extra["D0"] = float(np.linalg.norm(x0 - info["x_star"]))
    else:
        # the composite optimum is not known in closed form; since phi >= 0,
        # the smooth optimum is a lower bound on it
        if "f_star" in info:
            extra["f_star_lower"] = info["f_star"]
        extra["composite_optimum_unknown"] = True
    return f, phi, x0, extra


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run."""

    instance: str
    scheme: str
    epsilon: float = 1e-6
    p: int = 2
    nu: float | None = None
    H0: float = 1.0
    Htilde0: float = 1.0
    theta: float = 1e-2
    max_iters: int = 1000
    seed: int = 0
    out: str | None = None
    x_coords: bool = False
    nonconvex: bool = False
    fixed_M: float | None = None
    delta: float | None = None
    R: float | None = None
    S: float | None = None

    def scheme_config(self):
        try:
            return SchemeConfig(epsilon=self.epsilon, H0=self.H0, Htilde0=self.Htilde0,
                                theta=self.theta, nu=self.nu,
                                max_outer_iterations=self.max_iters, p=self.p,
                                nonconvex=self.nonconvex)
        except ValueError as exc:
            raise ConfigError("config", str(exc)) from exc

    def validate(self):
        """Check field values and scheme/instance compatibility."""
        if self.scheme not in SCHEMES:
            raise ConfigError("scheme", f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        checks = [
            ("epsilon", self.epsilon > 0, "must be positive"),
            ("p", self.p in (2, 3), "must be 2 or 3"),
            ("nu", self.nu is None or 0.0 <= self.nu <= 1.0, "must lie in [0, 1] or be unknown"),
            ("H0", self.H0 > 0, "must be positive"),
            ("Htilde0", self.Htilde0 > 0, "must be positive"),
            ("theta", self.theta >= 0, "must be nonnegative"),
            ("max_iters", self.max_iters >= 0, "must be nonnegative"),
            ("seed", self.seed >= 0, "must be a natural number"),
            ("fixed_M", self.fixed_M is None or self.fixed_M > 0, "must be positive"),
            ("delta", self.delta is None or self.delta > 0, "must be positive"),
            ("R", self.R is None or self.R >= 1, "must be at least 1"),
            ("S", self.S is None or self.S >= 1, "must be at least 1"),
        ]
        for name, ok, why in checks:
            if not ok:
                raise ConfigError(f"config.{name}", why)
        spec = parse_instance_spec(self.instance)
        fixed_schemes = ("alg3", "alg4", "alg5", "alg6", "algA")
        if self.scheme in fixed_schemes and self.nu is None:
            raise ConfigError("config.nu", f"{self.scheme} needs a known exponent nu")
        if self.scheme in ("alg1", "alg2") and spec.get("phi", "none") != "none":
            raise ConfigError("instance.params.phi",
                              f"{self.scheme} handles smooth problems only")
        return spec


def _fixed_constant(cfg, f, scheme, override):
    """Default fixed constant of the accelerated composite schemes."""
    if override is not None:
        return override
    H = f.holder_constant
    fac = math.factorial(cfg.p - 1)
    if scheme == "alg5":
        return cfg.p * (H + 3.0 * cfg.theta * fac)
    return (cfg.q - 1.0) * (H + cfg.theta * fac)


def _distance_bound(meta):
    """Upper bound on ``||x0 - x*||`` from the metadata, or ``None``."""
    if meta.get("composite_optimum_unknown"):
        return None
    x0 = meta.get("x0")
    if x0 is None:
        return None
    x0 = np.asarray(x0, dtype=float)
    if meta.get("x_star") is not None:
        return float(np.linalg.norm(x0 - np.asarray(meta["x_star"], dtype=float)))
    if meta.get("minimizer_norm_bound") is not None:
        return float(np.linalg.norm(x0)) + float(meta["minimizer_norm_bound"])
    return None


def _execute(config):
    spec = config.validate()
    cfg = config.scheme_config()
    try:
        f, phi, x0, extra = build_instance(spec, cfg.p, cfg.nu, config.seed)
    except ConfigError:
        raise
    scheme = config.scheme
    try:
        if scheme == "alg1":
            trace = run_alg1(f, cfg, x0)
        elif scheme == "alg2":
            trace = run_alg2(f, cfg, x0)
        elif scheme == "alg3":
            trace = run_alg3(f, phi, cfg, x0)
        elif scheme == "alg4":
            trace = run_alg4(f, phi, cfg, x0)
        elif scheme in ("alg5", "algA"):
            M = _fixed_constant(cfg, f, scheme, config.fixed_M)
            trace = run_accelerated(f, phi, cfg, M, config.max_iters, x0, scheme=scheme)
        else:
            meta = dict(f.info, x0=x0, **extra)
            R, S, delta = config.R, config.S, config.delta
            if delta is None and R is None and S is None:
                dist = _distance_bound(meta)
                if dist is None:
                    raise ConfigError("config.R", "no distance bound is known for this "
                                      "instance; give R, S or delta")
                R = max(1.0, dist)
            trace = run_alg6_restart(f, phi, cfg, x0, delta=delta, R=R, S=S)
    except (SchemeError, ConfigError):
        raise
    except ValueError as exc:
        raise ConfigError("config", str(exc)) from exc
    trace.meta.update(extra)
    trace.meta["instance_spec"] = str(spec)
    trace.meta["seed"] = config.seed
    return trace


def run_experiment(config):
    """Run the configured scheme and, when ``config.out`` is set, write
    ``trace.csv`` and ``summary.json`` into that directory.

    A run that stops with an error still writes its partial trace before the
    :class:`SchemeError` propagates.
    """
    try:
        trace = _execute(config)
    except SchemeError as exc:
        if config.out is not None and exc.trace is not None:
            _persist(exc.trace, config)
        raise
    if config.out is not None:
        _persist(trace, config)
    return trace


def _persist(trace, config):
    os.makedirs(config.out, exist_ok=True)
    write_trace_csv(trace, os.path.join(config.out, TRACE_FILE), x_coords=config.x_coords)
    write_summary(trace, os.path.join(config.out, SUMMARY_FILE), config)


def _run_quietly(config):
    try:
        trace = run_experiment(config)
        return trace.status, trace.message
    except (SchemeError, ConfigError) as exc:
        return "error", str(exc)


def run_batch(configs, max_workers=None):
    """Run independent experiments in worker processes.

    Each configuration should name its own output directory.  Returns
    ``(status, message)`` pairs in the order of ``configs``.
    """
    configs = list(configs)
    outs = [c.out for c in configs if c.out is not None]
    if len(set(outs)) != len(outs):
        raise ConfigError("out", "batch runs must write to distinct directories")
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_run_quietly, configs))


# --------------------------------------------------------------------------- files


def _fmt(value):
    return f"{value:.16e}"


def write_trace_csv(trace, path=None, x_coords=False):
    """Write the trace rows; returns the CSV text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(TRACE_COLUMNS) + (["x_coords"] if x_coords else [])
    writer.writerow(header)
    for row, x in zip(trace.rows, trace.iterates):
        it, fv, g, H, Ht, inner, calls, tag = row
        out = [str(it), _fmt(fv), _fmt(g), _fmt(H), _fmt(Ht), str(inner), str(calls), tag]
        if x_coords:
            out.append("" if x is None else " ".join(_fmt(v) for v in x))
        writer.writerow(out)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def read_trace_csv(path, scheme="unknown", meta=None):
    """Read a trace written by :func:`write_trace_csv`."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:len(TRACE_COLUMNS)]) != TRACE_COLUMNS:
            raise ValueError(f"{path}: not a trace file (bad header)")
        with_x = len(header) > len(TRACE_COLUMNS) and header[len(TRACE_COLUMNS)] == "x_coords"
        trace = RunTrace(scheme, dict(meta or {}))
        for line in reader:
            row = (int(line[0]), float(line[1]), float(line[2]), float(line[3]),
                   float(line[4]), int(line[5]), int(line[6]), line[7])
            trace.rows.append(row)
            x = None
            if with_x and line[8]:
                x = np.array([float(v) for v in line[8].split()])
            trace.iterates.append(x)
    return trace


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (bool, int, str)) or value is None:
        return value
    return str(value)


def write_summary(trace, path=None, config=None):
    """Write the JSON summary; returns the JSON text."""
    rows = trace.rows
    summary = {
        "schema_version": SCHEMA_VERSION,
        "scheme": trace.scheme,
        "status": trace.status,
        "message": trace.message,
        "iterations": rows[-1][0] if rows else 0,
        "oracle_calls": rows[-1][6] if rows else 0,
        "min_grad_norm": trace.min_gradient() if rows else None,
        "final_grad_norm": rows[-1][2] if rows else None,
        "final_value": rows[-1][1] if rows else None,
        "config": None if config is None else asdict(config),
        "meta": trace.meta,
        "series": {k: trace.series[k] for k in _SUMMARY_SERIES if k in trace.series},
    }
    text = json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def load_run(path):
    """Load a trace CSV together with the ``summary.json`` beside it (if any).

    ``path`` is a trace file or a run directory.
    """
    if os.path.isdir(path):
        path = os.path.join(path, TRACE_FILE)
    summary_path = os.path.join(os.path.dirname(os.path.abspath(path)), SUMMARY_FILE)
    summary = {}
    if os.path.exists(summary_path):
        with open(summary_path, encoding="utf-8") as fh:
            summary = json.load(fh)
        if summary.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"{summary_path}: unsupported schema_version "
                             f"{summary.get('schema_version')!r}")
    trace = read_trace_csv(path, summary.get("scheme", "unknown"), summary.get("meta"))
    trace.status = summary.get("status", "unknown")
    trace.message = summary.get("message", "")
    for k, v in summary.get("series", {}).items():
        trace.series[k] = list(v)
    return trace


# --------------------------------------------------------------------------- bound replay


@dataclass
class BoundReport:
    """Per-iteration comparison of a measured quantity with a bound."""

    tag: str
    iterations: list = field(default_factory=list)
    lhs: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    satisfied: bool = False
    worst_margin: float = math.nan
    skipped_reason: str | None = None

    @property
    def skipped(self):
        return self.skipped_reason is not None

    def line(self):
        if self.skipped:
            return f"{self.tag}: skipped ({self.skipped_reason})"
        verdict = "satisfied" if self.satisfied else "VIOLATED"
        return (f"{self.tag}: {verdict} on {len(self.iterations)} iterations, "
                f"worst margin {self.worst_margin:.6e}")


class _Missing(Exception):
    pass


def _need(meta, *keys):
    out = []
    for k in keys:
        if meta.get(k) is None:
            raise _Missing(f"missing metadata {k!r}")
        out.append(meta[k])
    return out if len(out) > 1 else out[0]


def _config_from_meta(meta):
    nu = meta.get("nu")
    return SchemeConfig(epsilon=float(_need(meta, "epsilon")), H0=float(meta.get("H0", 1.0)),
                        Htilde0=float(meta.get("Htilde0", 1.0)),
                        theta=float(_need(meta, "theta")), nu=nu, p=int(_need(meta, "p")))


def _holder(meta):
    return SimpleNamespace(holder_nu=_need(meta, "holder_nu"),
                           holder_constant=_need(meta, "holder_constant"),
                           name=meta.get("instance", "instance"))


def _eps_guard(meta):
    eps = float(_need(meta, "epsilon"))
    if not 0.0 < eps < 1.0:
        raise _Missing("constants require ε ∈ (0,1)")
    return eps


def _caps(meta):
    cfg = _config_from_meta(meta)
    f = _holder(meta)
    return cfg, max(cfg.H0, evaluate_N(cfg, f)), max(cfg.Htilde0, evaluate_Ntilde(cfg, f))


def _segment(trace, eps, smooth_tag="grad_stop"):
    """Row indices ``0..T`` preceding the first row with gradient <= eps or a
    gradient-triggered acceptance."""
    idx = []
    for k, row in enumerate(trace.rows):
        if row[2] <= eps or row[7] == smooth_tag:
            break
        idx.append(k)
    return idx


def _q(meta):
    return int(_need(meta, "p")) + float(_need(meta, "alpha"))


def _bound_3_8(trace, meta):
    _eps_guard(meta)
    _, capN, _ = _caps(meta)
    its = list(range(len(trace.rows)))
    return its, [trace.rows[k][3] for k in its], [capN] * len(its)


def _bound_4_21(trace, meta):
    _eps_guard(meta)
    _, _, capNt = _caps(meta)
    its = list(range(len(trace.rows)))
    return its, [trace.rows[k][4] for k in its], [capNt] * len(its)


def _bound_3_10(trace, meta):
    _eps_guard(meta)
    cfg, capN, _ = _caps(meta)
    its = list(range(len(trace.rows)))
    extra = math.log2(capN) - math.log2(cfg.H0)
    return its, [float(trace.rows[k][6]) for k in its], [2.0 * trace.rows[k][0] + extra
                                                         for k in its]


def _bound_3_12(trace, meta):
    eps = _eps_guard(meta)
    if meta.get("nonconvex"):
        raise _Missing("the rate needs convexity; nonconvex runs use 'nc-count'")
    cfg, capN, _ = _caps(meta)
    f_star, D0 = _need(meta, "f_star", "D0")
    D0 = max(float(D0), 1.0 + 1e-9)
    p, q = cfg.p, cfg.q
    seg = _segment(trace, eps)
    level = 4.0 * (8.0 * math.factorial(p + 1)) ** (q - 1.0) * capN * D0 ** q
    m = next((k for k in seg if trace.rows[k][1] - f_star <= level), None)
    if m is None:
        raise _Missing("the functional-residual threshold is never reached on the segment")
    its, lhs, rhs = [], [], []
    for T in seg:
        if T > m and (T - m) % 3 == 0:
            its.append(T)
            lhs.append(min(trace.rows[k][2] for k in range(T + 1)))
            rhs.append(2.0 * (288.0 * p * math.factorial(p + 1) * D0 / (T - m)) ** (q - 1.0)
                       * capN)
    return its, lhs, rhs


def _bound_nc_count(trace, meta):
    """Iteration count of the plain method without convexity:
    ``T <= 8 (p+1)! (2 max{H0, N})^(1/(q-1)) (f(x0) - f*) eps^(-q/(q-1))``."""
    eps = _eps_guard(meta)
    cfg, capN, _ = _caps(meta)
    f_star = meta.get("f_star", meta.get("f_star_lower"))
    if f_star is None:
        raise _Missing("missing metadata 'f_star'")
    seg = _segment(trace, eps)
    if not seg:
        raise _Missing("no iteration with gradient above epsilon")
    p, q = cfg.p, cfg.q
    T = seg[-1]
    rhs = (8.0 * math.factorial(p + 1) * (2.0 * capN) ** (1.0 / (q - 1.0))
           * (trace.rows[0][1] - f_star) * eps ** (-q / (q - 1.0)))
    return [T], [float(T)], [rhs]


def _bound_june4_13(trace, meta):
    eps = _eps_guard(meta)
    cfg, _, capNt = _caps(meta)
    f_star = _need(meta, "f_star")
    dist = _distance_bound(meta)
    if dist is None:
        raise _Missing("missing metadata 'x_star' (distance to a minimizer)")
    p, q = cfg.p, cfg.q
    xg = trace.series.get("x_grad")
    its, lhs, rhs = [], [], []
    for t in _segment(trace, eps):
        if xg is not None and xg[t] <= eps:
            break
        if t >= 2:
            its.append(t)
            lhs.append(trace.rows[t][1] - f_star)
            rhs.append(2.0 ** (3 * p) * capNt * q ** (q - 1.0) * dist ** q
                       / (math.factorial(p - 1) * (t - 1.0) ** q))
    return its, lhs, rhs


def _gradient_rate(trace, eps, T_ok, coef, q):
    its, lhs, rhs = [], [], []
    for T in T_ok:
        if T % 2 == 0 and T // 2 > 1:
            its.append(T)
            lhs.append(min(trace.rows[k][2] for k in range(T + 1)))
            rhs.append(coef(T))
    return its, lhs, rhs


def _bound_5_8(trace, meta):
    eps = _eps_guard(meta)
    cfg, capN, capNt = _caps(meta)
    dist = _distance_bound(meta)
    if dist is None:
        raise _Missing("missing metadata 'x_star' (distance to a minimizer)")
    p, q = cfg.p, cfg.q
    C = (2.0 ** (4 * p + 6) * capNt * capN ** (1.0 / (q - 1.0))) ** ((q - 1.0) / q)
    xg = trace.series.get("x_grad")
    seg = [t for t in _segment(trace, eps) if xg is None or xg[t] > eps]
    expo = (q - 1.0) * (q + 1.0) / q
    return _gradient_rate(trace, eps, seg,
                          lambda T: C * dist ** (q - 1.0) * ((p + 1.0) / (T - 2.0)) ** expo, q)


def _bound_ale5_16(trace, meta):
    eps = _eps_guard(meta)
    p, q = int(_need(meta, "p")), _q(meta)
    M = float(_need(meta, "M"))
    dist = _distance_bound(meta)
    if dist is None:
        raise _Missing("missing metadata 'x_star' (distance to a minimizer)")
    xg = trace.series.get("x_grad")
    seg = [t for t in _segment(trace, eps) if xg is None or xg[t] > eps]
    expo = (q - 1.0) * (q + 1.0) / q
    c = (2.0 ** (4 * (p + 1))) ** ((q - 1.0) / q) * M * dist ** (q - 1.0)
    return _gradient_rate(trace, eps, seg, lambda T: c / (T - 2.0) ** expo, q)


def _bound_ale5_12(trace, meta):
    eps = _eps_guard(meta)
    p, q = int(_need(meta, "p")), _q(meta)
    M = float(_need(meta, "M"))
    f_star = meta.get("f_star")
    if f_star is None:
        f_star = meta.get("f_star_lower")
    if f_star is None:
        raise _Missing("missing metadata 'f_star'")
    seg = _segment(trace, eps)
    if not seg:
        raise _Missing("no iteration with gradient above epsilon")
    T = seg[-1]
    f0 = trace.rows[0][1]
    rhs = (8.0 * math.factorial(p + 1) * M ** (1.0 / (q - 1.0)) * (f0 - f_star)
           * eps ** (-q / (q - 1.0)))
    return [T], [float(T)], [rhs]


def _restart_count(trace, meta):
    eps = _eps_guard(meta)
    seg = _segment(trace, eps / 2.0)
    if not seg:
        raise _Missing("no restart with gradient above epsilon / 2")
    return eps, seg[-1]


def _bound_5_23(trace, meta):
    eps, T = _restart_count(trace, meta)
    q = _q(meta)
    p = int(_need(meta, "p"))
    delta, R, H_delta = (float(v) for v in _need(meta, "delta", "R", "H_delta"))
    inside = (32.0 * math.factorial(p + 1) * H_delta ** (1.0 / (q - 1.0)) * delta * R ** q
              / (2.0 ** (q - 1.0) * q * eps ** (q / (q - 1.0))))
    return [T], [float(T)], [1.0 + math.log2(inside)]


def _bound_mais5_36(trace, meta):
    eps, T = _restart_count(trace, meta)
    q = _q(meta)
    p = int(_need(meta, "p"))
    S, H_delta = (float(v) for v in _need(meta, "S", "H_delta"))
    inside = 16.0 * math.factorial(p + 1) * H_delta ** (1.0 / (q - 1.0)) * S \
        / eps ** (q / (q - 1.0))
    return [T], [float(T)], [1.0 + math.log2(inside)]


def _bound_B9(trace, meta):
    p, q = int(_need(meta, "p")), _q(meta)
    M, f_star = (float(v) for v in _need(meta, "M", "f_star"))
    if meta.get("composite_optimum_unknown"):
        raise _Missing("the composite optimum is not known")
    dist = _distance_bound(meta)
    if dist is None:
        raise _Missing("missing metadata 'x_star' (distance to a minimizer)")
    its, lhs, rhs = [], [], []
    for row in trace.rows:
        t = row[0]
        if t >= 2:
            its.append(t)
            lhs.append(row[1] - f_star)
            rhs.append(2.0 ** (3 * p - 1) * M * q ** q * dist ** q
                       / (math.factorial(p - 1) * (t - 1.0) ** q))
    return its, lhs, rhs


def _bound_B19(trace, meta):
    p, q = int(_need(meta, "p")), _q(meta)
    M = float(_need(meta, "M"))
    A = trace.series.get("A")
    if not A:
        raise _Missing("missing series 'A'")
    c = (math.factorial(p - 1) / (2.0 ** (3 * p - 1) * M)
         * ((1.0 / q) * 0.5 ** ((q - 1.0) / q)) ** q)
    its, lhs, rhs = [], [], []
    for row, A_t in zip(trace.rows, A):
        t = row[0]
        if t >= 2:
            # the bound is a lower bound on A_t; compare c (t-1)^q <= A_t
            its.append(t)
            lhs.append(c * (t - 1.0) ** q)
            rhs.append(float(A_t))
    return its, lhs, rhs


_BOUNDS = {
    "3.8": (("alg1", "alg2"), _bound_3_8),
    "3.10": (("alg1",), _bound_3_10),
    "3.12": (("alg1",), _bound_3_12),
    "nc-count": (("alg1",), _bound_nc_count),
    "4.21": (("alg2",), _bound_4_21),
    "june4.13": (("alg2",), _bound_june4_13),
    "5.8": (("alg2",), _bound_5_8),
    "ale5.12": (("alg3",), _bound_ale5_12),
    "ale5.16": (("alg4",), _bound_ale5_16),
    "5.23": (("alg6",), _bound_5_23),
    "mais5.36": (("alg6",), _bound_mais5_36),
    "B9": (("algA", "alg5"), _bound_B9),
    "B19": (("algA", "alg5"), _bound_B19),
}
BOUND_TAGS = tuple(_BOUNDS)


def replay_bounds(trace, meta=None, tags=BOUND_TAGS, slack=0.0):
    """Compare a trace with the explicit bounds named by ``tags``.

    Parameters
    ----------
    trace : RunTrace
        In-memory or loaded trace.
    meta : dict, optional
        Instance and run metadata; defaults to ``trace.meta``.
    tags : sequence of str
        Bound identifiers from :data:`BOUND_TAGS`.
    slack : float
        A bound counts as satisfied when ``lhs <= rhs + slack * max(1, |rhs|)``.

    Returns
    -------
    list of BoundReport
        A bound that does not apply to the scheme, lacks metadata or has no
        applicable iteration is reported as skipped with a reason, and is
        never marked satisfied.
    """
    meta = dict(trace.meta if meta is None else meta)
    if "alpha" not in meta and meta.get("p") is not None:
        meta["alpha"] = 1.0 if meta.get("nu") is None else float(meta["nu"])
    reports = []
    for tag in tags:
        if tag not in _BOUNDS:
            raise ValueError(f"unknown bound tag {tag!r}; choose from {BOUND_TAGS}")
        schemes, fn = _BOUNDS[tag]
        report = BoundReport(tag)
        if trace.scheme not in schemes:
            report.skipped_reason = f"not applicable to scheme {trace.scheme}"
            reports.append(report)
            continue
        try:
            its, lhs, rhs = fn(trace, meta)
        except _Missing as exc:
            report.skipped_reason = str(exc)
            reports.append(report)
            continue
        except ValueError as exc:
            report.skipped_reason = str(exc)
            reports.append(report)
            continue
        if not its:
            report.skipped_reason = "no applicable iterations"
            reports.append(report)
            continue
        report.iterations = list(its)
        report.lhs = [float(v) for v in lhs]
        report.rhs = [float(v) for v in rhs]
        margins = [r - l + slack * max(1.0, abs(r)) for l, r in zip(report.lhs, report.rhs)]
        report.worst_margin = float(min(r - l for l, r in zip(report.lhs, report.rhs)))
        report.satisfied = all(m >= 0.0 for m in margins)
        reports.append(report)
    return reports


# --------------------------------------------------------------------------- rates


def slope_estimate(trace, window):
    """Least-squares slope of ``log(min_{s<=t} g_s)`` against ``log(t)``.

    Parameters
    ----------
    trace : RunTrace or array_like
        A trace (its iteration and gradient columns are used) or a sequence
        of gradient norms indexed from iteration 0.
    window : (int, int)
        Inclusive iteration range; iterations must be positive.
    """
    if isinstance(trace, RunTrace):
        its = trace.column("iter").astype(float)
        g = trace.column("grad_dual_norm")
    else:
        g = np.asarray(trace, dtype=float)
        its = np.arange(g.size, dtype=float)
    lo, hi = window
    if lo < 1 or hi <= lo:
        raise ValueError("window must satisfy 1 <= start < end")
    if g.size == 0 or hi > its[-1]:
        raise ValueError("window extends past the trace")
    env = np.minimum.accumulate(g)
    mask = (its >= lo) & (its <= hi)
    if mask.sum() < 2:
        raise ValueError("window holds fewer than two iterations")
    if np.any(env[mask] <= 0):
        raise ValueError("gradient norms must be positive on the window")
    slope, _ = np.polyfit(np.log(its[mask]), np.log(env[mask]), 1)
    return float(slope)


def lower_bound_evaluate(p, nu, t, mode):
    """Worst-case lower bounds for methods on the chain family.

    ``mode="residual"`` gives ``D * t^((3q-2)/(2q))`` and
    ``mode="distance"`` gives ``L * (t+1)^((3q-2)/2)``, with ``q = p + nu``.
    """
    if t < 2:
        raise ValueError("t must be at least 2")
    if p < 1:
        raise ValueError("p must be positive")
    if not 0.0 <= nu <= 1.0:
        raise ValueError("nu must lie in [0, 1]")
    q = p + nu
    head = 2.0 ** ((2.0 + nu) / 2.0)
    if mode == "residual":
        D = ((head * math.prod(q - i for i in range(1, p))) ** (1.0 / q)
             * ((q - 1.0) / q) ** ((q - 1.0) / q))
        return D * t ** ((3.0 * q - 2.0) / (2.0 * q))
    if mode == "distance":
        L = head * 3.0 ** (-(q - 1.0) / 2.0) * math.prod(q - i for i in range(p))
        return L * (t + 1.0) ** ((3.0 * q - 2.0) / 2.0)
    raise ValueError("mode must be 'residual' or 'distance'")
