"""Command-line experiment runner.

Every run writes CSV artifacts and ``manifest.json`` into ``--out``.  Exit codes:
0 all checks pass, 1 a check failed, 2 configuration error, 3 numerical failure.
Options may also come from a ``key = value`` file given by ``--config``; flags
on the command line override it.
"""

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from ._mc import THREADS_ENV
from .estimates import (
    Envelope,
    fit_decay,
    two_sided_check,
    verify_auxiliary_series,
    verify_series_lemma,
    verify_single_jump_bound,
)
from .exceptions import ConfigError, NumericalError
from .feynman_kac import DEFAULT_D, BallIndicator, ConstantOne, FKConfig, RectIndicator, estimate_semigroup, iu_ratio_condition
from .potentials import check_assumptions, parse_profile
from .process2d import Rectangle, ikeda_watanabe_lhs, ikeda_watanabe_rhs
from .spectral import Grid1D, OperatorHandle, ground_state, write_ground_state_csv
from .stable_core import StableParams

EXIT_PASS, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunResult:
    checks: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17e}"
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _floats(text, n=None, name="value"):
    try:
        vals = [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as numbers", field=name) from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} numbers, got {len(vals)}", field=name)
    return vals


def _rect(text, name):
    try:
        return Rectangle(*_floats(text, 4, name))
    except ValueError as exc:
        raise ConfigError(str(exc), field=name) from None


# option name -> (type, default, help); shared across subcommands that list them
OPTIONS = {
    "alpha": (float, 1.0, "stability index in (0, 2)"),
    "profile": (str, "power:2", "profile spec, e.g. power:2 or 'family=logarithmic gamma=5'"),
    "seed": (int, 0, "root seed for Monte Carlo streams"),
    "R": (float, 24.0, "half-width of the computational box"),
    "n": (int, 384, "grid points per axis"),
    "k": (int, 8, "number of eigenpairs"),
    "t": (float, 0.5, "time"),
    "step": (float, None, "observation step (default t/100)"),
    "n_paths": (int, 100_000, "Monte Carlo paths"),
    "x": (str, "0,0", "start point 'x1,x2'"),
    "xs": (str, "8,16,32", "positions along e1"),
    "observable": (str, "one", "one, D or ball"),
    "K": (int, 32, "lattice range for the convolution sums"),
    "window": (int, 10**6, "summation window for the convolution sums"),
    "jump_paths": (int, 100_000, "paths for the single-jump sweep (0 skips it)"),
    "deltas": (str, "2,4,8,16", "separations |n2 - k2| of the single-jump sweep"),
    "rect": (str, "-2,2,-2,2", "rectangle D as 'x_lo,x_hi,y_lo,y_hi'"),
    "target": (str, "4,5,-0.5,0.5", "target rectangle A"),
    "t1": (float, 0.1, "window start"),
    "t2": (float, 0.5, "window end"),
    "quad_n": (int, 600, "grid points per interval for the quadrature side"),
    "fit_lo": (float, 3.0, "inner radius of decay fits"),
    "fit_frac": (float, 0.7, "outer radius of decay fits as a fraction of R"),
}

COMMAND_OPTIONS = {
    "spectrum": ["alpha", "profile", "R", "n", "k", "seed"],
    "fk": ["alpha", "profile", "t", "step", "n_paths", "seed", "x", "observable"],
    "iu-check": ["alpha", "profile", "t", "step", "n_paths", "seed", "xs"],
    "verify-lemmas": ["alpha", "K", "window", "jump_paths", "deltas", "t1", "t2", "step", "seed"],
    "decay-fit": ["alpha", "profile", "R", "n", "k", "fit_lo", "fit_frac", "seed"],
    "iw-check": ["alpha", "rect", "target", "x", "t1", "t2", "n_paths", "step", "quad_n", "seed"],
}


def build_parser():
    parser = argparse.ArgumentParser(prog="cylstable", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, names in COMMAND_OPTIONS.items():
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="key = value file; flags override it")
        sp.add_argument("--out", default=".", help="output directory")
        for name in names:
            typ, default, help_ = OPTIONS[name]
            flag = "--" + name.replace("_", "-")
            sp.add_argument(flag, dest=name, type=typ, default=None, help=f"{help_} (default {default})")
    return parser


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}", field="config") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value", field="config")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def resolve_config(args):
    """Merge defaults, the config file and flags into one validated dict."""
    names = COMMAND_OPTIONS[args.command]
    cfg = {name: OPTIONS[name][1] for name in names}
    if args.config:
        for key, value in read_config_file(args.config).items():
            if key == "command":
                if value != args.command:
                    raise ConfigError(f"file is for {value!r}, not {args.command!r}", field="command")
                continue
            if key not in cfg:
                raise ConfigError(f"unknown option {key!r} for {args.command}", field=key)
            typ = OPTIONS[key][0]
            try:
                cfg[key] = typ(float(value)) if typ is int else typ(value)
            except ValueError:
                raise ConfigError(f"bad value {value!r}", field=key) from None
    for name in names:
        value = getattr(args, name)
        if value is not None:
            cfg[name] = value
    return cfg


def _params(cfg):
    try:
        return StableParams(cfg["alpha"])
    except ValueError as exc:
        raise ConfigError(str(exc), field="alpha") from None


def _profile(cfg, base_dir):
    try:
        return parse_profile(cfg["profile"], base_dir=base_dir)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc), field="profile") from None


def _grid(cfg):
    if not cfg["R"] > 0:
        raise ConfigError("R must be positive", field="R")
    try:
        return Grid1D(cfg["R"], cfg["n"])
    except ValueError as exc:
        raise ConfigError(str(exc), field="n") from None


def _fk_config(cfg):
    step = cfg["t"] / 100.0 if cfg.get("step") is None else cfg["step"]
    return FKConfig(cfg["t"], step, cfg["n_paths"], cfg["seed"])


def _positive(cfg, *names):
    for name in names:
        if not cfg[name] > 0:
            raise ConfigError(f"{name} must be positive", field=name)


def cmd_spectrum(cfg, out, base):
    p, prof, grid = _params(cfg), _profile(cfg, base), _grid(cfg)
    if cfg["k"] < 2:
        raise ConfigError("k must be at least 2", field="k")
    gs = ground_state(OperatorHandle(grid, p, prof), k=cfg["k"])
    res = RunResult(artifacts=write_ground_state_csv(gs, out))
    lam = gs.lambdas
    res.checks += [
        Check("residuals", bool(np.all(gs.residual_norms <= 1e-8)), f"max {gs.residual_norms.max():.3e}"),
        Check("spectral_gap", bool(lam[1] > lam[0] > 0), f"lambda1={lam[0]:.12g} lambda2={lam[1]:.12g}"),
        Check("perron_positive", bool(gs.phi1.min() > 0), f"min phi1 {gs.phi1.min():.3e}"),
    ]
    res.summary = {"lambdas": lam.tolist()}
    return res


def _observable(name, x):
    if name == "one":
        return ConstantOne()
    if name == "D":
        return RectIndicator(DEFAULT_D)
    if name == "ball":
        return BallIndicator(tuple(x), 1.0)
    raise ConfigError(f"unknown observable {name!r}", field="observable")


def cmd_fk(cfg, out, base):
    p, prof, fkc = _params(cfg), _profile(cfg, base), _fk_config(cfg)
    x = _floats(cfg["x"], 2, "x")
    est = estimate_semigroup(np.array(x), _observable(cfg["observable"], x), prof, fkc, p)
    path = os.path.join(out, "fk.csv")
    header = ["x1", "x2", "observable", "mean", "stderr", "n_paths", "step"]
    write_csv(path, header, [[x[0], x[1], cfg["observable"], est.mean, est.stderr, est.n_paths, est.step]])
    res = RunResult(artifacts=[path], summary={"mean": est.mean, "stderr": est.stderr})
    res.checks.append(Check("finite_estimate", bool(math.isfinite(est.mean) and est.stderr >= 0)))
    return res


def iu_trend(xs, ratios):
    """Weighted log-log slope of the ratio sequence; ``None`` with fewer than 2 points."""
    pts = [(x, r) for x, r in zip(xs, ratios) if r.ratio is not None and r.ratio > 0]
    if len(pts) < 2:
        return None
    sig = [r.stderr / r.ratio for _, r in pts]
    return fit_decay([x for x, _ in pts], [r.ratio for _, r in pts], sigma=sig, min_points=2)


def cmd_iu_check(cfg, out, base):
    p, prof, fkc = _params(cfg), _profile(cfg, base), _fk_config(cfg)
    xs = _floats(cfg["xs"], name="xs")
    if len(xs) < 2 or any(v < 2 for v in xs):
        raise ConfigError("need at least two positions, each at least 2", field="xs")
    ratios = []
    for i, xn in enumerate(xs):
        fk_i = FKConfig(fkc.t, fkc.step, fkc.n_paths, fkc.seed + i)
        ratios.append(iu_ratio_condition(np.array([xn, 0.0]), prof, fk_i, p))
    path = os.path.join(out, "iu.csv")
    header = ["x", "ratio", "stderr", "numerator", "numerator_stderr", "denominator", "denominator_stderr", "overflow"]
    rows = []
    for xn, r in zip(xs, ratios):
        rows.append([xn, r.ratio if r.ratio is not None else math.nan, r.stderr if r.stderr is not None else math.nan,
                     r.numerator.mean, r.numerator.stderr, r.denominator.mean, r.denominator.stderr, r.overflow])
    write_csv(path, header, rows)
    fit = iu_trend(xs, ratios)
    expected = check_assumptions(prof, r_max=max(100.0, 2 * max(xs))).iu_class
    finite = [r.ratio for r in ratios if r.ratio is not None]
    increasing = len(finite) == len(ratios) and all(b > a for a, b in zip(finite, finite[1:]))
    growing = fit is not None and fit.slope > 3 * fit.slope_stderr
    if increasing and growing:
        observed = "non-IU"
    elif fit is not None and fit.slope <= 3 * fit.slope_stderr:
        observed = "bounded"
    else:
        observed = "inconclusive"
    res = RunResult(artifacts=[path])
    res.summary = {
        "expected_iu_class": expected,
        "observed": observed,
        "slope": None if fit is None else fit.slope,
        "slope_stderr": None if fit is None else fit.slope_stderr,
    }
    if expected == "fails":
        res.checks.append(Check("ratio_increasing", increasing, f"ratios {finite}"))
        res.checks.append(Check("ratio_growth", growing, f"observed {observed}"))
    elif expected == "satisfies":
        res.checks.append(Check("ratio_bounded", observed != "non-IU", f"observed {observed}"))
    return res


def cmd_verify_lemmas(cfg, out, base):
    p = _params(cfg)
    report = verify_series_lemma()
    c1, c2, aux = verify_auxiliary_series(cfg["K"], p.alpha, cfg["window"])
    report.extend(aux.rows)
    if cfg["jump_paths"] > 0:
        deltas = [int(d) for d in _floats(cfg["deltas"], name="deltas")]
        step = 1e-3 if cfg["step"] is None else cfg["step"]
        ks = [(0, d) for d in deltas]
        report.extend(verify_single_jump_bound((0, 0), ks, cfg["t1"], cfg["t2"], p, cfg["jump_paths"], cfg["seed"], step).rows)
    path = os.path.join(out, "lemmas.csv")
    report.write_csv(path)
    res = RunResult(artifacts=[path], summary={"C1_emp": c1, "C2_emp": c2})
    groups = {}
    for row in report.rows:
        groups.setdefault(row.check_name, []).append(row.passed)
    res.checks = [Check(name, all(v)) for name, v in groups.items()]
    return res


def cmd_decay_fit(cfg, out, base):
    p, prof, grid = _params(cfg), _profile(cfg, base), _grid(cfg)
    gs = ground_state(OperatorHandle(grid, p, prof), k=cfg["k"])
    lo, hi = cfg["fit_lo"], cfg["fit_frac"] * grid.radius
    nodes, phi = grid.nodes, gs.phi1
    c = grid.nearest_index(0.0)
    sel = np.flatnonzero((nodes >= lo) & (nodes <= hi))
    if sel.size < 5:
        raise ConfigError("fewer than 5 grid nodes in the fit range", field="fit_lo")
    axis = fit_decay(nodes[sel], phi[sel, c])
    diag = fit_decay(nodes[sel] * math.sqrt(2), phi[sel, sel])
    X1, X2 = np.meshgrid(nodes, nodes, indexing="ij")
    rad = np.hypot(X1, X2)
    region = (rad >= lo) & (rad <= hi)
    env = Envelope("theorem1", prof, p.alpha)
    ts = two_sided_check(phi[region], env, np.stack([X1[region], X2[region]], axis=-1))
    path = os.path.join(out, "decay.csv")
    rows = [["axis", axis.slope, axis.r_squared, axis.n_points], ["diagonal", diag.slope, diag.r_squared, diag.n_points]]
    write_csv(path, ["direction", "slope", "r_squared", "n_points"], rows)
    path2 = os.path.join(out, "two_sided.csv")
    write_csv(path2, ["c_lo", "c_hi", "ratio", "n_points", "violations"], [[ts.c_lo, ts.c_hi, ts.ratio, ts.n_points, ts.violations]])
    res = RunResult(artifacts=[path, path2])
    res.summary = {"axis_slope": axis.slope, "diagonal_slope": diag.slope, "c_lo": ts.c_lo, "c_hi": ts.c_hi}
    if prof.family == "power":
        a, b = p.alpha, prof.beta
        ta, td = -(1 + a + b), -(2 * (1 + a) + 2 * b)
        res.checks.append(Check("axis_slope", abs(axis.slope - ta) <= 0.1 * abs(ta), f"{axis.slope:.4f} vs {ta}"))
        res.checks.append(Check("diagonal_slope", abs(diag.slope - td) <= 0.1 * abs(td), f"{diag.slope:.4f} vs {td}"))
    res.checks.append(Check("two_sided_finite", bool(ts.violations == 0 and math.isfinite(ts.ratio)), f"ratio {ts.ratio:.4g}"))
    return res


def cmd_iw_check(cfg, out, base):
    p = _params(cfg)
    rect, target = _rect(cfg["rect"], "rect"), _rect(cfg["target"], "target")
    x = np.array(_floats(cfg["x"], 2, "x"))
    if not rect.contains(x):
        raise ConfigError("x must lie inside rect", field="x")
    if rect.intersects_closure(target):
        raise ConfigError("target must not touch the closure of rect", field="target")
    if not 0 <= cfg["t1"] < cfg["t2"]:
        raise ConfigError("need 0 <= t1 < t2", field="t1")
    step = cfg["t2"] / 500.0 if cfg["step"] is None else cfg["step"]
    lhs = ikeda_watanabe_lhs(x, rect, target, cfg["t1"], cfg["t2"], cfg["n_paths"], step, p, cfg["seed"])
    rhs = ikeda_watanabe_rhs(x, rect, target, cfg["t1"], cfg["t2"], p, n=cfg["quad_n"])
    path = os.path.join(out, "iw.csv")
    write_csv(path, ["lhs", "lhs_stderr", "rhs", "z_score", "n_paths", "step"],
              [[lhs.mean, lhs.stderr, rhs, (lhs.mean - rhs) / lhs.stderr if lhs.stderr > 0 else math.nan, lhs.n_paths, lhs.step]])
    res = RunResult(artifacts=[path], summary={"lhs": lhs.mean, "lhs_stderr": lhs.stderr, "rhs": rhs})
    res.checks.append(Check("iw_agreement", bool(lhs.agrees_with(rhs)), f"{lhs.mean:.6g} +- {lhs.stderr:.2g} vs {rhs:.6g}"))
    return res


HANDLERS = {
    "spectrum": cmd_spectrum,
    "fk": cmd_fk,
    "iu-check": cmd_iu_check,
    "verify-lemmas": cmd_verify_lemmas,
    "decay-fit": cmd_decay_fit,
    "iw-check": cmd_iw_check,
}


def _versions():
    import scipy
    import sklearn

    return {
        "cylstable": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def write_manifest(out, command, cfg, result, status, wall, error=None):
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "versions": _versions(),
        "threads": os.environ.get(THREADS_ENV, "1"),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "wall_clock_seconds": wall,
        "status": status,
        "checks": [asdict(c) for c in (result.checks if result else [])],
        "summary": result.summary if result else {},
        "artifacts": [os.path.basename(a) for a in (result.artifacts if result else [])],
    }
    if error is not None:
        manifest["error"] = error
    path = os.path.join(out, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return path


def run(argv=None):
    """Parse ``argv``, run the command and return the exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    cfg, result, error = {}, None, None
    os.makedirs(args.out, exist_ok=True)
    try:
        cfg = resolve_config(args)
        base = os.path.dirname(os.path.abspath(args.config)) if args.config else os.getcwd()
        result = HANDLERS[args.command](cfg, args.out, base)
        status = EXIT_PASS if result.passed else EXIT_CHECK
        for c in result.checks:
            print(f"{'PASS' if c.passed else 'FAIL'} {c.name} {c.detail}".rstrip())
    except ConfigError as exc:
        status, error = EXIT_CONFIG, {"field": exc.field, "message": str(exc)}
        print(f"config error in {exc.field}: {exc}", file=sys.stderr)
    except ValueError as exc:
        status, error = EXIT_CONFIG, {"field": None, "message": str(exc)}
        print(f"config error: {exc}", file=sys.stderr)
    except NumericalError as exc:
        status, error = EXIT_NUMERIC, {"check": exc.check, "message": str(exc)}
        print(f"numerical failure in {exc.check}: {exc}", file=sys.stderr)
    write_manifest(args.out, args.command, cfg, result, status, time.perf_counter() - start, error)
    return status


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
