"""Bound envelopes, power-law fits and numerical checks of the auxiliary lemmas."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._mc import Estimate, mean_estimate
from .process2d import Rectangle, simulate_exits
from .stable_core import _as_params

__all__ = [
    "ENVELOPE_KINDS",
    "Envelope",
    "FitResult",
    "TwoSidedResult",
    "BoundRow",
    "BoundReport",
    "envelope_eval",
    "fit_decay",
    "two_sided_check",
    "series_sums",
    "verify_series_lemma",
    "auxiliary_sums",
    "verify_auxiliary_series",
    "lattice_cell",
    "lattice_block",
    "verify_single_jump_bound",
    "axis_decay_check",
]

ENVELOPE_KINDS = ("theorem1", "lemma34_lower", "lemma412_upper", "lemma51_axis")
NEAR_FIELD = 2.0


@dataclass(frozen=True)
class Envelope:
    """Constant-free bound shape.

    ``theorem1``, ``lemma34_lower`` and ``lemma412_upper`` share the shape
    ``1 / ((|x1|+1)^(1+a) (|x2|+1)^(1+a) (q(min|xi|)+1) (q(|x|)+1))``;
    ``lemma51_axis`` is ``t |x|^(-1-a)``.
    """

    kind: str
    profile: object
    alpha: float
    t: float = 1.0

    def __post_init__(self):
        if self.kind not in ENVELOPE_KINDS:
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        _as_params(self.alpha)

    def __call__(self, x):
        return envelope_eval(self, x)


def envelope_eval(env, x):
    """Evaluate ``env`` at points ``x`` of shape ``(..., 2)``."""
    x = np.abs(np.asarray(x, dtype=float))
    a = env.alpha
    if env.kind == "lemma51_axis":
        r = np.hypot(x[..., 0], x[..., 1])
        with np.errstate(divide="ignore"):
            out = env.t * r ** (-1.0 - a)
    else:
        q = env.profile
        den = (
            (x[..., 0] + 1.0) ** (1.0 + a)
            * (x[..., 1] + 1.0) ** (1.0 + a)
            * (q(np.minimum(x[..., 0], x[..., 1])) + 1.0)
            * (q(np.hypot(x[..., 0], x[..., 1])) + 1.0)
        )
        out = 1.0 / den
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    slope_stderr: float = math.nan


def fit_decay(positions, values, sigma=None, min_points=5):
    """Least-squares fit of ``log(value)`` against ``log(position)``.

    ``sigma`` holds standard errors of ``log(value)``; when given the fit is
    weighted and ``slope_stderr`` is the propagated one, otherwise it comes from
    the residuals.
    """
    r = np.asarray(positions, dtype=float).ravel()
    v = np.asarray(values, dtype=float).ravel()
    if r.shape != v.shape:
        raise ValueError("positions and values differ in length")
    if r.size < min_points:
        raise ValueError(f"need at least {min_points} points, got {r.size}")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValueError("values must be finite and positive")
    if np.any(r < NEAR_FIELD):
        raise ValueError(f"positions must be at least {NEAR_FIELD}")
    X = np.column_stack([np.log(r), np.ones_like(r)])
    y = np.log(v)
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    slope, intercept = cov @ (XtW @ y)
    resid = y - X @ np.array([slope, intercept])
    ss_tot = np.sum(w * (y - np.average(y, weights=w)) ** 2)
    r2 = 1.0 - np.sum(w * resid**2) / ss_tot if ss_tot > 0 else 1.0
    if sigma is not None:
        se = math.sqrt(cov[0, 0])
    elif r.size > 2:
        se = math.sqrt(cov[0, 0] * np.sum(resid**2) / (r.size - 2))
    else:
        se = math.nan
    return FitResult(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)), int(r.size), se)


@dataclass(frozen=True)
class TwoSidedResult:
    c_lo: float
    c_hi: float
    n_points: int
    violations: int

    @property
    def ratio(self):
        return self.c_hi / self.c_lo

    def __iter__(self):
        return iter((self.c_lo, self.c_hi))


def two_sided_check(values, env, points):
    """Infimum and supremum of ``values / env(points)`` over the region.

    Nonpositive field values are counted as violations and left out.
    """
    values = np.asarray(values, dtype=float).ravel()
    shape = envelope_eval(env, np.asarray(points, dtype=float).reshape(-1, 2))
    ok = values > 0
    if not ok.any():
        return TwoSidedResult(math.nan, math.nan, values.size, int(values.size))
    q = values[ok] / np.asarray(shape)[ok]
    return TwoSidedResult(float(q.min()), float(q.max()), int(values.size), int((~ok).sum()))


@dataclass(frozen=True)
class BoundRow:
    check_name: str
    parameters: dict
    empirical_constant: float
    passed: bool
    stderr: float = 0.0


@dataclass
class BoundReport:
    rows: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.rows)

    def extend(self, rows):
        self.rows.extend(rows)
        return self

    def write_csv(self, path):
        """Columns: check_name, parameters, empirical_constant, passed, stderr."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["check_name", "parameters", "empirical_constant", "passed", "stderr"])
            for r in self.rows:
                params = ";".join(f"{k}={v!r}" for k, v in r.parameters.items())
                w.writerow([r.check_name, params, f"{r.empirical_constant:.17e}", str(r.passed).lower(), f"{r.stderr:.17e}"])


def series_sums(r, n_terms=10**6):
    """Certified brackets for the two series of the exponential-weight lemma.

    Returns ``((lo1, hi1), (lo2, hi2))`` for ``sum exp(-r/n)/(n(n+1))`` and
    ``sum exp(-r/(n+1))/(n(n+1))``.  Terms beyond ``n_terms`` are bounded below by
    ``exp(-r/(N+1))/(n(n+1))`` and above by ``1/(n(n+1))``, both telescoping.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    n = np.arange(1, n_terms + 1, dtype=float)
    base = 1.0 / (n * (n + 1.0))
    s1 = float(np.sum(np.exp(-r / n) * base))
    s2 = float(np.sum(np.exp(-r / (n + 1.0)) * base))
    tail_hi = 1.0 / (n_terms + 1.0)
    tail_lo = math.exp(-r / (n_terms + 1.0)) * tail_hi
    return (s1 + tail_lo, s1 + tail_hi), (s2 + tail_lo, s2 + tail_hi)


SERIES_GRID = (1e-4, 1e-2, 1.0, 1e2, 1e4)


def verify_series_lemma(r_grid=SERIES_GRID, n_terms=10**6):
    """Check ``e^-1/(r+1) <= S1(r)`` and ``S2(r) <= 5/r`` with certified brackets.

    The reported constants are ``e (r+1) S1_lo`` (at least 1) and ``r S2_hi / 5``
    (at most 1).
    """
    rows = []
    for r in r_grid:
        (lo1, _), (_, hi2) = series_sums(r, n_terms)
        lower = math.exp(-1.0) / (r + 1.0)
        rows.append(BoundRow("series_lower", {"r": r}, lo1 / lower, bool(lo1 >= lower)))
        rows.append(BoundRow("series_upper", {"r": r}, hi2 * r / 5.0, bool(hi2 <= 5.0 / r)))
    return BoundReport(rows)


def _tail_bound(alpha, window, m):
    # sum_{|j| > W} |j|^(-1-a) (|j|-|m|)^(-1-a) <= 2 int_{W}^inf (x-|m|)^(-2-2a) dx
    return 2.0 * (window - abs(m)) ** (-1.0 - 2.0 * alpha) / (1.0 + 2.0 * alpha)


def _power_tables(alpha, half):
    # sym[half + j] = |j|^(-1-a) with the j = 0 entry zero; shifted[half + j] = (|j|+1)^(-1-a)
    j = np.abs(np.arange(-half, half + 1, dtype=float))
    with np.errstate(divide="ignore"):
        sym = np.where(j > 0, j, np.inf) ** (-1.0 - alpha)
    return sym, (j + 1.0) ** (-1.0 - alpha)


def auxiliary_sums(n, k, alpha, window=10**6, _tables=None):
    """Both convolution sums of the lattice lemma for integers ``n, k``.

    (i)  ``sum_{p != k, n} |n-p|^(-1-a) |p-k|^(-1-a)``
    (ii) ``sum_{p != k} (|n-p|+1)^(-1-a) |p-k|^(-1-a)``

    Summation runs over ``|p - k| <= window``; returns ``(s1, s2, tail)`` with the
    analytic bound ``tail`` on what the window leaves out of either sum.
    """
    a = float(alpha)
    m = int(n) - int(k)
    if abs(m) >= window // 2:
        raise ValueError("window too small for |n - k|")
    half = window + abs(m)
    sym, shifted = _power_tables(a, half) if _tables is None else _tables
    half = (sym.size - 1) // 2
    # with i = p - k in [-W, W]: |p-k| -> sym[half + i], |n-p| = |m - i| -> reversed slice
    pk = sym[half - window : half + window + 1]
    lo, hi = half + m - window, half + m + window + 1
    s1 = float(np.dot(pk, sym[lo:hi][::-1]))
    s2 = float(np.dot(pk, shifted[lo:hi][::-1]))
    return s1, s2, _tail_bound(a, window, m)


def verify_auxiliary_series(K, alpha, window=10**6, n=0):
    """Empirical suprema of ``sum * (|n-k|+1)^(1+a)`` over ``|n - k| <= K``.

    The window is certified by the analytic tail bound: the bracket
    ``[s, s + tail]`` is scaled and the upper end reported.  Returns
    ``(C1_emp, C2_emp, report)``.
    """
    if K < 32:
        raise ValueError("K must be at least 32")
    a = float(alpha)
    c1 = c2 = 0.0
    rows = []
    tables = _power_tables(a, window + K)
    for m in range(-K, K + 1):
        s1, s2, tail = auxiliary_sums(n, n - m, a, window, _tables=tables)
        w = (abs(m) + 1.0) ** (1.0 + a)
        c1 = max(c1, (s1 + tail) * w)
        c2 = max(c2, (s2 + tail) * w)
    for name, c in (("auxiliary_i", c1), ("auxiliary_ii", c2)):
        rows.append(BoundRow(name, {"alpha": a, "K": K, "window": window}, c, bool(math.isfinite(c) and c > 0)))
    return c1, c2, BoundReport(rows)


def lattice_cell(k):
    """``R_k = (k1 - 1, k1] x (k2 - 1, k2]`` as a rectangle."""
    return Rectangle(k[0] - 1.0, float(k[0]), k[1] - 1.0, float(k[1]))


def lattice_block(n):
    """``A_n = (n1 - 2, n1 + 1) x (n2 - 2, n2 + 1)``."""
    return Rectangle(n[0] - 2.0, n[0] + 1.0, n[1] - 2.0, n[1] + 1.0)


def verify_single_jump_bound(n, ks, t1, t2, alpha, n_paths, rng=None, step=1e-3, n_sigma=3.0):
    """Normalized single-jump probabilities ``P^x(X(tau) in R_k, t1 < tau < t2)``.

    ``x`` is the center of ``R_n`` and ``tau`` the exit time of ``A_n``.  All
    targets are scored on one set of paths.  Each row's constant is
    ``P |n2 - k2|^(1+a) / (t2 - t1)``; the sweep passes when no value exceeds the
    one at the smallest separation by more than ``n_sigma`` joint standard errors.
    """
    n = tuple(int(v) for v in n)
    ks = [tuple(int(v) for v in k) for k in ks]
    a = _as_params(alpha).alpha
    if not 0 < t1 < t2:
        raise ValueError("need 0 < t1 < t2")
    block = lattice_block(n)
    for k in ks:
        if k[0] not in (n[0] - 1, n[0], n[0] + 1) or abs(n[1] - k[1]) < 2:
            raise ValueError(f"target {k} is outside the single-jump geometry of {n}")
    x = np.array([n[0] - 0.5, n[1] - 0.5])
    batch = simulate_exits(x, block, t2, step, a, n_paths, rng)
    window = (batch.exit_time > t1) & (batch.exit_time <= t2)
    ests, norm = [], []
    for k in ks:
        cell = lattice_cell(k)
        px, py = batch.post_exit[:, 0], batch.post_exit[:, 1]
        hit = window & (px > cell.x_lo) & (px <= cell.x_hi) & (py > cell.y_lo) & (py <= cell.y_hi)
        e = mean_estimate(hit.astype(float), batch.step)
        scale = abs(n[1] - k[1]) ** (1.0 + a) / (t2 - t1)
        ests.append(e)
        norm.append(Estimate(e.mean * scale, e.stderr * scale, e.n_paths, e.step))
    ref = norm[int(np.argmin([abs(n[1] - k[1]) for k in ks]))]
    rows = []
    for k, v in zip(ks, norm):
        ok = v.mean <= ref.mean + n_sigma * v.joint_sigma(ref)
        params = {"alpha": a, "n": n, "k": k, "t1": t1, "t2": t2, "step": step}
        rows.append(BoundRow("single_jump", params, v.mean, bool(ok), v.stderr))
    return BoundReport(rows)


def axis_decay_check(profile, alpha, t, xs, values, tol=0.3, sigma=None):
    """Fit ``log T_t 1_D(x e1)`` against ``log x`` and compare with ``-(1 + alpha)``.

    Returns ``(fit, row)``; the row passes when the slope is at most
    ``-(1 + alpha) + tol``.
    """
    xs = np.asarray(xs, dtype=float)
    if np.any(xs < 3):
        raise ValueError("axis positions must be at least 3")
    fit = fit_decay(xs, values, sigma=sigma, min_points=3)
    params = {"profile": profile.describe(), "alpha": float(alpha), "t": float(t), "tol": tol}
    ok = bool(fit.slope <= -(1.0 + alpha) + tol)
    return fit, BoundRow("axis_decay", params, fit.slope, ok, fit.slope_stderr)
