"""Radial confining potentials ``V(x) = q(|x|)`` and checks of their growth conditions."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Profile",
    "AssumptionReport",
    "power",
    "exponential",
    "logarithmic",
    "tabulated",
    "constant",
    "load_tabulated",
    "parse_profile",
    "eval_potential",
    "check_assumptions",
    "doubling_constant",
    "qan_lower_bound",
]

FAMILIES = ("power", "exponential", "logarithmic", "tabulated")


@dataclass(frozen=True)
class Profile:
    """Radial profile ``q: [0, inf) -> [0, inf)``.

    Use the constructors :func:`power`, :func:`exponential`, :func:`logarithmic`
    and :func:`tabulated` rather than instantiating directly.
    """

    family: str
    beta: float = 0.0
    gamma: float = 0.0
    amplitude: float = 1.0
    knots: tuple = field(default=(), repr=False)
    values: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown profile family {self.family!r}")

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        if self.family == "power":
            out = self.amplitude * r**self.beta
        elif self.family == "exponential":
            out = self.amplitude * np.expm1(self.beta * r)
        elif self.family == "logarithmic":
            out = self.amplitude * self.gamma * np.log1p(r)
        else:
            out = np.interp(r, self.knots, self.values)
        return out

    def describe(self):
        if self.family == "power":
            s = f"family=power beta={self.beta!r}"
        elif self.family == "exponential":
            s = f"family=exponential beta={self.beta!r}"
        elif self.family == "logarithmic":
            s = f"family=logarithmic gamma={self.gamma!r}"
        else:
            return f"family=tabulated knots={len(self.knots)}"
        if self.amplitude != 1.0:
            s += f" amplitude={self.amplitude!r}"
        return s


def power(beta, amplitude=1.0):
    if beta <= 0:
        raise ValueError("beta must be positive")
    return Profile("power", beta=float(beta), amplitude=float(amplitude))


def exponential(beta, amplitude=1.0):
    """``q(r) = exp(beta r) - 1``, shifted so that ``q(0) = 0``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return Profile("exponential", beta=float(beta), amplitude=float(amplitude))


def logarithmic(gamma, amplitude=1.0):
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return Profile("logarithmic", gamma=float(gamma), amplitude=float(amplitude))


def tabulated(r, q):
    """Piecewise-linear profile through the knots ``(r, q)``; clamped outside them."""
    r = np.asarray(r, dtype=float)
    q = np.asarray(q, dtype=float)
    if r.ndim != 1 or r.shape != q.shape or r.size < 2:
        raise ValueError("tabulated profile needs two equal-length 1-d arrays of >= 2 knots")
    if np.any(np.diff(r) <= 0):
        raise ValueError("knots must be strictly increasing")
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise ValueError("profile values must be finite and nonnegative")
    return Profile("tabulated", knots=tuple(r), values=tuple(q))


def constant(c, r_max=1e6):
    return tabulated([0.0, r_max], [c, c])


def load_tabulated(path):
    """Read a two-column ``r,q`` CSV file (a header row is optional)."""
    rs, qs = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                r, q = float(row[0]), float(row[1])
            except ValueError:
                if rs:
                    raise
                continue  # header
            rs.append(r)
            qs.append(q)
    return tabulated(rs, qs)


def parse_profile(spec, base_dir=None):
    """Parse a profile specification.

    Two spellings are accepted::

        family=power beta=2.0        power:2
        family=exponential beta=0.5  exponential:0.5
        family=logarithmic gamma=5   logarithmic:5
        family=tabulated path=q.csv  tabulated:q.csv
    """
    spec = spec.strip()
    if "=" not in spec:
        family, _, arg = spec.partition(":")
        family = family.strip()
        if family == "tabulated":
            fields = {"family": family, "path": arg.strip()}
        elif family == "logarithmic":
            fields = {"family": family, "gamma": arg}
        else:
            fields = {"family": family, "beta": arg}
    else:
        fields = {}
        for token in spec.split():
            key, sep, value = token.partition("=")
            if not sep:
                raise ValueError(f"malformed profile token {token!r}")
            fields[key.strip()] = value.strip()
    family = fields.get("family")
    amplitude = float(fields.get("amplitude", 1.0))
    try:
        if family == "power":
            return power(float(fields["beta"]), amplitude)
        if family == "exponential":
            return exponential(float(fields["beta"]), amplitude)
        if family == "logarithmic":
            return logarithmic(float(fields["gamma"]), amplitude)
        if family == "tabulated":
            path = fields["path"]
            if base_dir is not None and not path.startswith("/"):
                path = f"{base_dir}/{path}"
            return load_tabulated(path)
    except KeyError as exc:
        raise ValueError(f"profile {spec!r} is missing field {exc.args[0]!r}") from None
    raise ValueError(f"unknown profile family in {spec!r}")


def eval_potential(profile, x):
    """``V(x) = q(|x|)`` for points ``x`` of shape ``(..., 2)``."""
    x = np.asarray(x, dtype=float)
    return profile(np.hypot(x[..., 0], x[..., 1]))


@dataclass(frozen=True)
class AssumptionReport:
    passed_a: bool
    passed_b: bool
    passed_c: bool
    passed_d: bool
    c0_estimate: float
    iu_class: str
    iu_basis: str
    log_growth_ratio: float

    @property
    def passed(self):
        return self.passed_a and self.passed_b and self.passed_c and self.passed_d


def doubling_constant(profile, xs):
    """``max(1, sup q(x + 1) / (q(x) + 1))`` over the sample points ``xs``."""
    xs = np.asarray(xs, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = profile(xs + 1.0) / (profile(xs) + 1.0)
    return max(1.0, float(np.max(ratio)))


def qan_lower_bound(profile, a, n, c0):
    """Right side of ``q(a - n) >= q(a) / C0^n - sum_{k<n} C0^-k``."""
    k = np.arange(n)
    return profile(a) / c0**n - np.sum(c0 ** (-k.astype(float)))


def _continuous(profile, r, q, tol, refine=100):
    # adjacent jumps above tol are resampled finer; only a genuine gap survives
    for i in np.flatnonzero(np.abs(np.diff(q)) > tol):
        fine = profile(np.linspace(r[i], r[i + 1], refine + 1))
        if np.max(np.abs(np.diff(fine))) > tol:
            return False
    return True


GROWTH_THRESHOLD = 1.0
CONTINUITY_FRACTION = 1e-3
DOUBLING_SLACK = 0.05
IU_GROWTH_SATISFIES = 2.0
IU_GROWTH_FAILS = 1.25


def check_assumptions(profile, r_max, n_samples=10_000):
    """Check the growth conditions on ``[0, r_max]`` numerically.

    a) growth proxy ``q(r_max) > q(1) + 1``;
    b) monotone on the sample grid;
    c) largest adjacent jump at most ``1e-3 (1 + q(r_max))``, where an offending
       sample interval is resampled 100 times finer before it counts as a gap;
    d) the doubling ratio ``q(x + 1)/(q(x) + 1)`` is finite and its supremum over the
       last quarter of the window exceeds the supremum over the rest by at most 5%.

    The IU class comes from the family tag when the profile has one.  Tabulated
    profiles fall back on the growth of ``q(r)/ln r`` across the top decade
    ``[r_max/10, r_max]``: a factor of at least 2 reads as ``satisfies``, at most
    1.25 as ``fails``, anything between as ``inconclusive``.  Profiles failing any
    of a)-d) are ``inconclusive`` since the criterion does not cover them.
    """
    if not r_max > 10:
        raise ValueError("r_max must exceed 10")
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    r = np.linspace(0.0, r_max, int(n_samples))
    with np.errstate(over="ignore"):
        q = profile(r)
    finite = bool(np.all(np.isfinite(q)))
    top = q[-1]
    passed_a = finite and bool(top > profile(1.0) + GROWTH_THRESHOLD)
    passed_b = finite and bool(np.all(np.diff(q) >= -1e-12 * (1.0 + np.abs(q[1:]))))
    passed_c = finite and _continuous(profile, r, q, CONTINUITY_FRACTION * (1 + top))

    xs = r[r <= r_max - 1.0]
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = profile(xs + 1.0) / (profile(xs) + 1.0)
    if np.all(np.isfinite(ratio)):
        split = int(0.75 * xs.size)
        head, tail = np.max(ratio[:split]), np.max(ratio[split:])
        passed_d = bool(tail <= (1.0 + DOUBLING_SLACK) * head)
        c0 = max(1.0, float(np.max(ratio)))
    else:
        passed_d = False
        c0 = math.inf

    lo = r_max / 10.0
    g_lo = profile(lo) / np.log(lo)
    g_hi = profile(r_max) / np.log(r_max)
    growth = float(g_hi / g_lo) if g_lo > 0 else math.inf

    if not (passed_a and passed_b and passed_c and passed_d):
        iu_class, basis = "inconclusive", "assumptions"
    elif profile.family in ("power", "exponential"):
        iu_class, basis = "satisfies", "family"
    elif profile.family == "logarithmic":
        iu_class, basis = "fails", "family"
    else:
        basis = "heuristic"
        if growth >= IU_GROWTH_SATISFIES:
            iu_class = "satisfies"
        elif growth <= IU_GROWTH_FAILS:
            iu_class = "fails"
        else:
            iu_class = "inconclusive"
    return AssumptionReport(
        passed_a=passed_a,
        passed_b=passed_b,
        passed_c=passed_c,
        passed_d=passed_d,
        c0_estimate=c0,
        iu_class=iu_class,
        iu_basis=basis,
        log_growth_ratio=growth,
    )
