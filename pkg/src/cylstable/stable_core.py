"""One-dimensional symmetric alpha-stable building blocks.

The process ``X`` has characteristic function ``E exp(i xi X_t) = exp(-t |xi|^alpha)``
with ``0 < alpha < 2``.  Its Levy measure has density ``A_alpha / |z|^(1 + alpha)``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gamma, gammaln

from ._mc import as_seed_sequence, map_batches, mean_estimate, time_grid
from .exceptions import NumericalError

__all__ = [
    "StableParams",
    "Interval",
    "levy_constant",
    "transition_density_1d",
    "interval_prob_1d",
    "sample_increment",
    "levy_density_1d",
    "levy_tail_mass",
    "survival_prob_1d",
]

DENSITY_ATOL = 1e-10
CDF_ATOL = 1e-8
_SERIES_FROM = 1e3


def _check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    return alpha


def levy_constant(alpha):
    """Return the jump-intensity constant ``A_alpha``.

    ``A_alpha = alpha 2^(alpha-1) Gamma((1+alpha)/2) / (sqrt(pi) Gamma(1-alpha/2))``.
    """
    alpha = _check_alpha(alpha)
    return alpha * 2.0 ** (alpha - 1.0) * gamma((1.0 + alpha) / 2.0) / (
        np.sqrt(np.pi) * gamma(1.0 - alpha / 2.0)
    )


@dataclass(frozen=True)
class StableParams:
    """Stability index together with its derived Levy constant."""

    alpha: float
    levy_const: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))
        object.__setattr__(self, "levy_const", levy_constant(self.alpha))


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi})")

    def contains(self, x):
        return (x > self.lo) & (x < self.hi)

    @property
    def length(self):
        return self.hi - self.lo


def _as_params(p):
    return p if isinstance(p, StableParams) else StableParams(p)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)


def _panel_integral(z, alpha, kernel):
    # exp(-xi^alpha) < 1e-18 beyond xi_max; panels end at zeros of cos(xi z)
    xi_max = np.log(1e18) ** (1.0 / alpha)
    if z > 0:
        edges = (np.arange(int(np.ceil(xi_max * z / np.pi + 0.5)) + 1) - 0.5) * np.pi / z
        edges[0] = 0.0
    else:
        edges = np.linspace(0.0, xi_max, 65)
    # refine the first panel geometrically: exp(-xi^alpha) has a cusp at 0 for alpha < 1
    first = edges[1] * np.geomspace(1e-12, 1.0, 25)
    edges = np.concatenate([[0.0], first, edges[2:]])
    a, b = edges[:-1, None], edges[1:, None]
    xi = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
    vals = np.exp(-(xi**alpha)) * kernel(xi, z)
    return float(np.sum(0.5 * (b - a)[:, 0] * (vals @ _GL_WEIGHTS)))


def _cos_kernel(xi, z):
    return np.cos(xi * z)


def _sin_over_xi_kernel(xi, z):
    return z * np.sinc(xi * z / np.pi)


def _unit_density(z, alpha):
    """Density of X_1 at |z| via Fourier inversion."""
    z = abs(float(z))
    if z == 0.0:
        return gamma(1.0 + 1.0 / alpha) / np.pi
    if z <= 1.0:
        return _panel_integral(z, alpha, _cos_kernel) / np.pi
    # QAWF: integration over half-cycles with epsilon-algorithm extrapolation; its cycle
    # warnings are superseded by the explicit error check below
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr = integrate.quad(
            lambda xi: np.exp(-(xi**alpha)),
            0.0,
            np.inf,
            weight="cos",
            wvar=z,
            limlst=200,
            epsabs=1e-13,
        )
    if not np.isfinite(value) or abserr > np.pi * DENSITY_ATOL:
        raise NumericalError(
            f"density quadrature did not converge (alpha={alpha}, z={z}, err={abserr:.2e})",
            check="transition_density_1d",
        )
    return value / np.pi


def transition_density_1d(t, x, y, p):
    """Transition density ``p(t, x, y)`` of the one-dimensional stable process.

    Evaluated as ``t^(-1/alpha) g(|x - y| t^(-1/alpha))`` where ``g`` is the
    unit-time density obtained by oscillatory quadrature of
    ``(1/pi) int_0^inf exp(-xi^alpha) cos(xi z) dxi``.

    Parameters
    ----------
    t : float
        Time, strictly positive.
    x, y : float
        Start and end points.
    p : StableParams or float
        Stability parameters (a bare float is taken as alpha).

    Raises
    ------
    NumericalError
        If the quadrature misses the ``1e-10`` absolute target.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    p = _as_params(p)
    scale = t ** (-1.0 / p.alpha)
    return scale * _unit_density((y - x) * scale, p.alpha)


def _tail_series(z, alpha, terms=40):
    # 1 - F(z) from the large-|z| expansion of the density integrated termwise
    k = np.arange(1, terms + 1)
    coef = (
        (-1.0) ** (k + 1)
        * np.exp(gammaln(alpha * k + 1.0) - gammaln(k + 1.0))
        * np.sin(np.pi * alpha * k / 2.0)
        / (alpha * k)
    )
    terms_ = coef * z ** (-alpha * k)
    keep = np.abs(terms_) > 1e-18 * abs(terms_[0])
    cut = np.argmin(keep) if not keep.all() else terms
    return float(np.sum(terms_[: max(cut, 1)])) / np.pi


def _unit_cdf_minus_half(z, alpha):
    # F(z) - 1/2 = (1/pi) int_0^inf exp(-xi^alpha) sin(xi z) / xi dxi near the origin;
    # further out the smooth density is integrated, far out the tail series is used
    if z == 0.0:
        return 0.0
    sign = np.sign(z)
    z = abs(z)
    if z <= 1.0:
        return sign * _panel_integral(z, alpha, _sin_over_xi_kernel) / np.pi
    if z > _SERIES_FROM:
        return sign * (0.5 - _tail_series(z, alpha))
    body, err = integrate.quad(lambda u: _unit_density(u, alpha), 1.0, z, limit=200, epsabs=1e-13)
    if not np.isfinite(body) or err > CDF_ATOL:
        raise NumericalError("cdf quadrature did not converge", check="interval_prob_1d")
    return sign * (_panel_integral(1.0, alpha, _sin_over_xi_kernel) / np.pi + body)


def interval_prob_1d(t, x, lo, hi, p):
    """``P^x(X_t in (lo, hi))`` for the free one-dimensional process."""
    if t <= 0:
        raise ValueError("t must be positive")
    p = _as_params(p)
    scale = t ** (-1.0 / p.alpha)
    return _unit_cdf_minus_half((hi - x) * scale, p.alpha) - _unit_cdf_minus_half(
        (lo - x) * scale, p.alpha
    )


def sample_increment(t, p, rng, size=None):
    """Draw exact increments ``X_t - X_0`` by the Chambers-Mallows-Stuck transform.

    For the symmetric law the transform reads
    ``sin(alpha U) / cos(U)^(1/alpha) * (cos((1 - alpha) U) / W)^((1 - alpha)/alpha)``
    with ``U`` uniform on ``(-pi/2, pi/2)`` and ``W`` standard exponential,
    then rescaled by ``t^(1/alpha)``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    p = _as_params(p)
    alpha = p.alpha
    u = rng.uniform(-np.pi / 2, np.pi / 2, size)
    w = rng.standard_exponential(size)
    if alpha == 1.0:
        z = np.tan(u)
    else:
        z = (
            np.sin(alpha * u)
            / np.cos(u) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha)
        )
    return t ** (1.0 / alpha) * z


def levy_density_1d(z, p):
    """Levy density ``A_alpha / |z|^(1+alpha)``; ``z = 0`` is rejected."""
    p = _as_params(p)
    z = np.asarray(z, dtype=float)
    if np.any(z == 0):
        raise ValueError("the Levy density is singular at z = 0")
    out = p.levy_const / np.abs(z) ** (1.0 + p.alpha)
    return float(out) if out.ndim == 0 else out


def levy_tail_mass(eps, p):
    """Mass of the Levy measure on ``{|z| > eps}``, namely ``(2 A / alpha) eps^-alpha``."""
    p = _as_params(p)
    if eps <= 0:
        raise ValueError("eps must be positive")
    return 2.0 * p.levy_const / p.alpha * eps ** (-p.alpha)


def survival_prob_1d(iv, t, x, p, n_paths, step=None, rng=None):
    """Monte Carlo estimate of ``P^x(tau_iv > t)``.

    The path is observed on a grid of spacing ``step`` (default ``t/100``);
    exits and returns between observation times go unseen, so the estimate
    is biased upward by an amount that vanishes with the step.  The step used
    is reported on the returned :class:`Estimate`.
    """
    p = _as_params(p)
    if not iv.contains(x):
        raise ValueError(f"start point {x} is not inside {iv}")
    if t <= 0:
        raise ValueError("t must be positive")
    step = t / 100.0 if step is None else float(step)
    times = time_grid(t, step)
    dts = np.diff(times)

    def run(size, gen):
        pos = np.full(size, float(x))
        alive = np.ones(size, dtype=bool)
        for dt in dts:
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            pos[idx] += sample_increment(dt, p, gen, idx.size)
            alive[idx] = iv.contains(pos[idx])
        return alive.astype(float)

    samples = np.concatenate(map_batches(run, n_paths, as_seed_sequence(rng)))
    return mean_estimate(samples, dts.max())
