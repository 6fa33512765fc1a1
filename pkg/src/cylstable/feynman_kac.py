"""Monte Carlo Feynman-Kac semigroup ``T_t f(x) = E^x[exp(-int_0^t V(X_s) ds) f(X_t)]``."""

from dataclasses import dataclass

import numpy as np

from ._mc import Estimate, as_seed_sequence, map_batches, mean_estimate, time_grid
from .exceptions import ConfigError
from .potentials import eval_potential
from .process2d import Rectangle
from .stable_core import _as_params, sample_increment

__all__ = [
    "FKConfig",
    "FKEstimate",
    "RatioEstimate",
    "RectIndicator",
    "BallIndicator",
    "ConstantOne",
    "DEFAULT_D",
    "estimate_semigroup",
    "estimate_many",
    "iu_ratio_condition",
    "total_mass",
]

FKEstimate = Estimate

DEFAULT_D = Rectangle(-2.0, 2.0, -2.0, 2.0)


@dataclass(frozen=True)
class FKConfig:
    t: float
    step: float
    n_paths: int
    seed: int = 0

    def __post_init__(self):
        if not self.t > 0:
            raise ConfigError("t must be positive", field="t")
        if not 0 < self.step <= self.t:
            raise ConfigError("step must lie in (0, t]", field="step")
        if int(self.n_paths) < 100:
            raise ConfigError("n_paths must be at least 100", field="n_paths")


@dataclass(frozen=True)
class RectIndicator:
    rect: Rectangle

    def __call__(self, pts):
        return self.rect.contains(pts).astype(float)


@dataclass(frozen=True)
class BallIndicator:
    """Indicator of the open Euclidean ball ``B(center, radius)``."""

    center: tuple
    radius: float = 1.0

    def __call__(self, pts):
        d = np.asarray(pts, dtype=float) - np.asarray(self.center, dtype=float)
        return (np.hypot(d[..., 0], d[..., 1]) < self.radius).astype(float)


@dataclass(frozen=True)
class ConstantOne:
    def __call__(self, pts):
        return np.ones(np.shape(pts)[:-1])


def _path_samples(x, observables, profile, cfg, p):
    """Per-path samples ``exp(-sum V(X_{t_k}) dt_k) f(X_t)`` for each observable.

    All observables share the same paths.  Returns an array ``(n_obs, n_paths)``
    and the largest step used.
    """
    p = _as_params(p)
    x = np.asarray(x, dtype=float)
    times = time_grid(cfg.t, cfg.step)
    dts = np.diff(times)

    def run(size, gen):
        pos = np.tile(x, (size, 1))
        logw = np.zeros(size)
        with np.errstate(over="ignore"):
            for dt in dts:
                logw -= dt * eval_potential(profile, pos)  # left endpoint
                pos += sample_increment(dt, p, gen, (size, 2))
        w = np.exp(logw)
        return np.stack([w * f(pos) for f in observables])

    parts = map_batches(run, cfg.n_paths, as_seed_sequence(cfg.seed))
    return np.concatenate(parts, axis=1), float(dts.max())


def estimate_semigroup(x, f, profile, cfg, p):
    """Estimate ``T_t f(x)`` from ``cfg.n_paths`` paths seeded by ``cfg.seed``.

    The time integral is the left-endpoint Riemann sum on a grid of spacing
    ``cfg.step``, accumulated in log space.
    """
    samples, step = _path_samples(x, [f], profile, cfg, p)
    return mean_estimate(samples[0], step)


def estimate_many(x, observables, profile, cfg, p):
    """Estimates for several observables over one shared set of paths."""
    samples, step = _path_samples(x, list(observables), profile, cfg, p)
    return [mean_estimate(s, step) for s in samples]


def total_mass(x, profile, cfg, p):
    return estimate_semigroup(x, ConstantOne(), profile, cfg, p)


@dataclass(frozen=True)
class RatioEstimate:
    """Ratio of two estimates from common paths; ``ratio`` is None on overflow."""

    ratio: float | None
    stderr: float | None
    numerator: Estimate
    denominator: Estimate
    overflow: bool


def iu_ratio_condition(x, profile, cfg, p, D=DEFAULT_D):
    """``T_t 1_{B(x,1)}(x) / T_t 1_D(x)`` with delta-method standard error.

    Both semigroup values come from the same paths.  When no path contributes to
    the denominator the ratio is reported as an overflow outcome.
    """
    x = np.asarray(x, dtype=float)
    samples, step = _path_samples(x, [BallIndicator(tuple(x), 1.0), RectIndicator(D)], profile, cfg, p)
    num, den = (mean_estimate(s, step) for s in samples)
    if not den.mean > 0:
        return RatioEstimate(None, None, num, den, True)
    r = num.mean / den.mean
    n = samples.shape[1]
    # influence function of the ratio of means
    infl = (samples[0] - r * samples[1]) / den.mean
    se = float(np.std(infl, ddof=1) / np.sqrt(n))
    return RatioEstimate(float(r), se, num, den, False)
