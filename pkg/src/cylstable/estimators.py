"""Thin scikit-learn style front-ends over the functional API."""

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .estimates import fit_decay
from .feynman_kac import DEFAULT_D, ConstantOne, FKConfig, RectIndicator, estimate_semigroup
from .potentials import Profile, parse_profile
from .spectral import Grid1D, OperatorHandle, default_radius, ground_state
from .stable_core import StableParams

__all__ = ["GroundStateSolver", "FeynmanKacSemigroup", "PowerLawFit"]


def _resolve_profile(profile):
    return profile if isinstance(profile, Profile) else parse_profile(str(profile))


def _check_points(X):
    return check_array(X, ensure_min_features=2, ensure_min_samples=1)[:, :2]


class GroundStateSolver(BaseEstimator):
    """Ground state of the discretized operator.

    ``fit`` takes no data; ``predict`` evaluates ``phi1`` at arbitrary points by
    bilinear interpolation and returns 0 outside the box.
    """

    def __init__(self, alpha=1.0, profile="power:2", radius=None, n=384, k=8):
        self.alpha = alpha
        self.profile = profile
        self.radius = radius
        self.n = n
        self.k = k

    def fit(self, X=None, y=None):
        p = StableParams(self.alpha)
        prof = _resolve_profile(self.profile)
        radius = default_radius(prof, p) if self.radius is None else float(self.radius)
        self.grid_ = Grid1D(radius, int(self.n))
        self.ground_state_ = ground_state(OperatorHandle(self.grid_, p, prof), k=int(self.k))
        self.lambdas_ = self.ground_state_.lambdas
        nodes = self.grid_.nodes
        self._interp = RegularGridInterpolator(
            (nodes, nodes), self.ground_state_.phi1, bounds_error=False, fill_value=None
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "ground_state_")
        X = _check_points(X)
        R = self.grid_.radius
        out = self._interp(X)
        inside = np.all(np.abs(X) < R, axis=1)
        return np.where(inside, np.maximum(out, 0.0), 0.0)


class FeynmanKacSemigroup(BaseEstimator):
    """Monte Carlo ``T_t f`` at query points, ``f`` being ``1`` or ``1_D``."""

    def __init__(self, alpha=1.0, profile="power:2", t=0.5, step=None, n_paths=100_000, seed=0, observable="one"):
        self.alpha = alpha
        self.profile = profile
        self.t = t
        self.step = step
        self.n_paths = n_paths
        self.seed = seed
        self.observable = observable

    def fit(self, X=None, y=None):
        step = self.t / 100.0 if self.step is None else self.step
        self.config_ = FKConfig(float(self.t), float(step), int(self.n_paths), int(self.seed))
        self.profile_ = _resolve_profile(self.profile)
        if self.observable == "one":
            self.observable_ = ConstantOne()
        elif self.observable == "D":
            self.observable_ = RectIndicator(DEFAULT_D)
        else:
            raise ValueError(f"unknown observable {self.observable!r}")
        return self

    def predict(self, X, return_std=False):
        check_is_fitted(self, "config_")
        X = _check_points(X)
        ests = [estimate_semigroup(x, self.observable_, self.profile_, self.config_, self.alpha) for x in X]
        mean = np.array([e.mean for e in ests])
        if return_std:
            return mean, np.array([e.stderr for e in ests])
        return mean


class PowerLawFit(RegressorMixin, BaseEstimator):
    """``y ~ C x^slope`` fitted in log-log coordinates; ``X`` holds positions."""

    def __init__(self, min_points=5):
        self.min_points = min_points

    def fit(self, X, y, sigma=None):
        r = check_array(X, ensure_2d=False).ravel()
        y = np.asarray(y, dtype=float).ravel()
        self.result_ = fit_decay(r, y, sigma=sigma, min_points=self.min_points)
        self.slope_ = self.result_.slope
        self.intercept_ = self.result_.intercept
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        r = check_array(X, ensure_2d=False).ravel()
        return np.exp(self.intercept_) * r**self.slope_
