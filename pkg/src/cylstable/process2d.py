"""The cylindrical stable process ``X = (X1, X2)`` with independent coordinates.

Paths are simulated on a time grid with exact stable increments.  Jumps of the
continuous-time process are axis-aligned; on the grid this shows up as one
coordinate moving by far more than the other.
"""

from dataclasses import dataclass

import numpy as np

from ._mc import as_generator, as_seed_sequence, map_batches, mean_estimate, time_grid
from .spectral import Grid1D, build_flap_1d
from .stable_core import Interval, _as_params, sample_increment

__all__ = [
    "Rectangle",
    "PathSample",
    "ExitRecord",
    "ExitBatch",
    "BoundaryMeasure",
    "KilledDensity1D",
    "sample_path",
    "first_exit",
    "simulate_exits",
    "survival_prob_2d",
    "ikeda_watanabe_lhs",
    "ikeda_watanabe_rhs",
    "jump_log_threshold",
    "axis_alignment_violations",
    "boundary_landing_fraction",
]


@dataclass(frozen=True)
class Rectangle:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise ValueError(f"degenerate rectangle {self}")

    @classmethod
    def square(cls, center, half_width):
        cx, cy = center
        return cls(cx - half_width, cx + half_width, cy - half_width, cy + half_width)

    @property
    def x_interval(self):
        return Interval(self.x_lo, self.x_hi)

    @property
    def y_interval(self):
        return Interval(self.y_lo, self.y_hi)

    def contains(self, pts):
        """Open-rectangle membership for points of shape ``(..., 2)``."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return (x > self.x_lo) & (x < self.x_hi) & (y > self.y_lo) & (y < self.y_hi)

    def contains_closed(self, pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return (x >= self.x_lo) & (x <= self.x_hi) & (y >= self.y_lo) & (y <= self.y_hi)

    def intersects_closure(self, other):
        return not (
            self.x_hi < other.x_lo
            or other.x_hi < self.x_lo
            or self.y_hi < other.y_lo
            or other.y_hi < self.y_lo
        )

    def boundary_distance(self, pts):
        """Euclidean distance from each point to the boundary of the rectangle."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        dx = np.maximum(self.x_lo - x, x - self.x_hi)
        dy = np.maximum(self.y_lo - y, y - self.y_hi)
        outside = np.hypot(np.maximum(dx, 0), np.maximum(dy, 0))
        inside = -np.maximum(dx, dy)
        return np.where((dx < 0) & (dy < 0), inside, outside)


@dataclass
class PathSample:
    """A path observed at ``times`` with per-coordinate large moves logged.

    ``jumps`` holds ``(k, displacement)`` pairs: a coordinate whose increment over
    ``(times[k-1], times[k]]`` exceeds the logging threshold is recorded as an
    axis-aligned displacement with the other entry exactly zero.
    """

    times: np.ndarray
    positions: np.ndarray
    jumps: list


@dataclass(frozen=True)
class ExitRecord:
    exit_time: float
    pre_exit: np.ndarray
    post_exit: np.ndarray
    censored: bool


@dataclass
class ExitBatch:
    """Vectorized exit records; censored paths carry ``exit_time = inf``."""

    exit_time: np.ndarray
    pre_exit: np.ndarray
    post_exit: np.ndarray
    censored: np.ndarray
    step: float

    def __len__(self):
        return self.exit_time.size


def jump_log_threshold(step, p):
    return 5.0 * step ** (1.0 / _as_params(p).alpha)


def sample_path(x0, horizon, step, p, rng=None):
    p = _as_params(p)
    if step <= 0:
        raise ValueError("step must be positive")
    gen = as_generator(rng)
    times = time_grid(horizon, step)
    dts = np.diff(times)
    inc = np.stack([sample_increment(dt, p, gen, 2) for dt in dts]) if dts.size else np.zeros((0, 2))
    positions = np.vstack([np.asarray(x0, dtype=float)[None, :], np.asarray(x0) + np.cumsum(inc, axis=0)])
    jumps = []
    for k, (dt, d) in enumerate(zip(dts, inc), start=1):
        thr = jump_log_threshold(dt, p)
        for axis in (0, 1):
            if abs(d[axis]) > thr:
                disp = np.zeros(2)
                disp[axis] = d[axis]
                jumps.append((k, disp))
    return PathSample(times, positions, jumps)


def first_exit(path, rect):
    pos = path.positions
    if not rect.contains(pos[0]):
        raise ValueError("path starts outside the rectangle")
    outside = ~rect.contains(pos)
    if not outside.any():
        return ExitRecord(np.inf, pos[-1].copy(), pos[-1].copy(), True)
    k = int(np.argmax(outside))
    return ExitRecord(float(path.times[k]), pos[k - 1].copy(), pos[k].copy(), False)


def simulate_exits(x0, rect, horizon, step, p, n_paths, rng=None):
    """First observed exits of ``n_paths`` independent paths started at ``x0``."""
    p = _as_params(p)
    x0 = np.asarray(x0, dtype=float)
    if not rect.contains(x0):
        raise ValueError("start point is outside the rectangle")
    times = time_grid(horizon, step)

    def run(size, gen):
        pos = np.tile(x0, (size, 1))
        pre = pos.copy()
        tau = np.full(size, np.inf)
        alive = np.ones(size, dtype=bool)
        for k in range(1, times.size):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            dt = times[k] - times[k - 1]
            pre[idx] = pos[idx]
            pos[idx] += sample_increment(dt, p, gen, (idx.size, 2))
            left = ~rect.contains(pos[idx])
            tau[idx[left]] = times[k]
            alive[idx[left]] = False
        return tau, pre, pos

    parts = map_batches(run, n_paths, as_seed_sequence(rng))
    tau = np.concatenate([a for a, _, _ in parts])
    pre = np.concatenate([b for _, b, _ in parts])
    post = np.concatenate([c for _, _, c in parts])
    return ExitBatch(tau, pre, post, ~np.isfinite(tau), float(np.diff(times).max()))


def survival_prob_2d(rect, t, x, p, n_paths, step=None, rng=None):
    step = t / 100.0 if step is None else step
    batch = simulate_exits(x, rect, t, step, p, n_paths, rng)
    return mean_estimate(batch.censored.astype(float), batch.step)


def ikeda_watanabe_lhs(x, rect, target, t1, t2, n_paths, step, p, rng=None):
    """Monte Carlo estimate of ``P^x(X(tau_D) in A, t1 < tau_D < t2)``.

    The observed exit time is the first grid time outside ``D``; it falls in
    ``(t1, t2]`` when the true one lies in ``(t1, t2)`` up to one step.
    """
    _check_iw(x, rect, target, t1, t2)
    if t2 == t1:
        return mean_estimate(np.zeros(max(int(n_paths), 2)), step)
    batch = simulate_exits(x, rect, t2, step, p, n_paths, rng)
    hit = (batch.exit_time > t1) & (batch.exit_time <= t2) & target.contains_closed(batch.post_exit)
    return mean_estimate(hit.astype(float), batch.step)


def _check_iw(x, rect, target, t1, t2):
    if not rect.contains(np.asarray(x, dtype=float)):
        raise ValueError("x must lie inside D")
    if rect.intersects_closure(target):
        raise ValueError("target must stay away from the closure of D")
    if not 0 <= t1 <= t2:
        raise ValueError("need 0 <= t1 <= t2")


@dataclass(frozen=True)
class BoundaryMeasure:
    """Jump kernel ``mu_y``: the Levy density on the two axis lines through ``anchor``."""

    anchor: tuple
    params: object

    def segment_mass(self, lo, hi, center):
        """``int_lo^hi A |z - center|^(-1-alpha) dz`` for a segment not containing ``center``."""
        p = _as_params(self.params)
        near = np.minimum(np.abs(lo - center), np.abs(hi - center))
        far = np.maximum(np.abs(lo - center), np.abs(hi - center))
        inside = (lo < center) & (center < hi)
        if np.any(inside):
            raise ValueError("segment contains the anchor")
        return p.levy_const / p.alpha * (near ** (-p.alpha) - far ** (-p.alpha))

    def mass(self, target):
        """``mu_y(A)`` for a closed rectangle ``A`` avoiding the anchor."""
        y1, y2 = self.anchor
        total = 0.0
        if target.y_lo <= y2 <= target.y_hi:
            total += self.segment_mass(target.x_lo, target.x_hi, y1)
        if target.x_lo <= y1 <= target.x_hi:
            total += self.segment_mass(target.y_lo, target.y_hi, y2)
        return float(total)


class KilledDensity1D:
    """Killed transition density of the one-dimensional process on an interval.

    Built from the full eigendecomposition of the collocation matrix on the
    interval: ``p_U(s, x, y) = sum_k exp(-mu_k s) psi_k(x) psi_k(y)``.
    """

    def __init__(self, iv, p, n=600):
        self.interval = iv
        self.params = _as_params(p)
        half = iv.length / 2.0
        self.center = (iv.lo + iv.hi) / 2.0
        self.grid = Grid1D(half, n)
        self.nodes = self.grid.nodes + self.center
        mu, vec = np.linalg.eigh(build_flap_1d(self.grid, self.params))
        self.mu = mu
        self.psi = vec / np.sqrt(self.grid.h)  # columns, int psi^2 = 1

    def modes_at(self, x):
        """Eigenfunctions at an arbitrary interior point by linear interpolation."""
        x = float(x)
        i = np.searchsorted(self.nodes, x)
        if not self.interval.contains(x):
            raise ValueError(f"{x} is not inside {self.interval}")
        if i == 0 or i == self.nodes.size:
            # half cell next to the boundary: taper linearly to the zero exterior
            j = 0 if i == 0 else -1
            edge = self.interval.lo if i == 0 else self.interval.hi
            return self.psi[j] * abs(x - edge) / (0.5 * self.grid.h)
        w = (x - self.nodes[i - 1]) / self.grid.h
        return (1 - w) * self.psi[i - 1] + w * self.psi[i]

    def project(self, g):
        """``<psi_k, g>`` for a function ``g`` averaged over each cell by 4-point Gauss."""
        h = self.grid.h
        gl, gw = np.polynomial.legendre.leggauss(4)
        pts = self.nodes[:, None] + 0.5 * h * gl[None, :]
        cell = (g(pts) @ gw) * 0.5
        return self.psi.T @ cell * h

    def density(self, s, x, y):
        return float(np.sum(np.exp(-self.mu * s) * self.modes_at(x) * self.modes_at(y)))

    def survival(self, s, x):
        ones = self.psi.sum(axis=0) * self.grid.h
        return float(np.sum(np.exp(-self.mu * s) * self.modes_at(x) * ones))


def _window_weight(lam, t1, t2):
    # int_t1^t2 exp(-lam s) ds, stable for small lam
    return np.exp(-lam * t1) * -np.expm1(-lam * (t2 - t1)) / lam


def _cell_overlap(lo, hi):
    return lambda y: ((y >= lo) & (y <= hi)).astype(float)


def ikeda_watanabe_rhs(x, rect, target, t1, t2, p, n=600):
    """``int_D int_t1^t2 p_D(s, x, y) ds mu_y(A) dy`` by eigen-expansion quadrature.

    The killed density of the rectangle factorizes into two killed interval
    densities; ``mu_y(A)`` is the closed-form power-law antiderivative along the
    horizontal and the vertical line through ``y``.  The time integral is exact.
    """
    _check_iw(x, rect, target, t1, t2)
    if t1 == t2:
        return 0.0
    p = _as_params(p)
    a, al = p.levy_const, p.alpha
    k1 = KilledDensity1D(rect.x_interval, p, n)
    k2 = KilledDensity1D(rect.y_interval, p, n)

    def line_mass(lo, hi):
        def g(z):
            near = np.minimum(np.abs(lo - z), np.abs(hi - z))
            far = np.maximum(np.abs(lo - z), np.abs(hi - z))
            out = a / al * (near ** (-al) - far ** (-al))
            return np.where((z > lo) & (z < hi), 0.0, out)

        return g

    # horizontal line through y hits A when y2 in [A.y_lo, A.y_hi]
    h1 = k1.project(line_mass(target.x_lo, target.x_hi))
    h2 = k2.project(_cell_overlap(target.y_lo, target.y_hi))
    # vertical line through y hits A when y1 in [A.x_lo, A.x_hi]
    v1 = k1.project(_cell_overlap(target.x_lo, target.x_hi))
    v2 = k2.project(line_mass(target.y_lo, target.y_hi))
    m1, m2 = k1.modes_at(x[0]), k2.modes_at(x[1])
    W = _window_weight(k1.mu[:, None] + k2.mu[None, :], t1, t2)
    return float((m1 * h1) @ W @ (m2 * h2) + (m1 * v1) @ W @ (m2 * v2))


def axis_alignment_violations(x0, horizon, step, p, n_paths, threshold, rng=None, ratio=0.1):
    """Count grid displacements larger than ``threshold`` that are not axis-aligned.

    A displacement is axis-aligned when its smaller coordinate is below ``ratio``
    times its larger one.  Returns ``(violations, large_displacements)``.
    """
    p = _as_params(p)
    times = time_grid(horizon, step)
    dts = np.diff(times)

    def run(size, gen):
        bad = big = 0
        for dt in dts:
            d = np.abs(sample_increment(dt, p, gen, (size, 2)))
            large = np.hypot(d[:, 0], d[:, 1]) > threshold
            if large.any():
                dl = d[large]
                big += int(large.sum())
                bad += int(np.sum(dl.min(axis=1) >= ratio * dl.max(axis=1)))
        return bad, big

    parts = map_batches(run, n_paths, as_seed_sequence(rng))
    return sum(b for b, _ in parts), sum(g for _, g in parts)


def boundary_landing_fraction(batch, rect, eps):
    """Fraction of uncensored exits landing within ``eps`` of the boundary of ``rect``."""
    done = ~batch.censored
    if not done.any():
        return 0.0
    return float(np.mean(rect.boundary_distance(batch.post_exit[done]) < eps))
