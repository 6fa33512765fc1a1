"""Grid discretization of ``H = L1 (+) L1 + V`` and its spectral data.

The one-dimensional fractional Laplacian is collocated at the midpoints of
``n`` uniform cells covering ``(-R, R)``; functions vanish outside the box.
The two-dimensional operator is the Kronecker sum ``L1 (x) I + I (x) L1`` plus
the diagonal potential and is only ever applied implicitly.

Grid functions are arrays of shape ``(n, n)`` indexed ``[i1, i2]`` with
``x1 = nodes[i1]``, ``x2 = nodes[i2]``.  Eigenfunctions are normalized in the
discrete ``L^2`` sense, ``sum(phi**2) * h**2 == 1``.
"""

import csv
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .exceptions import InsufficientModesError, NumericalError
from .potentials import eval_potential
from .stable_core import _as_params

__all__ = [
    "Grid1D",
    "OperatorHandle",
    "GroundState",
    "IURatioField",
    "build_flap_1d",
    "exterior_killing_rate",
    "ground_state",
    "kernel_eval",
    "semigroup_eval",
    "expm_action",
    "cell_fraction",
    "rect_indicator",
    "iu_ratio_field",
    "default_radius",
    "write_ground_state_csv",
    "read_ground_state_csv",
]

MIN_POINTS = 64
TAIL_TOL = 1e-8


@dataclass(frozen=True)
class Grid1D:
    radius: float
    n: int

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if int(self.n) < MIN_POINTS:
            raise ValueError(f"need at least {MIN_POINTS} points, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self):
        return 2.0 * self.radius / self.n

    @property
    def nodes(self):
        return -self.radius + (np.arange(self.n) + 0.5) * self.h

    def index_of(self, x, tol=1e-6):
        """Index of the node at coordinate ``x``; raises if ``x`` is not a node."""
        i = int(np.rint((x + self.radius) / self.h - 0.5))
        if not 0 <= i < self.n or abs(self.nodes[i] - x) > tol * self.h:
            raise ValueError(f"{x} is not a grid node")
        return i

    def nearest_index(self, x):
        """Nearest node index, snapped symmetrically so that ``-x`` maps to the mirror node."""
        n = self.n
        a = abs(x)
        i = int(np.clip(np.floor((a + self.radius) / self.h), 0, n - 1))
        if n % 2 == 0:
            i = max(i, n // 2)
        return i if x >= 0 else n - 1 - i


def exterior_killing_rate(grid, p):
    """Row sums ``L1 @ 1`` of the one-dimensional matrix.

    The exterior tail ``(A/alpha) ((x + R)^-alpha + (R - x)^-alpha)`` plus, on the two
    end cells, the second-difference weight that couples to the zero exterior.
    """
    p = _as_params(p)
    x, h, R = grid.nodes, grid.h, grid.radius
    a, al = p.levy_const, p.alpha
    rate = a / al * ((x + R) ** (-al) + (R - x) ** (-al))
    s = _self_weight(h, p)
    rate[0] += s
    rate[-1] += s
    return rate


def _self_weight(h, p):
    # local Taylor expansion of the principal value over the own cell (|z| < h/2)
    return p.levy_const * (h / 2.0) ** (2.0 - p.alpha) / ((2.0 - p.alpha) * h * h)


def build_flap_1d(grid, p):
    """Symmetric matrix of the one-dimensional fractional Laplacian with zero exterior.

    Off-diagonal entries are minus the exact cell integrals of
    ``A |x_i - y|^(-1-alpha)``; the near field is a symmetric second difference with
    weight ``A (h/2)^(2-alpha) / ((2 - alpha) h^2)``; the exterior contribution sits on
    the diagonal.  The matrix is an M-matrix, hence positive semidefinite.
    """
    p = _as_params(p)
    n, h = grid.n, grid.h
    x = grid.nodes
    a, al = p.levy_const, p.alpha
    d = np.abs(np.subtract.outer(x, x))
    np.fill_diagonal(d, h)  # keeps the diagonal finite; zeroed below
    w = a / al * ((d - h / 2.0) ** (-al) - (d + h / 2.0) ** (-al))
    np.fill_diagonal(w, 0.0)
    s = _self_weight(h, p)
    idx = np.arange(n - 1)
    w[idx, idx + 1] += s
    w[idx + 1, idx] += s
    L = -w
    # end cells lose one neighbour coupling; exterior_killing_rate puts it back
    np.fill_diagonal(L, w.sum(axis=1) + exterior_killing_rate(grid, p))
    return L


class OperatorHandle:
    """Implicit ``H v = (L1 (+) L1) v + V v`` on the product grid.

    Parameters
    ----------
    grid : Grid1D
    p : StableParams or float
    profile : Profile
    """

    def __init__(self, grid, p, profile):
        self.grid = grid
        self.params = _as_params(p)
        self.profile = profile
        self.L1 = build_flap_1d(grid, self.params)
        x = grid.nodes
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        self.V = eval_potential(profile, np.stack([X1, X2], axis=-1))
        d1 = np.diag(self.L1)
        self.diagonal = d1[:, None] + d1[None, :] + self.V
        self.n_matvec = 0

    @cached_property
    def spectral_interval(self):
        """Gershgorin enclosure ``(lo, hi)`` of the spectrum."""
        radius = np.abs(self.L1).sum(axis=1)
        return min(0.0, float(self.V.min())), float(2.0 * radius.max() + self.V.max())

    @property
    def shape(self):
        m = self.grid.n**2
        return (m, m)

    @property
    def alpha(self):
        return self.params.alpha

    def apply(self, u):
        """Apply ``H`` to a grid function of shape ``(n, n)``."""
        self.n_matvec += 1
        return self.L1 @ u + u @ self.L1 + self.V * u

    def matvec(self, v):
        n = self.grid.n
        return self.apply(np.reshape(v, (n, n))).ravel()

    def as_linear_operator(self):
        return LinearOperator(self.shape, matvec=self.matvec, rmatvec=self.matvec, dtype=float)


@dataclass
class GroundState:
    """Leading eigenpairs of an :class:`OperatorHandle`."""

    grid: Grid1D
    lambdas: np.ndarray
    vectors: np.ndarray  # (k, n, n), L2-normalized on the grid
    residual_norms: np.ndarray
    op: OperatorHandle = field(default=None, repr=False)

    @property
    def phi1(self):
        return self.vectors[0]

    @property
    def k(self):
        return self.lambdas.size

    def tail_bound(self, t):
        """``exp(-(lambda_k - lambda_1) t)``, the relative size of the first neglected mode."""
        return float(np.exp(-(self.lambdas[-1] - self.lambdas[0]) * t))


def _start_vector(m):
    return np.random.default_rng(20240917).standard_normal(m)


def ground_state(op, k=8, tol=1e-13, maxiter=500, residual_tol=1e-8, ncv=None):
    """First ``k`` eigenpairs by implicitly restarted Lanczos on the implicit matvec.

    ARPACK keeps the Krylov basis fully reorthogonalized; the subspace has ``max(4k, 20)``
    vectors and at most ``maxiter`` restarts are allowed.  The start vector is a
    fixed pseudo-random vector, so results are deterministic.  ``phi1`` is
    sign-fixed positive.

    Raises
    ------
    NumericalError
        On non-convergence or if a residual exceeds ``residual_tol * |phi|``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    n = op.grid.n
    h = op.grid.h
    ncv = min(op.shape[0] - 1, max(4 * k, 20) if ncv is None else ncv)
    try:
        vals, vecs = eigsh(
            op.as_linear_operator(),
            k=k,
            which="SA",
            v0=_start_vector(op.shape[0]),
            ncv=ncv,
            tol=tol,
            maxiter=maxiter,
        )
    except ArpackNoConvergence as exc:
        raise NumericalError(
            f"eigensolver stalled after {maxiter} restarts "
            f"({len(exc.eigenvalues)} of {k} pairs converged)",
            check="ground_state",
        ) from None
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vectors = vecs.T.reshape(k, n, n) / h
    if vectors[0].sum() < 0:
        vectors[0] *= -1.0
    residuals = np.array(
        [np.linalg.norm(op.apply(v) - lam * v) * h for lam, v in zip(vals, vectors)]
    )
    if np.any(residuals > residual_tol):
        raise NumericalError(
            f"eigenpair residuals {residuals.max():.2e} exceed {residual_tol:.0e}",
            check="ground_state",
        )
    return GroundState(op.grid, vals, vectors, residuals, op)


def expm_action(op, v, t, tol=1e-11, max_dim=200):
    """``exp(-t H) v`` by Lanczos with full reorthogonalization.

    The Krylov dimension comes from the a priori bound of Hochbruck and Lubich
    on the Gershgorin interval of ``H``; the residual estimate alone can pass
    early when ``v`` is concentrated where ``V`` is large.  The time interval
    is split into equal substeps when the required dimension exceeds
    ``max_dim``.  ``tol`` is relative to ``|v|``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    n = op.grid.n
    u = np.array(v, dtype=float).reshape(n, n)
    if not np.any(u):
        return u
    lo, hi = op.spectral_interval
    rho = (hi - lo) / 4.0
    for substeps in range(1, 4097):
        steps = _krylov_steps(rho * t / substeps, tol / substeps)
        if steps <= max_dim:
            break
    else:
        raise NumericalError("Krylov exponential needs too many substeps", check="expm_action")
    out = u
    dt = t / substeps
    for _ in range(substeps):
        out = _lanczos_expm(op, out, dt, steps) * np.exp(-dt * lo)
    return out


def _krylov_steps(rho_t, tol):
    """Smallest ``m`` whose a priori error bound for ``exp(-tA)``, spectrum in ``[0, 4 rho]``, is below ``tol``."""
    log_tol = np.log(tol)
    rho_t = max(rho_t, 1e-12)
    for m in range(1, 100_000):
        if m >= 2.0 * rho_t:
            log_err = np.log(10.0 / rho_t) - rho_t + m * (1.0 + np.log(rho_t / m))
        elif m * m >= 4.0 * rho_t:
            log_err = np.log(10.0) - m * m / (5.0 * rho_t)
        else:
            continue
        if log_err <= log_tol:
            return m
    raise NumericalError("Krylov step count overflow", check="expm_action")


def _lanczos_expm(op, u, t, steps):
    """``exp(-t (H - lo)) u`` from ``steps`` Lanczos vectors (fewer on breakdown)."""
    lo = op.spectral_interval[0]
    beta0 = np.linalg.norm(u)
    shape = u.shape
    Q = np.empty((steps, u.size))
    Q[0] = u.ravel() / beta0
    alphas, betas = [], []
    for j in range(steps):
        w = op.apply(Q[j].reshape(shape)).ravel()
        a = Q[j] @ w
        w -= a * Q[j]
        if j:
            w -= betas[-1] * Q[j - 1]
        for _ in range(2):
            w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
        b = np.linalg.norm(w)
        alphas.append(a - lo)
        betas.append(b)
        if j == steps - 1 or b < 1e-14 * max(abs(a), 1.0):
            break
        Q[j + 1] = w / b
    m = len(alphas)
    theta, S = eigh_tridiagonal(np.array(alphas), np.array(betas[: m - 1]))
    coef = S @ (np.exp(-t * theta) * S[0])
    return (beta0 * (coef @ Q[:m])).reshape(shape)


def cell_fraction(grid, lo, hi):
    """Fraction of each cell of ``grid`` covered by ``[lo, hi]``."""
    edges = grid.nodes[:, None] + 0.5 * grid.h * np.array([-1.0, 1.0])
    cover = np.clip(np.minimum(edges[:, 1], hi) - np.maximum(edges[:, 0], lo), 0.0, None)
    return cover / grid.h


def rect_indicator(grid, rect):
    """Cell-averaged indicator of a rectangle as a grid function."""
    return np.outer(cell_fraction(grid, rect.x_lo, rect.x_hi), cell_fraction(grid, rect.y_lo, rect.y_hi))


def _node_index(grid, x):
    return grid.index_of(float(x[0])), grid.index_of(float(x[1]))


def kernel_eval(gs, t, x, y, method="auto", tail_tol=TAIL_TOL):
    """Heat kernel ``u_t(x, y)`` at grid nodes ``x`` and ``y``.

    ``method="eigen"`` sums ``exp(-lambda_n t) phi_n(x) phi_n(y)`` over the stored
    modes and raises :class:`InsufficientModesError` when
    ``exp(-(lambda_k - lambda_1) t) >= tail_tol``.  ``method="krylov"`` applies
    ``exp(-tH)`` to the discrete delta at ``y``.  ``"auto"`` uses the expansion
    when its tail criterion holds and the Krylov route otherwise.
    """
    i = _node_index(gs.grid, x)
    j = _node_index(gs.grid, y)
    if _use_eigen(gs, t, method, tail_tol):
        w = np.exp(-gs.lambdas * t)
        return float(np.sum(w * gs.vectors[(slice(None),) + i] * gs.vectors[(slice(None),) + j]))
    return float(_kernel_column(gs.op, t, j)[i])


def _use_eigen(gs, t, method, tail_tol):
    if t <= 0:
        raise ValueError("t must be positive")
    if method not in ("auto", "eigen", "krylov"):
        raise ValueError(f"unknown method {method!r}")
    ok = gs.tail_bound(t) < tail_tol
    if method == "eigen" and not ok:
        raise InsufficientModesError(
            f"k={gs.k} modes leave a tail of {gs.tail_bound(t):.1e} at t={t}",
            check="kernel_eval",
        )
    if method == "krylov" or (method == "auto" and not ok):
        if gs.op is None:
            raise InsufficientModesError(
                "truncated expansion too short and no operator to fall back on",
                check="kernel_eval",
            )
        return False
    return True


def _kernel_column(op, t, j):
    n, h = op.grid.n, op.grid.h
    delta = np.zeros((n, n))
    delta[j] = 1.0 / h**2
    return expm_action(op, delta, t)


def semigroup_eval(gs, t, f, method="auto", tail_tol=TAIL_TOL):
    """``T_t f`` on the whole grid, for a grid function ``f`` of shape ``(n, n)``."""
    f = np.asarray(f, dtype=float)
    if _use_eigen(gs, t, method, tail_tol):
        h2 = gs.grid.h**2
        coef = np.exp(-gs.lambdas * t) * np.tensordot(gs.vectors, f, axes=([1, 2], [0, 1])) * h2
        return np.tensordot(coef, gs.vectors, axes=1)
    return expm_action(gs.op, f, t)


@dataclass
class IURatioField:
    """``u_t(x, y) / (phi1(x) phi1(y))`` on a coarse product grid."""

    points: np.ndarray  # (m, 2) coordinates of the retained coarse nodes
    ratio: np.ndarray  # (m, m)
    excluded: np.ndarray  # (e, 2) coarse nodes dropped for phi1 underflow
    t: float

    @property
    def inf(self):
        return float(self.ratio.min())

    @property
    def sup(self):
        return float(self.ratio.max())

    @property
    def spread(self):
        return self.sup / self.inf


def _coarse_indices(grid, radius, spacing):
    ticks = np.arange(-radius, radius + 1e-9, spacing)
    idx = sorted({grid.nearest_index(v) for v in ticks})
    return np.array(idx)


def iu_ratio_field(gs, t, coarse_radius, coarse_spacing=1.0, floor=1e-10, method="auto"):
    """Sample ``u_t(x, y) / (phi1(x) phi1(y))`` over a coarse product grid.

    Coarse nodes with ``phi1 < floor * max(phi1)`` are excluded and listed in
    the result.  Kernel columns come from the Krylov exponential unless the
    stored expansion satisfies its tail criterion; the radial symmetry of
    ``V`` is used to compute one column per orbit of the square's symmetry
    group.
    """
    grid = gs.grid
    n = grid.n
    phi = gs.phi1
    idx = _coarse_indices(grid, coarse_radius, coarse_spacing)
    pts = [(a, b) for a in idx for b in idx]
    keep = [q for q in pts if phi[q] >= floor * phi.max()]
    dropped = [q for q in pts if phi[q] < floor * phi.max()]
    if not keep:
        raise NumericalError("every coarse node underflows", check="iu_ratio_field")
    use_eigen = _use_eigen(gs, t, method, TAIL_TOL)
    columns = {}
    ratio = np.empty((len(keep), len(keep)))
    for c, (a, b) in enumerate(keep):
        rep, transform = _orbit_representative(a, b, n)
        if rep not in columns:
            if use_eigen:
                w = np.exp(-gs.lambdas * t) * gs.vectors[(slice(None),) + rep]
                columns[rep] = np.tensordot(w, gs.vectors, axes=1)
            else:
                columns[rep] = _kernel_column(gs.op, t, rep)
        col = transform(columns[rep])
        for r, q in enumerate(keep):
            ratio[r, c] = col[q] / (phi[q] * phi[a, b])
    nodes = grid.nodes
    to_xy = lambda qs: np.array([[nodes[i], nodes[j]] for i, j in qs]).reshape(-1, 2)
    return IURatioField(to_xy(keep), ratio, to_xy(dropped), float(t))


def _orbit_representative(a, b, n):
    """Map node ``(a, b)`` into the sector ``n/2 <= j <= i``; return the map for columns."""
    flip = lambda i: n - 1 - i
    fa, fb = a < n // 2, b < n // 2
    a2 = flip(a) if fa else a
    b2 = flip(b) if fb else b
    swap = b2 > a2
    rep = (b2, a2) if swap else (a2, b2)

    def transform(col):
        if swap:
            col = col.T
        if fa:
            col = col[::-1, :]
        if fb:
            col = col[:, ::-1]
        return col

    return rep, transform


def default_radius(profile, p, lam_factor=50.0, r_cap=64.0, pilot_n=64):
    """Truncation radius with ``q(0.8 R) >= lam_factor * lambda_1`` from a coarse pilot."""
    p = _as_params(p)
    pilot = ground_state(OperatorHandle(Grid1D(8.0, pilot_n), p, profile), k=2)
    target = lam_factor * pilot.lambdas[0]
    lo, hi = 0.0, 0.8 * r_cap
    if profile(hi) < target:
        return r_cap
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if profile(mid) < target else (lo, mid)
    return max(hi / 0.8, 4.0)


def write_ground_state_csv(gs, directory, prefix=""):
    """Write ``lambdas.csv`` and ``phi1.csv``.

    ``lambdas.csv`` columns: ``index, lambda, residual``.
    ``phi1.csv`` columns: ``index_x, index_y, x, y, phi1``.
    Numbers use ``repr``-exact scientific notation.
    """
    os.makedirs(directory, exist_ok=True)
    lam_path = os.path.join(directory, f"{prefix}lambdas.csv")
    phi_path = os.path.join(directory, f"{prefix}phi1.csv")
    with open(lam_path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["index", "lambda", "residual"])
        for i, (lam, res) in enumerate(zip(gs.lambdas, gs.residual_norms), start=1):
            out.writerow([i, _fmt(lam), _fmt(res)])
    nodes = gs.grid.nodes
    with open(phi_path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["index_x", "index_y", "x", "y", "phi1"])
        phi = gs.phi1
        for i, x in enumerate(nodes):
            for j, y in enumerate(nodes):
                out.writerow([i, j, _fmt(x), _fmt(y), _fmt(phi[i, j])])
    return lam_path, phi_path


def _fmt(v):
    return f"{float(v):.17e}"


def read_ground_state_csv(directory, prefix=""):
    """Read back a bundle written by :func:`write_ground_state_csv`.

    Returns ``(lambdas, nodes, phi1)`` with ``phi1`` of shape ``(n, n)``.
    """
    with open(os.path.join(directory, f"{prefix}lambdas.csv"), newline="") as fh:
        rows = list(csv.DictReader(fh))
    lambdas = np.array([float(r["lambda"]) for r in rows])
    with open(os.path.join(directory, f"{prefix}phi1.csv"), newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = int(round(np.sqrt(len(rows))))
    phi = np.empty((n, n))
    nodes = np.empty(n)
    for r in rows:
        i, j = int(r["index_x"]), int(r["index_y"])
        phi[i, j] = float(r["phi1"])
        if j == 0:
            nodes[i] = float(r["x"])
    return lambdas, nodes, phi
