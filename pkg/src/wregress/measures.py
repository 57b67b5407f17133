"""Core measure types, exact discrete optimal transport, and Gaussian
closed-form Wasserstein primitives.

The two measure families used throughout the package are finite weighted
point sets (:class:`DiscreteMeasure`) and Gaussians
(:class:`GaussianMeasure`).  An :class:`EndpointLaw` is a probability law
on pairs ``(x0, x1)``; it identifies a random line segment through its
values at t=0 and t=1, and its one-time marginals are obtained with
:func:`pushforward_line`.

All operations are pure functions of immutable inputs (arrays are stored
read-only), so concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import (
    DimensionError,
    EmptyMeasureError,
    InvalidCovarianceError,
    RangeError,
)

__all__ = [
    "DiscreteMeasure",
    "GaussianMeasure",
    "Coupling",
    "EndpointLaw",
    "w2_discrete",
    "w2_gaussian",
    "gaussian_cross_term",
    "gaussian_geodesic",
    "pushforward_line",
]

WEIGHT_TOL = 1e-12
COUPLING_TOL = 1e-9
PSD_TOL = 1e-10
MERGE_TOL = 1e-12

# HiGHS options used for every exact transportation LP in the package.
_LP_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValueError(f"points must be a (n, d) array, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted finite point set in d dimensions.

    Weights must be nonnegative and sum to one (within 1e-12); atoms with
    exactly zero weight are pruned on construction.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.points)
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.shape[0]:
            raise ValueError(
                f"{pts.shape[0]} points but {w.shape[0]} weights"
            )
        if pts.shape[0] == 0:
            raise EmptyMeasureError("measure has no atoms")
        if pts.shape[1] < 1:
            raise DimensionError("points must have dimension >= 1")
        if (w < 0).any():
            raise ValueError(f"negative weight: min={w.min()}")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        keep = w > 0.0
        if not keep.any():
            raise EmptyMeasureError("all atoms have zero weight")
        object.__setattr__(self, "points", _readonly(pts[keep]))
        object.__setattr__(self, "weights", _readonly(w[keep]))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        """Unit mass at a single point."""
        pts = np.atleast_1d(np.asarray(point, dtype=float)).reshape(1, -1)
        return cls(pts, np.array([1.0]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points


def _check_covariance(cov: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidCovarianceError(f"covariance must be square, got {cov.shape}")
    if np.abs(cov - cov.T).max() > tol:
        raise InvalidCovarianceError("covariance is not symmetric")
    sym = 0.5 * (cov + cov.T)
    if np.linalg.eigvalsh(sym).min() < -tol:
        raise InvalidCovarianceError("covariance is not positive semidefinite")
    return sym


@dataclass(frozen=True)
class GaussianMeasure:
    """Gaussian measure given by a mean vector and a PSD covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).ravel()
        if m.size < 1:
            raise DimensionError("mean must have dimension >= 1")
        cov = _check_covariance(self.covariance)
        if cov.shape[0] != m.size:
            raise DimensionError(
                f"mean has dimension {m.size} but covariance is {cov.shape}"
            )
        object.__setattr__(self, "mean", _readonly(m))
        object.__setattr__(self, "covariance", _readonly(cov))

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class Coupling:
    """Transport plan between two discrete measures.

    ``matrix[i, j]`` is the mass moved from ``row_support[i]`` to
    ``col_support[j]``; row and column sums must match the two marginals
    within 1e-9.
    """

    matrix: np.ndarray
    row_support: np.ndarray
    col_support: np.ndarray
    row_weights: np.ndarray = field(repr=False, default=None)
    col_weights: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        rs = _as_points(self.row_support)
        cs = _as_points(self.col_support)
        if mat.shape != (rs.shape[0], cs.shape[0]):
            raise ValueError(
                f"matrix shape {mat.shape} does not match supports "
                f"({rs.shape[0]}, {cs.shape[0]})"
            )
        if mat.min() < 0:
            raise ValueError(f"negative plan entry: {mat.min()}")
        rw = mat.sum(axis=1) if self.row_weights is None else np.asarray(self.row_weights, float)
        cw = mat.sum(axis=0) if self.col_weights is None else np.asarray(self.col_weights, float)
        if np.abs(mat.sum(axis=1) - rw).max() > COUPLING_TOL:
            raise ValueError("row sums do not match source weights")
        if np.abs(mat.sum(axis=0) - cw).max() > COUPLING_TOL:
            raise ValueError("column sums do not match target weights")
        object.__setattr__(self, "matrix", _readonly(mat))
        object.__setattr__(self, "row_support", _readonly(rs))
        object.__setattr__(self, "col_support", _readonly(cs))
        object.__setattr__(self, "row_weights", _readonly(rw))
        object.__setattr__(self, "col_weights", _readonly(cw))


class EndpointLaw:
    """Probability law on endpoint pairs ``(x0, x1)``.

    Two variants share this type: a discrete law (weighted pair atoms) and
    a Gaussian law (one 2d-dimensional Gaussian).  Each pair identifies the
    line segment ``t -> (1-t) x0 + t x1``, so the law assigns a flux over
    line segments.
    """

    def __init__(self, *, x0=None, x1=None, weights=None, mean=None, covariance=None):
        if mean is not None or covariance is not None:
            if x0 is not None or x1 is not None or weights is not None:
                raise ValueError("pass either atoms or (mean, covariance), not both")
            m = np.asarray(mean, dtype=float).ravel()
            if m.size % 2 != 0 or m.size == 0:
                raise DimensionError(
                    f"Gaussian endpoint law needs an even-dimensional mean, got {m.size}"
                )
            cov = _check_covariance(covariance)
            if cov.shape[0] != m.size:
                raise DimensionError("mean/covariance size mismatch")
            self._kind = "gaussian"
            self.mean = _readonly(m)
            self.covariance = _readonly(cov)
            self.x0 = self.x1 = self.weights = None
            self._dim = m.size // 2
            return
        a0 = _as_points(x0)
        a1 = _as_points(x1)
        w = np.asarray(weights, dtype=float).ravel()
        if not (a0.shape == a1.shape and a0.shape[0] == w.size):
            raise ValueError("x0, x1 and weights must have matching lengths")
        if a0.shape[0] == 0:
            raise EmptyMeasureError("endpoint law has no atoms")
        if (w < 0).any():
            raise ValueError("negative weight in endpoint law")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        keep = w > 0.0
        self._kind = "discrete"
        self.x0 = _readonly(a0[keep])
        self.x1 = _readonly(a1[keep])
        self.weights = _readonly(w[keep])
        self.mean = self.covariance = None
        self._dim = a0.shape[1]

    @classmethod
    def discrete(cls, x0, x1, weights) -> "EndpointLaw":
        return cls(x0=x0, x1=x1, weights=weights)

    @classmethod
    def gaussian(cls, mean, covariance) -> "EndpointLaw":
        return cls(mean=mean, covariance=covariance)

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def is_discrete(self) -> bool:
        return self._kind == "discrete"

    @property
    def dim(self) -> int:
        """Dimension d of a single endpoint (the law lives on R^{2d})."""
        return self._dim

    @property
    def n_atoms(self) -> int:
        if not self.is_discrete:
            raise ValueError("Gaussian endpoint law has no atoms")
        return self.weights.size

    def pairs(self) -> np.ndarray:
        """Atoms as rows ``[x0, x1]`` in R^{2d}; discrete variant only."""
        if not self.is_discrete:
            raise ValueError("Gaussian endpoint law has no atoms")
        return np.hstack([self.x0, self.x1])

    def squared_speed(self) -> float:
        """Mean squared segment length, the integral of ||x1 - x0||^2."""
        if self.is_discrete:
            return float(self.weights @ ((self.x1 - self.x0) ** 2).sum(axis=1))
        d = self._dim
        diff_mean = self.mean[d:] - self.mean[:d]
        c = self.covariance
        diff_cov = c[:d, :d] + c[d:, d:] - c[:d, d:] - c[d:, :d]
        return float(diff_mean @ diff_mean + np.trace(diff_cov))

    def __repr__(self):
        if self.is_discrete:
            return f"EndpointLaw(discrete, d={self._dim}, atoms={self.n_atoms})"
        return f"EndpointLaw(gaussian, d={self._dim})"


# ---------------------------------------------------------------------------
# Discrete optimal transport
# ---------------------------------------------------------------------------


def squared_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between rows of x and y."""
    xx = (x * x).sum(axis=1)[:, None]
    yy = (y * y).sum(axis=1)[None, :]
    d2 = xx + yy - 2.0 * (x @ y.T)
    return np.maximum(d2, 0.0)


def w2_discrete(a: DiscreteMeasure, b: DiscreteMeasure) -> tuple[float, Coupling]:
    """Squared 2-Wasserstein distance between two discrete measures.

    Solves the transportation linear program exactly and returns the
    optimal cost together with an optimal coupling.  The cost is the
    squared distance; take a square root for the metric.

    Args:
        a, b: discrete measures of equal dimension.

    Returns:
        ``(cost, plan)`` where ``cost = sum_ij plan[i, j] ||a_i - b_j||^2``
        and ``plan`` is an exact optimizer.  Optimal plans are not unique;
        only the cost is a stable quantity.
    """
    if not isinstance(a, DiscreteMeasure) or not isinstance(b, DiscreteMeasure):
        raise TypeError("w2_discrete expects DiscreteMeasure operands")
    if a.n_atoms == 0 or b.n_atoms == 0:
        raise EmptyMeasureError("cannot transport an empty measure")
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    cost = squared_distances(a.points, b.points)
    n0, n1 = cost.shape
    # one mass-balance row per atom; redundancy is handled by presolve
    row_idx = np.repeat(np.arange(n0), n1)
    col_idx = n0 + np.tile(np.arange(n1), n0)
    var = np.arange(n0 * n1)
    A_eq = sp.coo_matrix(
        (
            np.ones(2 * n0 * n1),
            (np.concatenate([row_idx, col_idx]), np.concatenate([var, var])),
        ),
        shape=(n0 + n1, n0 * n1),
    ).tocsr()
    b_eq = np.concatenate([a.weights, b.weights])
    # dual simplex wins on small instances; interior point with crossover
    # (still an exact vertex solution) is much faster on dense large ones
    if n0 * n1 > 40_000:
        method, options = "highs-ipm", {}
    else:
        method, options = "highs", _LP_OPTIONS
    res = linprog(
        cost.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
        method=method, options=options,
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = np.maximum(res.x.reshape(n0, n1), 0.0)
    value = float((plan * cost).sum())
    coupling = Coupling(plan, a.points, b.points, a.weights, b.weights)
    return value, coupling


# ---------------------------------------------------------------------------
# Gaussian closed forms
# ---------------------------------------------------------------------------


def _eigh_psd(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with negative eigenvalues clamped to zero."""
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return np.maximum(vals, 0.0), vecs


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    vals, vecs = _eigh_psd(cov)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _psd_inv_sqrt(cov: np.ndarray) -> np.ndarray:
    """Pseudo-inverse square root; cutoff at 1e-12 x largest eigenvalue."""
    vals, vecs = _eigh_psd(cov)
    cutoff = 1e-12 * (vals.max() if vals.size and vals.max() > 0 else 1.0)
    inv = np.where(vals > cutoff, 1.0 / np.sqrt(np.where(vals > cutoff, vals, 1.0)), 0.0)
    return (vecs * inv) @ vecs.T


def gaussian_cross_term(cov0, cov1) -> np.ndarray:
    """Cross-covariance matrix of the optimal Gaussian coupling.

    Returns ``S = cov0^{1/2} (cov0^{1/2} cov1 cov0^{1/2})^{1/2} cov0^{-1/2}``
    with the inverse taken as a pseudo-inverse on the range of ``cov0``.
    """
    c0 = _check_covariance(np.atleast_2d(np.asarray(cov0, dtype=float)))
    c1 = _check_covariance(np.atleast_2d(np.asarray(cov1, dtype=float)))
    if c0.shape != c1.shape:
        raise DimensionError(f"covariance shapes differ: {c0.shape} vs {c1.shape}")
    r0 = _psd_sqrt(c0)
    middle = _psd_sqrt(r0 @ c1 @ r0)
    return r0 @ middle @ _psd_inv_sqrt(c0)


def w2_gaussian(a: GaussianMeasure, b: GaussianMeasure) -> float:
    """Squared 2-Wasserstein distance between two Gaussian measures.

    ``||m0 - m1||^2 + tr(cov0 + cov1 - 2 S)`` with S the cross term of the
    optimal coupling; the result is clamped at zero.
    """
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    s = gaussian_cross_term(a.covariance, b.covariance)
    dm = a.mean - b.mean
    val = float(dm @ dm + np.trace(a.covariance + b.covariance - 2.0 * s))
    return max(val, 0.0)


def gaussian_geodesic(a: GaussianMeasure, b: GaussianMeasure, t: float) -> GaussianMeasure:
    """Point at parameter ``t`` on the constant-speed geodesic from a to b.

    Mean interpolates linearly; the covariance combines the endpoints with
    the cross term so that the curve stays Gaussian.  Endpoints are
    returned exactly.
    """
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if not (0.0 <= t <= 1.0):
        raise RangeError(f"geodesic parameter must lie in [0, 1], got {t}")
    if t == 0.0:
        return a
    if t == 1.0:
        return b
    s = gaussian_cross_term(a.covariance, b.covariance)
    mean = (1.0 - t) * a.mean + t * b.mean
    cov = (
        (1.0 - t) ** 2 * a.covariance
        + t**2 * b.covariance
        + t * (1.0 - t) * (s + s.T)
    )
    return GaussianMeasure(mean, cov)


# ---------------------------------------------------------------------------
# One-time marginals of an endpoint law
# ---------------------------------------------------------------------------


def merge_atoms(points: np.ndarray, weights: np.ndarray, tol: float = MERGE_TOL):
    """Merge atoms whose coordinates agree within ``tol``, summing weights.

    Grouping is by coordinates rounded at the tolerance scale; each group
    keeps its first original point, so exact inputs stay exact.
    """
    decimals = int(round(-np.log10(tol)))
    keys = np.round(points, decimals=decimals)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    merged_w = np.zeros(first.size)
    np.add.at(merged_w, inverse, weights)
    return points[first], merged_w


def pushforward_line(law: EndpointLaw, t: float):
    """One-time marginal of an endpoint law: the law of ``(1-t) x0 + t x1``.

    ``t`` is unrestricted, so the same call extrapolates beyond [0, 1].
    Returns a :class:`DiscreteMeasure` or :class:`GaussianMeasure`
    matching the law's variant; coincident atoms are merged.
    """
    t = float(t)
    if law.is_discrete:
        pts = (1.0 - t) * law.x0 + t * law.x1
        merged_pts, merged_w = merge_atoms(pts, law.weights)
        return DiscreteMeasure(merged_pts, merged_w)
    d = law.dim
    proj = np.hstack([(1.0 - t) * np.eye(d), t * np.eye(d)])
    mean = proj @ law.mean
    cov = proj @ law.covariance @ proj.T
    return GaussianMeasure(mean, 0.5 * (cov + cov.T))
