"""Measure-valued least-squares regression over line segments.

Given measures observed at timestamps, the fit seeks a probability law on
endpoint pairs ``(x0, x1)`` whose one-time marginals are closest (in
average squared Wasserstein distance) to the observations.  The search is
reduced to a multimarginal transport problem over the observation
supports: for each tuple of support points the best line through them is
an ordinary least-squares fit, so the tuple cost is that fit's residual
and the endpoint law is reconstructed by pushing the optimal plan through
the per-tuple fits.

The objective is not convex along displacement interpolation of endpoint
laws; :func:`nonconvexity_probe` and :func:`nonconvexity_example` exhibit
this.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DegenerateTimestampsError,
    DimensionError,
    RangeError,
    SizeCapError,
)
from .measures import (
    DiscreteMeasure,
    EndpointLaw,
    GaussianMeasure,
    merge_atoms,
    pushforward_line,
    w2_discrete,
    w2_gaussian,
)
from .mmot import DEFAULT_SIZE_CAP, MarginalSpec, MultimarginalPlan, solve_mm_entropic, solve_mm_exact

__all__ = [
    "TimedDataset",
    "RegressionResult",
    "SampledPaths",
    "residual_cost",
    "fit_regression",
    "regression_objective",
    "displacement_interpolate",
    "nonconvexity_probe",
    "nonconvexity_example",
    "sample_paths",
    "ac_bound_check",
]


@dataclass(frozen=True)
class TimedDataset:
    """Timestamped discrete measures sharing one point dimension.

    Timestamps may repeat, need not be sorted, and may lie outside
    [0, 1]; at least two distinct values are required at fit time.
    """

    entries: tuple

    def __init__(self, entries):
        entries = tuple((float(t), m) for t, m in entries)
        if not entries:
            raise ValueError("dataset needs at least one entry")
        dims = {m.dim for _, m in entries}
        if len(dims) != 1:
            raise DimensionError(f"mixed measure dimensions: {sorted(dims)}")
        for _, m in entries:
            if not isinstance(m, DiscreteMeasure):
                raise TypeError("TimedDataset holds DiscreteMeasure entries")
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries[0][1].dim

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([t for t, _ in self.entries])

    @property
    def measures(self) -> list[DiscreteMeasure]:
        return [m for _, m in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class RegressionResult:
    """Fitted endpoint law with its plan and per-tuple line fits.

    ``cost`` is the multimarginal optimum; for the exact solver it equals
    ``regression_objective(law, dataset)``.  ``ls_map`` stores the fitted
    ``(x0, x1)`` pair for every support tuple, shaped
    ``(*axis_sizes, 2, d)``; the law's atoms are the plan's nonzero
    entries pushed through this map.
    """

    law: EndpointLaw
    cost: float
    plan: MultimarginalPlan
    ls_map: np.ndarray
    solver: str = "exact"
    iterations: int | None = None
    converged: bool = True


class SampledPaths(NamedTuple):
    """Endpoint pairs drawn from a law, with per-draw likelihoods."""

    x0: np.ndarray
    x1: np.ndarray
    likelihood: np.ndarray

    def __len__(self) -> int:
        return self.likelihood.size


def _design(ts: np.ndarray) -> np.ndarray:
    return np.stack([1.0 - ts, ts], axis=1)


def residual_cost(ts, ys) -> tuple[float, np.ndarray, np.ndarray]:
    """Best line through timestamped points, in the (x0, x1) endpoint basis.

    Minimizes ``mean_i ||(1-t_i) x0 + t_i x1 - y_i||^2``.  With fewer than
    two distinct timestamps the normal equations are singular and the
    minimal-norm solution is returned.

    Returns:
        ``(cost, x0, x1)`` with ``cost`` the attained mean squared
        residual.
    """
    ts = np.asarray(ts, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float)
    if ys.ndim == 1:
        ys = ys[:, None]
    if ts.size != ys.shape[0] or ts.size == 0:
        raise ValueError("need one observation per timestamp")
    A = _design(ts)
    sol, *_ = np.linalg.lstsq(A, ys, rcond=None)
    resid = A @ sol - ys
    cost = float((resid**2).sum() / ts.size)
    return cost, sol[0].copy(), sol[1].copy()


def _worker_count() -> int:
    raw = os.environ.get("WREGRESS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _tuple_costs(
    ts: np.ndarray, supports: Sequence[np.ndarray], n_threads: int | None = None
):
    """Least-squares residual and fitted endpoints for every support tuple.

    Vectorized over the product of supports.  For a tuple ``y`` the fit is
    ``X = H A' y`` with ``H`` the pseudo-inverse of the normal matrix, and
    the residual reduces to ``(sum_i ||y_i||^2 - <H, R R'>)/N`` where
    ``R = A' y``.  Evaluation is chunked along axis 0 and may run on a
    small thread pool (capped by WREGRESS_THREADS).

    Returns:
        ``(cost, fits)`` shaped ``(*sizes,)`` and ``(*sizes, 2, d)``.
    """
    n = ts.size
    d = supports[0].shape[1]
    sizes = tuple(s.shape[0] for s in supports)
    A = _design(ts)
    G = A.T @ A
    H = np.linalg.pinv(G)
    coeff0, coeff1 = A[:, 0], A[:, 1]

    cost = np.zeros(sizes)
    fits = np.zeros(sizes + (2, d))

    def fill(lo: int, hi: int) -> None:
        block = (slice(lo, hi),)
        sub_sizes = (hi - lo,) + sizes[1:]
        r0 = np.zeros(sub_sizes + (d,))
        r1 = np.zeros(sub_sizes + (d,))
        sq = np.zeros(sub_sizes)
        for axis, support in enumerate(supports):
            pts = support[lo:hi] if axis == 0 else support
            shape = [1] * len(sizes) + [d]
            shape[axis] = pts.shape[0]
            pts_b = pts.reshape(shape)
            r0 += coeff0[axis] * pts_b
            r1 += coeff1[axis] * pts_b
            sq += (pts_b**2).sum(axis=-1)
        x0 = H[0, 0] * r0 + H[0, 1] * r1
        x1 = H[1, 0] * r0 + H[1, 1] * r1
        quad = (x0 * r0).sum(axis=-1) + (x1 * r1).sum(axis=-1)
        cost[block] = np.maximum(sq - quad, 0.0) / n
        fits[lo:hi, ..., 0, :] = x0
        fits[lo:hi, ..., 1, :] = x1

    workers = _worker_count() if n_threads is None else max(1, n_threads)
    if workers == 1 or sizes[0] == 1:
        fill(0, sizes[0])
    else:
        workers = min(workers, sizes[0])
        bounds = np.linspace(0, sizes[0], workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda se: fill(*se), zip(bounds[:-1], bounds[1:])))
    return cost, fits


def fit_regression(
    dataset: TimedDataset,
    solver: str = "exact",
    epsilon: float | None = None,
    constraints: Sequence[tuple[int, int, np.ndarray]] = (),
    tol: float = 1e-8,
    max_iter: int = 10**5,
    size_cap: int = DEFAULT_SIZE_CAP,
) -> RegressionResult:
    """Fit an endpoint law to timestamped discrete measures.

    Args:
        dataset: observations; needs two distinct timestamps.
        solver: ``"exact"`` (transportation LP) or ``"entropic"``
            (Bregman projections; requires ``epsilon``).
        epsilon: entropic regularization strength.
        constraints: optional ``(i, j, joint)`` triples pinning the joint
            distribution of observations i and j (their correlation).
        tol, max_iter: entropic stopping parameters.
        size_cap: maximum number of plan-tensor entries.

    Returns:
        :class:`RegressionResult`.  With the exact solver ``cost`` equals
        the objective of the returned law; with pairwise constraints or
        entropic smoothing it is an upper bound for it.
    """
    ts = dataset.timestamps
    if np.unique(ts).size < 2:
        raise DegenerateTimestampsError(
            "regression needs at least two distinct timestamps"
        )
    supports = [m.points for m in dataset.measures]
    sizes = [s.shape[0] for s in supports]
    total = int(np.prod(sizes))
    if total > size_cap:
        raise SizeCapError(f"plan tensor would hold {total} entries, cap is {size_cap}")

    spec = MarginalSpec(
        [(m.points, m.weights) for m in dataset.measures],
        [(int(i), int(j), np.asarray(joint, dtype=float)) for i, j, joint in constraints],
    )
    cost, fits = _tuple_costs(ts, supports)

    if solver == "exact":
        plan, value = solve_mm_exact(cost, spec, size_cap=size_cap)
        iterations, converged = None, True
    elif solver == "entropic":
        if epsilon is None:
            raise ValueError("entropic solver requires epsilon")
        plan, value, iterations, converged = solve_mm_entropic(
            cost, spec, epsilon=epsilon, tol=tol, max_iter=max_iter, size_cap=size_cap
        )
    else:
        raise ValueError(f"unknown solver {solver!r}")

    law = _law_from_plan(plan.tensor, fits)
    return RegressionResult(
        law=law,
        cost=float(value),
        plan=plan,
        ls_map=fits,
        solver=solver,
        iterations=iterations,
        converged=converged,
    )


def _law_from_plan(tensor: np.ndarray, fits: np.ndarray) -> EndpointLaw:
    """Endpoint law supported on the fitted pairs of nonzero plan entries."""
    d = fits.shape[-1]
    w = tensor.ravel()
    flat_fits = fits.reshape(-1, 2 * d)
    nz = w > 0.0
    pairs, weights = merge_atoms(flat_fits[nz], w[nz])
    weights = weights / weights.sum()
    return EndpointLaw.discrete(pairs[:, :d], pairs[:, d:], weights)


def regression_objective(law: EndpointLaw, dataset: TimedDataset) -> float:
    """Average squared Wasserstein distance from the law's one-time
    marginals to the observed measures."""
    if not law.is_discrete:
        raise ValueError("regression objective needs a discrete endpoint law")
    if law.dim != dataset.dim:
        raise DimensionError(
            f"law dimension {law.dim} does not match dataset dimension {dataset.dim}"
        )
    total = 0.0
    for t, measure in dataset.entries:
        total += w2_discrete(pushforward_line(law, t), measure)[0]
    return total / len(dataset)


def displacement_interpolate(a: EndpointLaw, b: EndpointLaw, s: float) -> EndpointLaw:
    """Displacement interpolation between two discrete endpoint laws.

    The laws are coupled optimally as measures on pair space and each
    matched pair of atoms is interpolated linearly; ``s=0`` returns ``a``
    and ``s=1`` returns ``b``.
    """
    if not (a.is_discrete and b.is_discrete):
        raise ValueError("displacement interpolation needs discrete endpoint laws")
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if not (0.0 <= s <= 1.0):
        raise RangeError(f"interpolation parameter must lie in [0, 1], got {s}")
    pa = DiscreteMeasure(a.pairs(), a.weights)
    pb = DiscreteMeasure(b.pairs(), b.weights)
    _, coupling = w2_discrete(pa, pb)
    i, j = np.nonzero(coupling.matrix)
    w = coupling.matrix[i, j]
    pts = (1.0 - s) * coupling.row_support[i] + s * coupling.col_support[j]
    merged_pts, merged_w = merge_atoms(pts, w)
    merged_w = merged_w / merged_w.sum()
    d = a.dim
    return EndpointLaw.discrete(merged_pts[:, :d], merged_pts[:, d:], merged_w)


def nonconvexity_probe(
    a: EndpointLaw, b: EndpointLaw, dataset: TimedDataset, grid_size: int
) -> tuple[list[tuple[float, float]], bool]:
    """Objective values along the displacement interpolation from a to b.

    Evaluates the regression objective on a uniform parameter grid and
    runs a midpoint-convexity test on interior points; ``is_convex`` is
    False exactly when some midpoint exceeds its neighbors' average by
    more than 1e-9.
    """
    if grid_size < 3:
        raise RangeError(f"grid size must be at least 3, got {grid_size}")
    grid = np.linspace(0.0, 1.0, grid_size)
    values = [
        (float(s), regression_objective(displacement_interpolate(a, b, s), dataset))
        for s in grid
    ]
    is_convex = True
    for k in range(1, grid_size - 1):
        if values[k][1] > 0.5 * (values[k - 1][1] + values[k + 1][1]) + 1e-9:
            is_convex = False
            break
    return values, is_convex


def nonconvexity_example() -> tuple[EndpointLaw, EndpointLaw, TimedDataset]:
    """Built-in pair of endpoint laws (plus a one-measure dataset) whose
    objective along displacement interpolation equals
    ``min(2.5 s^2, 2.5 s^2 - 3 s + 1)`` and is therefore not convex."""
    a = EndpointLaw.discrete([[0.0], [3.0]], [[1.0], [2.0]], [0.5, 0.5])
    b = EndpointLaw.discrete([[0.0], [-3.0]], [[0.0], [2.0]], [0.5, 0.5])
    target = DiscreteMeasure([[1.0], [2.0]], [0.5, 0.5])
    dataset = TimedDataset([(1.0, target)])
    return a, b, dataset


def _gaussian_log_density(mean: np.ndarray, cov: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Log density of a (possibly singular) Gaussian, on its support."""
    vals, vecs = np.linalg.eigh(cov)
    cutoff = 1e-12 * max(vals.max(), 1.0)
    pos = vals > cutoff
    rank = int(pos.sum())
    r = (x - mean) @ vecs[:, pos]
    quad = (r**2 / vals[pos]).sum(axis=-1)
    log_det = np.log(vals[pos]).sum()
    return -0.5 * (quad + rank * np.log(2.0 * np.pi) + log_det)


def sample_paths(law: EndpointLaw, n: int, seed: int) -> SampledPaths:
    """Draw endpoint pairs i.i.d. from a law.

    Discrete laws report the sampled atom's weight as the likelihood;
    Gaussian laws report the density at the drawn pair.  Output is a
    deterministic function of the seed.
    """
    if n < 1:
        raise RangeError(f"need at least one sample, got {n}")
    rng = np.random.default_rng(seed)
    if law.is_discrete:
        idx = rng.choice(law.n_atoms, size=n, p=law.weights)
        return SampledPaths(law.x0[idx], law.x1[idx], law.weights[idx])
    draws = rng.multivariate_normal(law.mean, law.covariance, size=n, check_valid="ignore")
    like = np.exp(_gaussian_log_density(law.mean, law.covariance, draws))
    d = law.dim
    return SampledPaths(draws[:, :d], draws[:, d:], like)


def ac_bound_check(law: EndpointLaw, grid) -> float:
    """Worst ratio of curve speed to the mean-squared-displacement bound.

    For consecutive grid times s < t, compares the Wasserstein distance
    between the one-time marginals to ``(t - s) * sqrt(c)`` where ``c`` is
    the law's mean squared segment length; the ratio never exceeds 1 (up
    to numerical noise).  A law with x0 = x1 a.s. gives 0.
    """
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size < 2:
        raise RangeError("grid needs at least two points")
    if not (np.diff(grid) > 0).all():
        raise RangeError("grid must be strictly increasing")
    c = law.squared_speed()
    if c <= 1e-30:
        return 0.0
    marginals = [pushforward_line(law, t) for t in grid]
    worst = 0.0
    for k in range(grid.size - 1):
        ga, gb = marginals[k], marginals[k + 1]
        if isinstance(ga, GaussianMeasure):
            dist_sq = w2_gaussian(ga, gb)
        else:
            dist_sq, _ = w2_discrete(ga, gb)
        ratio = np.sqrt(dist_sq) / ((grid[k + 1] - grid[k]) * np.sqrt(c))
        worst = max(worst, float(ratio))
    return worst
