"""First principal component for families of discrete measures.

The principal line segment minimizes the average squared Wasserstein
distance from each measure to its best point on the segment, with the
projection times free (and unbounded).  Coordinate descent alternates an
exact plan solve at fixed times (reusing the regression reduction) with a
closed-form time update; each half-step can only lower the objective, and
non-improving steps are rejected outright so the recorded trace is
monotone to the last bit.  Global optimality is not guaranteed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateTimestampsError
from .measures import DiscreteMeasure, EndpointLaw
from .mmot import DEFAULT_SIZE_CAP, MultimarginalPlan
from .regression import RegressionResult, TimedDataset, fit_regression

__all__ = ["PCAState", "update_times", "fit_pca", "pca_objective"]

_DEGENERATE_DENOM = 1e-14
_DISTINCT_TIME_TOL = 1e-12


@dataclass(frozen=True)
class PCAState:
    """Converged (or truncated) coordinate-descent state.

    ``times`` holds one projection parameter per measure, unconstrained in
    sign; ``trace`` records the objective after every accepted half-step,
    non-increasing by construction.
    """

    times: np.ndarray
    plan: MultimarginalPlan
    law: EndpointLaw
    objective: float
    iteration: int
    fit: RegressionResult
    trace: tuple
    converged: bool = True


def _plan_weighted_objective(
    fit: RegressionResult, measures: Sequence[DiscreteMeasure], times: np.ndarray
) -> float:
    """Average plan-weighted squared residual of the stored per-tuple
    lines against the measures, at the given times."""
    tensor = fit.plan.tensor
    x0 = fit.ls_map[..., 0, :]
    x1 = fit.ls_map[..., 1, :]
    n_axes = tensor.ndim
    total = 0.0
    for i, (t, measure) in enumerate(zip(times, measures)):
        point = (1.0 - t) * x0 + t * x1
        shape = [1] * n_axes + [measure.points.shape[1]]
        shape[i] = measure.points.shape[0]
        diff = point - measure.points.reshape(shape)
        total += float((tensor * (diff**2).sum(axis=-1)).sum())
    return total / len(measures)


def update_times(fit: RegressionResult, measures: Sequence[DiscreteMeasure]) -> np.ndarray:
    """Optimal projection times for each measure at a fixed plan.

    For measure i the minimizer is the plan-weighted projection
    coefficient ``E<y_i - x0, x1 - x0> / E||x1 - x0||^2`` with the
    expectations taken over the plan joined with its per-tuple line fits;
    a vanishing denominator (all lines degenerate to points) maps to 0.
    """
    tensor = fit.plan.tensor
    x0 = fit.ls_map[..., 0, :]
    x1 = fit.ls_map[..., 1, :]
    diff = x1 - x0
    denom = float((tensor * (diff**2).sum(axis=-1)).sum())
    if denom < _DEGENERATE_DENOM:
        return np.zeros(len(measures))
    n_axes = tensor.ndim
    base = float((tensor * (x0 * diff).sum(axis=-1)).sum())
    times = np.empty(len(measures))
    weighted_diff = tensor[..., None] * diff
    for i, measure in enumerate(measures):
        other = tuple(a for a in range(n_axes) if a != i)
        # E<y_i, x1 - x0>: reduce the plan-weighted direction onto axis i
        reduced = weighted_diff.sum(axis=other)
        times[i] = (float((reduced * measure.points).sum()) - base) / denom
    return times


def fit_pca(
    measures: Sequence[DiscreteMeasure],
    init: Sequence[float] | None = None,
    tol: float = 1e-10,
    max_iter: int = 100,
    solver: str = "exact",
    epsilon: float | None = None,
    size_cap: int = DEFAULT_SIZE_CAP,
) -> PCAState:
    """Fit the first principal line segment to a family of measures.

    Args:
        measures: at least two discrete measures of one dimension.
        init: optional starting times (one per measure).  The default
            projects the measure means onto their leading principal axis
            and rescales affinely to [0, 1].
        tol: stop when a full sweep improves the objective by less than
            this.
        max_iter: maximum number of sweeps; hitting it sets
            ``converged=False`` rather than raising.
        solver, epsilon, size_cap: passed through to the plan solve.

    Returns:
        :class:`PCAState` with the fitted law, final times, and the
        monotone objective trace.
    """
    measures = list(measures)
    if len(measures) < 2:
        raise ValueError("PCA needs at least two measures")
    if init is not None:
        times = np.asarray(init, dtype=float).ravel()
        if times.size != len(measures):
            raise ValueError("init must supply one time per measure")
    else:
        times = _default_times(measures)

    trace: list[float] = []
    state_fit = None
    objective = np.inf
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        if np.unique(np.round(times / max(np.abs(times).max(), 1.0), 12)).size < 2:
            # collapsed times: the line fit is unidentifiable, nothing to
            # improve by re-solving
            converged = True
            sweeps -= 1
            break
        dataset = TimedDataset(list(zip(times, measures)))
        new_fit = fit_regression(
            dataset, solver=solver, epsilon=epsilon, size_cap=size_cap
        )
        if new_fit.cost > objective:
            # the solve could not improve on the incumbent (solver noise);
            # keep the previous state
            converged = True
            sweeps -= 1
            break
        improvement_plan = objective - new_fit.cost
        state_fit = new_fit
        objective = new_fit.cost
        trace.append(objective)

        new_times = update_times(state_fit, measures)
        new_objective = _plan_weighted_objective(state_fit, measures, new_times)
        if new_objective > objective:
            trace.append(objective)
            converged = True
            break
        times = new_times
        prev_objective = objective
        objective = new_objective
        trace.append(objective)
        if sweeps > 1 and improvement_plan + (prev_objective - objective) < tol:
            converged = True
            break

    if state_fit is None:
        # times were degenerate from the start; fall back to a plan solve
        # at two artificial timestamps so the state is well-formed
        raise DegenerateTimestampsError(
            "initial times are all identical; provide a spread init"
        )
    return PCAState(
        times=times,
        plan=state_fit.plan,
        law=state_fit.law,
        objective=float(objective),
        iteration=sweeps,
        fit=state_fit,
        trace=tuple(trace),
        converged=converged,
    )


def _default_times(measures: Sequence[DiscreteMeasure]) -> np.ndarray:
    """Project measure means on their leading principal axis, rescaled
    affinely to [0, 1]; exact for point masses strung along a line."""
    means = np.stack([m.mean() for m in measures])
    centered = means - means.mean(axis=0)
    _, vecs = np.linalg.eigh(centered.T @ centered)
    axis = vecs[:, -1]
    pivot = int(np.argmax(np.abs(axis)))
    axis = axis * np.sign(axis[pivot]) if axis[pivot] != 0 else axis
    proj = centered @ axis
    span = proj.max() - proj.min()
    if span < _DISTINCT_TIME_TOL:
        # identical means: spread times evenly so the first solve is
        # well-posed
        return np.linspace(0.0, 1.0, len(measures))
    return (proj - proj.min()) / span


def pca_objective(state: PCAState, measures: Sequence[DiscreteMeasure]) -> float:
    """Objective of a state's plan with the times re-optimized.

    Evaluates the plan-weighted squared residual at the optimal times for
    the stored plan, i.e. the inner minimum of the PCA objective given the
    plan; equals ``state.objective`` at convergence.
    """
    times = update_times(state.fit, measures)
    return _plan_weighted_objective(state.fit, measures, times)
