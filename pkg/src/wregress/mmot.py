"""Multimarginal optimal-transport solvers over dense coupling tensors.

Two routes are provided for the same problem: an exact linear program
(:func:`solve_mm_exact`) and entropically regularized iterative Bregman
projections run in the log domain (:func:`solve_mm_entropic`).  Both
accept optional pairwise-marginal constraints in addition to the per-axis
marginals.

Plans are stored as dense nonnegative tensors with one index per axis; a
configurable cap (default 10^6 entries) guards against accidental blowup.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.special import logsumexp

from .errors import InfeasibleError, NumericalError, RangeError, SizeCapError
from .measures import _as_points, _readonly

__all__ = [
    "MarginalSpec",
    "MultimarginalPlan",
    "EntropicResult",
    "solve_mm_exact",
    "solve_mm_entropic",
    "mm_marginal",
    "DEFAULT_SIZE_CAP",
]

DEFAULT_SIZE_CAP = 10**6
PAIRWISE_TOL = 1e-9
AXIS_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class MarginalSpec:
    """Marginal data for a multimarginal problem.

    Args:
        axes: one ``(support, weights)`` pair per axis; supports are
            (n, d) point arrays kept for downstream reconstruction,
            weights are probability vectors.
        pairwise_constraints: optional ``(axis_a, axis_b, joint)`` triples
            pinning the joint distribution of two axes; each joint matrix
            must have row/column sums equal to the two axes' weights.
    """

    axes: tuple
    pairwise_constraints: tuple = ()

    def __init__(self, axes, pairwise_constraints=()):
        clean_axes = []
        for support, weights in axes:
            pts = _as_points(support)
            w = np.asarray(weights, dtype=float).ravel()
            if pts.shape[0] != w.size:
                raise ValueError("support and weights lengths differ")
            if (w < 0).any():
                raise ValueError("negative axis weight")
            if abs(w.sum() - 1.0) > AXIS_WEIGHT_TOL:
                raise ValueError(f"axis weights sum to {w.sum()!r}, expected 1")
            clean_axes.append((_readonly(pts), _readonly(w)))
        clean_pairs = []
        for a, b, joint in pairwise_constraints:
            a, b = int(a), int(b)
            if not (0 <= a < len(clean_axes)) or not (0 <= b < len(clean_axes)) or a == b:
                raise RangeError(f"invalid pairwise axes ({a}, {b})")
            j = np.asarray(joint, dtype=float)
            wa, wb = clean_axes[a][1], clean_axes[b][1]
            if j.shape != (wa.size, wb.size):
                raise ValueError(f"joint for axes ({a}, {b}) has shape {j.shape}")
            if j.min() < 0:
                raise ValueError("negative entry in pairwise joint")
            if np.abs(j.sum(axis=1) - wa).max() > PAIRWISE_TOL:
                raise ValueError(f"joint row sums do not match axis {a} weights")
            if np.abs(j.sum(axis=0) - wb).max() > PAIRWISE_TOL:
                raise ValueError(f"joint column sums do not match axis {b} weights")
            clean_pairs.append((a, b, _readonly(j)))
        object.__setattr__(self, "axes", tuple(clean_axes))
        object.__setattr__(self, "pairwise_constraints", tuple(clean_pairs))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(w.size for _, w in self.axes)

    @property
    def n_axes(self) -> int:
        return len(self.axes)

    def weights(self, axis: int) -> np.ndarray:
        return self.axes[axis][1]

    def support(self, axis: int) -> np.ndarray:
        return self.axes[axis][0]


@dataclass(frozen=True)
class MultimarginalPlan:
    """Dense nonnegative coupling tensor with its axis supports."""

    tensor: np.ndarray
    axes: tuple

    def __init__(self, tensor, axes):
        t = np.asarray(tensor, dtype=float)
        sizes = tuple(np.asarray(w, dtype=float).size for _, w in axes)
        if t.shape != sizes:
            raise ValueError(f"tensor shape {t.shape} does not match axes {sizes}")
        if t.min() < 0:
            raise ValueError(f"negative plan entry: {t.min()}")
        if not np.isfinite(t).all():
            raise NumericalError("non-finite plan entry")
        object.__setattr__(self, "tensor", _readonly(t))
        object.__setattr__(self, "axes", tuple((_readonly(_as_points(s)), _readonly(np.asarray(w, float))) for s, w in axes))

    @property
    def sizes(self) -> tuple[int, ...]:
        return self.tensor.shape

    @property
    def n_axes(self) -> int:
        return self.tensor.ndim

    def total_mass(self) -> float:
        return float(self.tensor.sum())

    def max_marginal_violation(self, spec: MarginalSpec) -> float:
        """Largest absolute deviation from any declared marginal."""
        worst = 0.0
        for a in range(self.n_axes):
            got = mm_marginal(self, [a])
            worst = max(worst, float(np.abs(got - spec.weights(a)).max()))
        for a, b, joint in spec.pairwise_constraints:
            got = mm_marginal(self, [a, b])
            worst = max(worst, float(np.abs(got - joint).max()))
        return worst


class EntropicResult(NamedTuple):
    plan: MultimarginalPlan
    value: float
    iterations: int
    converged: bool


def _cost_tensor(cost, sizes: tuple[int, ...]) -> np.ndarray:
    """Materialize the cost over the product of supports.

    ``cost`` may be a dense array of shape ``sizes`` or a callable taking
    one index tuple and returning a float.
    """
    if callable(cost):
        out = np.empty(sizes)
        for idx in np.ndindex(*sizes):
            out[idx] = cost(idx)
    else:
        out = np.asarray(cost, dtype=float)
        if out.shape != tuple(sizes):
            raise ValueError(f"cost tensor shape {out.shape}, expected {tuple(sizes)}")
    if not np.isfinite(out).all():
        raise ValueError("cost values must be finite")
    return out


def _check_cap(sizes: Sequence[int], size_cap: int) -> int:
    total = 1
    for n in sizes:
        total *= int(n)
    if total > size_cap:
        raise SizeCapError(
            f"plan tensor would hold {total} entries, cap is {size_cap}"
        )
    return total


def _axis_index_of_flat(sizes: Sequence[int], axis: int) -> np.ndarray:
    """Index along ``axis`` for every flattened tensor entry (C order)."""
    total = int(np.prod(sizes))
    stride = int(np.prod(sizes[axis + 1:])) if axis + 1 < len(sizes) else 1
    return (np.arange(total) // stride) % sizes[axis]


def solve_mm_exact(
    cost: Callable | np.ndarray,
    spec: MarginalSpec,
    size_cap: int = DEFAULT_SIZE_CAP,
) -> tuple[MultimarginalPlan, float]:
    """Exact multimarginal transport via the transportation linear program.

    One variable per tensor entry, one equality row per marginal atom and
    per pairwise joint entry; solved with HiGHS.  Zero-weight atoms are
    pruned before assembly and restored (with zero mass) afterwards.

    Returns:
        ``(plan, value)``: an exact optimizer and the optimal cost.
        Optimal plans are generally non-unique; compare values.
    """
    sizes = spec.sizes
    total = _check_cap(sizes, size_cap)
    c = _cost_tensor(cost, sizes)

    keep = [w > 0.0 for _, w in spec.axes]
    pruned = any(not k.all() for k in keep)
    if pruned:
        sub_axes = [(s[k], w[k]) for (s, w), k in zip(spec.axes, keep)]
        sub_pairs = [
            (a, b, j[np.ix_(keep[a], keep[b])]) for a, b, j in spec.pairwise_constraints
        ]
        sub_spec = MarginalSpec(sub_axes, sub_pairs)
        sub_cost = c[np.ix_(*[np.flatnonzero(k) for k in keep])]
        sub_plan, value = solve_mm_exact(sub_cost, sub_spec, size_cap)
        tensor = np.zeros(sizes)
        tensor[np.ix_(*[np.flatnonzero(k) for k in keep])] = sub_plan.tensor
        return MultimarginalPlan(tensor, spec.axes), value

    rows, cols, b_parts = [], [], []
    offset = 0
    flat = np.arange(total)
    for a in range(spec.n_axes):
        idx = _axis_index_of_flat(sizes, a)
        rows.append(offset + idx)
        cols.append(flat)
        b_parts.append(spec.weights(a))
        offset += sizes[a]
    for a, b, joint in spec.pairwise_constraints:
        ia = _axis_index_of_flat(sizes, a)
        ib = _axis_index_of_flat(sizes, b)
        rows.append(offset + ia * sizes[b] + ib)
        cols.append(flat)
        b_parts.append(joint.ravel())
        offset += sizes[a] * sizes[b]
    A_eq = sp.coo_matrix(
        (np.ones(sum(r.size for r in rows)), (np.concatenate(rows), np.concatenate(cols))),
        shape=(offset, total),
    ).tocsr()
    res = linprog(
        c.ravel(),
        A_eq=A_eq,
        b_eq=np.concatenate(b_parts),
        bounds=(0, None),
        method="highs",
        options={
            "presolve": True,
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if res.status == 2:
        raise InfeasibleError("marginal/pairwise constraints admit no plan")
    if res.status != 0:
        raise RuntimeError(f"multimarginal LP failed: {res.message}")
    tensor = np.maximum(res.x.reshape(sizes), 0.0)
    value = float(tensor.ravel() @ c.ravel())
    return MultimarginalPlan(tensor, spec.axes), value


def solve_mm_entropic(
    cost: Callable | np.ndarray,
    spec: MarginalSpec,
    epsilon: float,
    tol: float = 1e-8,
    max_iter: int = 10**5,
    size_cap: int = DEFAULT_SIZE_CAP,
) -> EntropicResult:
    """Entropically regularized plan via cyclic Bregman projections.

    Starts from ``exp(-cost / epsilon)`` and alternately projects (in KL
    geometry) onto each axis-marginal affine set and each pairwise set,
    carrying log-domain scaling fields for numerical stability.  Stops
    once every declared marginal is met within ``tol`` (max absolute
    violation) or after ``max_iter`` cycles; non-convergence is reported
    through the ``converged`` flag rather than an error.

    Returns:
        :class:`EntropicResult` with the plan, its unregularized cost
        ``sum(cost * plan)``, the number of completed cycles, and the
        convergence flag.
    """
    if epsilon <= 0:
        raise RangeError(f"epsilon must be positive, got {epsilon}")
    if tol <= 0:
        raise RangeError(f"tol must be positive, got {tol}")
    sizes = spec.sizes
    _check_cap(sizes, size_cap)
    c = _cost_tensor(cost, sizes)
    n_axes = spec.n_axes

    with np.errstate(divide="ignore"):
        log_w = [np.log(spec.weights(a)) for a in range(n_axes)]
        log_joints = [np.log(j) for _, _, j in spec.pairwise_constraints]

    log_plan = -c / epsilon
    # normalize so the tensor starts at total mass 1 (pure rescaling)
    log_plan -= logsumexp(log_plan)

    def project_axis(a: int) -> None:
        nonlocal log_plan
        other = tuple(i for i in range(n_axes) if i != a)
        log_m = logsumexp(log_plan, axis=other)
        delta = log_w[a] - log_m
        # -inf - -inf (axis weight 0 and marginal 0) pins the slice at 0
        delta = np.where(np.isneginf(log_w[a]), -np.inf, delta)
        if np.isposinf(delta).any() or np.isnan(delta[~np.isneginf(delta)]).any():
            raise NumericalError(
                f"axis {a} marginal vanished on atoms carrying mass; "
                "constraints are likely infeasible at this support"
            )
        shape = [1] * n_axes
        shape[a] = sizes[a]
        log_plan += delta.reshape(shape)

    def project_pair(k: int) -> None:
        nonlocal log_plan
        a, b, _ = spec.pairwise_constraints[k]
        other = tuple(i for i in range(n_axes) if i not in (a, b))
        log_m = logsumexp(log_plan, axis=other)
        if a > b:
            log_m = log_m.T
        delta = log_joints[k] - log_m
        delta = np.where(np.isneginf(log_joints[k]), -np.inf, delta)
        if np.isposinf(delta).any() or np.isnan(delta[~np.isneginf(delta)]).any():
            raise NumericalError(
                f"pairwise marginal ({a}, {b}) vanished on entries carrying "
                "mass; constraints are likely infeasible at this support"
            )
        shape = [1] * n_axes
        shape[a] = sizes[a]
        shape[b] = sizes[b]
        log_plan += delta.reshape(shape) if a < b else delta.T.reshape(shape)

    def max_violation() -> float:
        plan = np.exp(log_plan)
        worst = 0.0
        for a in range(n_axes):
            other = tuple(i for i in range(n_axes) if i != a)
            worst = max(worst, float(np.abs(plan.sum(axis=other) - spec.weights(a)).max()))
        for a, b, joint in spec.pairwise_constraints:
            other = tuple(i for i in range(n_axes) if i not in (a, b))
            got = plan.sum(axis=other)
            if a > b:
                got = got.T
            worst = max(worst, float(np.abs(got - joint).max()))
        return worst

    iterations = 0
    converged = False
    for cycle in range(1, max_iter + 1):
        for a in range(n_axes):
            project_axis(a)
        for k in range(len(spec.pairwise_constraints)):
            project_pair(k)
        iterations = cycle
        if max_violation() < tol:
            converged = True
            break

    tensor = np.exp(log_plan)
    value = float((tensor * c).sum())
    plan = MultimarginalPlan(tensor, spec.axes)
    return EntropicResult(plan, value, iterations, converged)


def mm_marginal(plan: MultimarginalPlan, axes: Sequence[int]) -> np.ndarray:
    """Marginal of a plan onto the selected axes, in the order given."""
    axes = [int(a) for a in axes]
    if len(set(axes)) != len(axes):
        raise RangeError(f"marginal axes must be distinct, got {axes}")
    for a in axes:
        if not (0 <= a < plan.n_axes):
            raise RangeError(f"axis {a} out of range for {plan.n_axes}-axis plan")
    other = tuple(i for i in range(plan.n_axes) if i not in axes)
    summed = plan.tensor.sum(axis=other) if other else plan.tensor
    # summed axes appear in increasing axis order; reorder as requested
    order = np.argsort(np.argsort(axes))
    return np.ascontiguousarray(np.transpose(summed, order))
