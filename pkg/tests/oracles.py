"""Independent oracles used by the test suite.

Everything here deliberately avoids the library's own solver paths: the
multimarginal optimum is recomputed by exhaustive enumeration of
transportation-polytope vertices, least-squares fits by explicit normal
equations or grid search, and the Gaussian curve fit by a refined
3-parameter grid.  Keep it that way; these are the reference values the
solvers are judged against.
"""

from __future__ import annotations

import itertools

import numpy as np


def _reduced_constraint_rows(sizes):
    """Independent equality rows of the axis-marginal system.

    One row per atom, dropping the last atom of every axis except the
    first (those rows are implied by the shared total mass).
    """
    n_axes = len(sizes)
    total = int(np.prod(sizes))
    flat = np.arange(total)
    rows = []
    for a in range(n_axes):
        stride = int(np.prod(sizes[a + 1:])) if a + 1 < n_axes else 1
        idx = (flat // stride) % sizes[a]
        keep = sizes[a] if a == 0 else sizes[a] - 1
        for i in range(keep):
            rows.append((idx == i).astype(float))
    return np.array(rows)


def mm_bruteforce_value(sizes, weights, cost_tensor, chunk=40000):
    """Exact multimarginal optimum by enumerating all polytope vertices.

    Every vertex of the transportation polytope is a basic solution of the
    reduced equality system, so enumerating all invertible column bases
    and keeping the feasible ones covers every extreme point.  Returns the
    minimum cost over those vertices.
    """
    sizes = tuple(int(n) for n in sizes)
    A = _reduced_constraint_rows(sizes)
    b = []
    for a, w in enumerate(weights):
        w = np.asarray(w, dtype=float)
        b.extend(w if a == 0 else w[:-1])
    b = np.asarray(b)
    rank, total = A.shape
    c = np.asarray(cost_tensor, dtype=float).ravel()
    combos = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(total), rank)),
        dtype=np.int64,
    ).reshape(-1, rank)
    best = np.inf
    for lo in range(0, combos.shape[0], chunk):
        sub = combos[lo:lo + chunk]
        bases = np.moveaxis(A[:, sub], 1, 0)  # (m, rank, rank)
        ok = np.abs(np.linalg.det(bases)) > 1e-9
        if not ok.any():
            continue
        rhs = np.broadcast_to(b[:, None], (int(ok.sum()), rank, 1)).copy()
        sol = np.linalg.solve(bases[ok], rhs)[:, :, 0]
        feas = (sol >= -1e-9).all(axis=1)
        if not feas.any():
            continue
        vals = (np.maximum(sol[feas], 0.0) * c[sub[ok][feas]]).sum(axis=1)
        best = min(best, float(vals.min()))
    return best


def random_feasible_plan(sizes, weights, rng, cycles=400):
    """Feasible plan from Sinkhorn-style rescaling of a random tensor.

    Multiplicative marginal fitting of a positive random tensor converges
    to a plan with the prescribed axis marginals; used to generate
    feasible competitors for optimality certificates.
    """
    sizes = tuple(int(n) for n in sizes)
    t = rng.random(sizes) + 0.1
    n_axes = len(sizes)
    for _ in range(cycles):
        for a in range(n_axes):
            other = tuple(i for i in range(n_axes) if i != a)
            marg = t.sum(axis=other)
            scale = np.asarray(weights[a]) / marg
            shape = [1] * n_axes
            shape[a] = sizes[a]
            t = t * scale.reshape(shape)
    return t


def euclidean_ls_line(ts, ys):
    """Closed-form least-squares line via explicit normal equations.

    Fits ``y ~ (1-t) x0 + t x1``; returns ``(x0, x1, mean_residual)``.
    Uses a direct 2x2 solve, independent of numpy's lstsq path.
    """
    ts = np.asarray(ts, dtype=float)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[0] != ts.size:
        ys = ys.T
    A = np.stack([1.0 - ts, ts], axis=1)
    G = A.T @ A
    rhs = A.T @ ys
    sol = np.linalg.solve(G, rhs)
    resid = A @ sol - ys
    return sol[0], sol[1], float((resid**2).sum() / ts.size)


def ls_grid_search(ts, ys, lo=-3.0, hi=3.0, n=241):
    """Brute-force the scalar line fit over an (x0, x1) grid."""
    ts = np.asarray(ts, dtype=float)
    ys = np.asarray(ys, dtype=float).ravel()
    grid = np.linspace(lo, hi, n)
    x0g, x1g = np.meshgrid(grid, grid, indexing="ij")
    pred = (1.0 - ts)[None, None, :] * x0g[..., None] + ts[None, None, :] * x1g[..., None]
    cost = ((pred - ys[None, None, :]) ** 2).mean(axis=2)
    k = np.unravel_index(np.argmin(cost), cost.shape)
    return float(cost[k]), float(grid[k[0]]), float(grid[k[1]])


def gaussian_1d_curve_cost(ts, stds, sig0, sig1, rho):
    """Fit cost of the relaxed 1D Gaussian curve with endpoint stds and
    endpoint correlation rho (all arrays broadcast)."""
    ts = np.asarray(ts, dtype=float)
    stds = np.asarray(stds, dtype=float)
    var = (
        ((1.0 - ts) * sig0[..., None]) ** 2
        + (ts * sig1[..., None]) ** 2
        + 2.0 * ts * (1.0 - ts) * (rho * sig0 * sig1)[..., None]
    )
    return ((np.sqrt(np.maximum(var, 0.0)) - stds) ** 2).mean(axis=-1)


def sdp_grid_oracle(ts, stds, rounds=4, n=41):
    """Global minimum of the relaxed Gaussian curve fit by refined grid
    search over (sigma0, sigma1, rho)."""
    stds = np.asarray(stds, dtype=float)
    s_lo, s_hi = 0.0, 2.0 * float(stds.max()) + 1e-6
    r_lo, r_hi = -1.0, 1.0
    best = None
    for _ in range(rounds):
        s0 = np.linspace(s_lo, s_hi, n)
        s1 = np.linspace(s_lo, s_hi, n)
        rho = np.linspace(max(r_lo, -1.0), min(r_hi, 1.0), n)
        g0, g1, gr = np.meshgrid(s0, s1, rho, indexing="ij")
        cost = gaussian_1d_curve_cost(ts, stds, g0, g1, gr)
        k = np.unravel_index(np.argmin(cost), cost.shape)
        best = (float(cost[k]), float(g0[k]), float(g1[k]), float(gr[k]))
        ds = (s_hi - s_lo) / (n - 1)
        dr = (r_hi - r_lo) / (n - 1)
        s_lo, s_hi = max(0.0, best[1] - 2 * ds), best[1] + 2 * ds
        s1_lo, s1_hi = max(0.0, best[2] - 2 * ds), best[2] + 2 * ds
        # keep a single box covering both std parameters
        s_lo, s_hi = min(s_lo, s1_lo), max(s_hi, s1_hi)
        r_lo, r_hi = best[3] - 2 * dr, best[3] + 2 * dr
    return best[0]


def first_pca_axis(points):
    """Leading principal axis of a point cloud (unit vector, sign-fixed)."""
    pts = np.asarray(points, dtype=float)
    centered = pts - pts.mean(axis=0)
    vals, vecs = np.linalg.eigh(centered.T @ centered)
    axis = vecs[:, -1]
    pivot = np.argmax(np.abs(axis))
    return axis * np.sign(axis[pivot])
