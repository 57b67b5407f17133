"""Tests for the Gaussian pipeline: mean regression, the joint-covariance
solve, curve reconstruction, and the 1D geodesic baseline."""

from __future__ import annotations

import numpy as np
import pytest

from oracles import sdp_grid_oracle
from wregress.errors import DegenerateTimestampsError, DimensionError
from wregress.gaussian import (
    GaussianCurve,
    GaussianDataset,
    JointCovariance,
    build_sdp,
    fit_geodesic_1d,
    fit_means,
    gaussian_curve,
    solve_sdp,
    synthetic_variance_dataset,
)
from wregress.measures import GaussianMeasure, w2_gaussian


def dataset_1d(ts, variances, means=None):
    means = [0.0] * len(ts) if means is None else means
    return GaussianDataset(
        [
            (t, GaussianMeasure([m], [[v]]))
            for t, v, m in zip(ts, variances, means)
        ]
    )


def objective_matrix_oracle(ts, d):
    """Second-moment expansion of the mean squared line residual.

    Builds ``mean_i outer(a_i, a_i) (x) I_d`` with ``a_i`` the coefficient
    vector of ``(1-t_i) x0 + t_i x1 - y_i`` over the stacked variables,
    then drops the constant data-diagonal blocks.
    """
    ts = np.asarray(ts, dtype=float)
    n = ts.size
    q = np.zeros((n + 2, n + 2))
    for i, t in enumerate(ts):
        a = np.zeros(n + 2)
        a[0], a[1], a[2 + i] = 1.0 - t, t, -1.0
        q += np.outer(a, a) / n
    for i in range(n):
        q[2 + i, 2 + i] = 0.0
    return np.kron(q, np.eye(d))


class TestFitMeans:
    def test_zero_means(self):
        ds = dataset_1d([0.0, 0.5, 1.0], [1.0, 2.0, 1.0])
        m0, m1 = fit_means(ds)
        assert m0[0] == pytest.approx(0.0, abs=1e-12)
        assert m1[0] == pytest.approx(0.0, abs=1e-12)

    def test_two_entry_interpolation(self):
        a, b = np.array([1.0, -1.0]), np.array([2.0, 5.0])
        ds = GaussianDataset(
            [(0.0, GaussianMeasure(a, np.eye(2))), (1.0, GaussianMeasure(b, np.eye(2)))]
        )
        m0, m1 = fit_means(ds)
        np.testing.assert_allclose(m0, a, atol=1e-12)
        np.testing.assert_allclose(m1, b, atol=1e-12)

    def test_zigzag_means(self):
        ds = dataset_1d([0.0, 0.5, 1.0], [1.0, 1.0, 1.0], means=[0.0, 1.0, 0.0])
        m0, m1 = fit_means(ds)
        assert m0[0] == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert m1[0] == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_degenerate_timestamps(self):
        ds = dataset_1d([0.5, 0.5], [1.0, 2.0])
        with pytest.raises(DegenerateTimestampsError):
            fit_means(ds)


class TestBuildSDP:
    def test_endpoint_design_kills_cross_coefficient(self):
        ds = dataset_1d([0.0, 1.0], [1.0, 4.0])
        problem = build_sdp(ds)
        assert problem.diagnostics["s_x0x1_trace_coefficient"] == pytest.approx(0.0, abs=1e-15)

    def test_repeated_timestamp_well_defined(self):
        ds = dataset_1d([0.3, 0.3], [1.0, 2.0])
        problem = build_sdp(ds)
        # cross coefficient vanishes only when mean(t) == mean(t^2)
        assert problem.diagnostics["s_x0x1_trace_coefficient"] == pytest.approx(
            2 * (0.3 - 0.09), abs=1e-15
        )

    @pytest.mark.parametrize("d", [1, 2])
    def test_matches_second_moment_expansion(self, d):
        ts = [0.0, 0.5, 1.0]
        entries = [
            (t, GaussianMeasure(np.zeros(d), np.eye(d))) for t in ts
        ]
        problem = build_sdp(GaussianDataset(entries))
        np.testing.assert_allclose(
            problem.objective, objective_matrix_oracle(ts, d), atol=1e-14
        )

    def test_objective_values_agree_with_expansion(self):
        rng = np.random.default_rng(0)
        ts = rng.uniform(size=4)
        ds = dataset_1d(ts, 1.0 + rng.random(4))
        problem = build_sdp(ds)
        full = objective_matrix_oracle(ts, 1)
        raw = rng.normal(size=(6, 6))
        sym = raw @ raw.T
        got = problem.value(sym)
        # the dropped data diagonal contributes sum tr(C_yi)/N
        want = float((full * sym).sum())
        assert got == pytest.approx(want, abs=1e-10)


class TestSolveSDP:
    def test_constant_covariances_fit_exactly(self):
        cov = np.array([[2.0]])
        ds = dataset_1d([0.0, 0.4, 1.0], [2.0, 2.0, 2.0])
        res = solve_sdp(build_sdp(ds))
        assert res.converged
        assert res.f_value == pytest.approx(0.0, abs=1e-6)
        np.testing.assert_allclose(res.cov.c_x0, cov, atol=1e-4)

    def test_two_endpoints_fit_exactly(self):
        ds = dataset_1d([0.0, 1.0], [1.0, 4.0])
        res = solve_sdp(build_sdp(ds))
        assert res.f_value == pytest.approx(0.0, abs=1e-6)

    def test_matches_grid_search_oracle(self):
        ds = dataset_1d([0.0, 0.5, 1.0], [1.0, 4.0, 1.0])
        res = solve_sdp(build_sdp(ds))
        oracle = sdp_grid_oracle(ds.timestamps, [1.0, 2.0, 1.0])
        assert abs(res.f_value - oracle) <= 1e-3

    def test_feasibility_of_result(self):
        ds = synthetic_variance_dataset(n_points=12, seed=5)
        problem = build_sdp(ds)
        res = solve_sdp(problem)
        assert res.diagnostics["min_eigenvalue"] >= -1e-8
        for i, cov in enumerate(problem.data_covariances):
            np.testing.assert_array_equal(res.cov.c_y(i), cov)

    def test_objective_consistency_when_oracle_confirms(self):
        # instance whose grid oracle pins the optimum: objective plus the
        # dropped data constant must equal the reconstructed cost
        ds = dataset_1d([0.0, 0.5, 1.0], [1.0, 4.0, 1.0])
        res = solve_sdp(build_sdp(ds))
        assert res.diagnostics["objective_plus_constant"] == pytest.approx(
            res.f_value, abs=1e-3
        )

    def test_multidimensional_instance(self):
        rng = np.random.default_rng(1)
        entries = []
        for t in (0.0, 0.5, 1.0):
            raw = rng.normal(size=(2, 2))
            entries.append((t, GaussianMeasure(np.zeros(2), raw @ raw.T + 0.2 * np.eye(2))))
        res = solve_sdp(build_sdp(GaussianDataset(entries)))
        assert res.converged
        assert np.isfinite(res.f_value)
        assert res.diagnostics["min_eigenvalue"] >= -1e-8

    def test_means_decoupling(self):
        ds = dataset_1d([0.0, 0.5, 1.0], [1.0, 4.0, 2.0])
        shifted = dataset_1d([0.0, 0.5, 1.0], [1.0, 4.0, 2.0], means=[3.0, 3.0, 3.0])
        base = solve_sdp(build_sdp(ds))
        moved = solve_sdp(build_sdp(shifted))
        # covariance solve ignores means entirely
        np.testing.assert_allclose(base.cov.matrix, moved.cov.matrix, atol=1e-9)
        m0, m1 = fit_means(shifted)
        assert m0[0] == pytest.approx(3.0, abs=1e-9)
        assert m1[0] == pytest.approx(3.0, abs=1e-9)


class TestGaussianCurve:
    def _fitted_curve(self):
        ds = dataset_1d([0.0, 0.5, 1.0], [1.0, 4.0, 1.0], means=[0.0, 1.0, 2.0])
        res = solve_sdp(build_sdp(ds))
        return GaussianCurve.from_fit(res, fit_means(ds)), res

    def test_endpoints(self):
        curve, res = self._fitted_curve()
        at0 = gaussian_curve(curve, 0.0)
        np.testing.assert_allclose(at0.covariance, res.cov.c_x0, atol=1e-12)
        at1 = gaussian_curve(curve, 1.0)
        np.testing.assert_allclose(at1.covariance, res.cov.c_x1, atol=1e-12)
        assert at0.mean[0] == pytest.approx(0.0, abs=1e-9)
        assert at1.mean[0] == pytest.approx(2.0, abs=1e-9)

    def test_constant_curve_midpoint(self):
        curve = GaussianCurve(
            mean_line=(np.array([1.0]), np.array([1.0])),
            cov_blocks=(np.array([[4.0]]), np.array([[4.0]]), np.array([[4.0]])),
        )
        mid = gaussian_curve(curve, 0.5)
        assert mid.covariance[0, 0] == pytest.approx(4.0, abs=1e-14)
        assert mid.mean[0] == pytest.approx(1.0, abs=1e-14)

    def test_any_time_yields_valid_measure(self):
        curve, _ = self._fitted_curve()
        for t in (-0.5, 0.25, 0.75, 1.7):
            m = gaussian_curve(curve, t)
            assert np.linalg.eigvalsh(m.covariance).min() >= -1e-10

    def test_endpoint_block_psd_enforced(self):
        with pytest.raises(ValueError):
            GaussianCurve(
                mean_line=(np.zeros(1), np.zeros(1)),
                cov_blocks=(np.array([[1.0]]), np.array([[1.0]]), np.array([[5.0]])),
            )


class TestGeodesic1D:
    def test_two_entries_exact(self):
        ds = dataset_1d([0.0, 1.0], [1.0, 4.0])
        s0, s1, cost = fit_geodesic_1d(ds)
        assert s0 == pytest.approx(1.0, abs=1e-10)
        assert s1 == pytest.approx(2.0, abs=1e-10)
        assert cost == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_bump(self):
        ds = dataset_1d([0.0, 0.5, 1.0], [1.0, 4.0, 1.0])
        s0, s1, cost = fit_geodesic_1d(ds)
        assert s0 == pytest.approx(4.0 / 3.0, abs=1e-9)
        assert s1 == pytest.approx(4.0 / 3.0, abs=1e-9)
        assert cost == pytest.approx(2.0 / 9.0, abs=1e-10)

    def test_constant_stds(self):
        ds = dataset_1d([0.0, 0.3, 1.0], [2.25, 2.25, 2.25])
        *_, cost = fit_geodesic_1d(ds)
        assert cost == pytest.approx(0.0, abs=1e-12)

    def test_rejects_multidimensional(self):
        ds = GaussianDataset(
            [(0.0, GaussianMeasure(np.zeros(2), np.eye(2))),
             (1.0, GaussianMeasure(np.zeros(2), np.eye(2)))]
        )
        with pytest.raises(DimensionError):
            fit_geodesic_1d(ds)

    def test_nonnegative_endpoints(self):
        # steep decline would extrapolate negative at t=1 without the
        # constraint
        ds = dataset_1d([0.0, 0.2], [9.0, 1.0])
        s0, s1, _ = fit_geodesic_1d(ds)
        assert s0 >= 0.0 and s1 >= 0.0


class TestDominance:
    def test_relaxed_fit_never_loses_to_geodesic(self):
        for seed in (0, 8, 15):
            ds = synthetic_variance_dataset(seed=seed)
            res = solve_sdp(build_sdp(ds))
            *_, geo_cost = fit_geodesic_1d(ds)
            assert res.f_value <= geo_cost + 1e-6

    def test_strict_improvement_on_dip(self):
        ds = dataset_1d([0.0, 0.5, 1.0], [4.0, 1.0, 4.0])
        res = solve_sdp(build_sdp(ds))
        *_, geo_cost = fit_geodesic_1d(ds)
        assert res.f_value < geo_cost - 1e-3


class TestJointCovariance:
    def test_block_accessors(self):
        n, d = 2, 2
        side = (n + 2) * d
        raw = np.arange(side * side, dtype=float).reshape(side, side)
        sym = 0.5 * (raw + raw.T)
        cov = JointCovariance(sym, d, n)
        np.testing.assert_array_equal(cov.c_x0, sym[0:2, 0:2])
        np.testing.assert_array_equal(cov.s_x0x1, sym[0:2, 2:4])
        np.testing.assert_array_equal(cov.c_y(1), sym[6:8, 6:8])
        np.testing.assert_array_equal(cov.s_yy(0, 1), sym[4:6, 6:8])

    def test_symmetry_enforced(self):
        with pytest.raises(ValueError):
            JointCovariance(np.arange(16, dtype=float).reshape(4, 4), 1, 2)


class TestSyntheticGenerator:
    def test_deterministic(self):
        a = synthetic_variance_dataset(seed=11)
        b = synthetic_variance_dataset(seed=11)
        for (ta, ma), (tb, mb) in zip(a.entries, b.entries):
            assert ta == tb
            np.testing.assert_array_equal(ma.covariance, mb.covariance)

    def test_shape_and_validity(self):
        ds = synthetic_variance_dataset(n_points=17, seed=2)
        assert len(ds) == 17
        assert ds.dim == 1
        assert all(m.covariance[0, 0] > 0 for m in ds.measures)
