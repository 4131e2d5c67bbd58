"""Spectral fitters: initialization, SVD baseline, CV, iterative fit."""

import logging

import numpy as np
import pytest

from gplsi.corpus import FrequencyMatrix, generate_synthetic, validate_frequency
from gplsi.decomposition import (
    FitConfig,
    FitTrace,
    IterationRecord,
    SvdFactors,
    cross_validate_rho,
    default_rho_grid,
    default_t_max,
    fit_gplsi,
    fit_onestep,
    fit_plsi,
    initialize_V,
)
from gplsi.errors import (
    DimensionMismatch,
    InvalidParameter,
    RankDeficientWarning,
)
from gplsi.eval import sin_theta
from gplsi.graph import DocumentGraph


def noiseless_corpus(n=60, p=15, K=3, seed=0, lengths=10**18):
    counts, truth, g = generate_synthetic(n, p, K, 20, n_grp=8, seed=seed)
    M = truth.W @ truth.A
    X = FrequencyMatrix(M, np.full(n, lengths, dtype=np.int64))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return X, g, U[:, :K], Vt[:K].T


def sampled_corpus(n, p, K, N, seed):
    counts, truth, g = generate_synthetic(n, p, K, N, n_grp=min(10, n), seed=seed)
    return validate_frequency(counts), truth, g


class TestSvdFactors:
    def test_accepts_orthonormal(self):
        f = SvdFactors(np.eye(4)[:, :2], np.eye(3)[:, :2], np.array([2.0, 1.0]))
        assert f.K == 2

    def test_rejects_nonorthonormal(self):
        U = np.ones((4, 2))
        with pytest.raises(InvalidParameter):
            SvdFactors(U, np.eye(3)[:, :2], np.array([2.0, 1.0]))

    def test_rejects_increasing_values(self):
        with pytest.raises(InvalidParameter):
            SvdFactors(np.eye(4)[:, :2], np.eye(3)[:, :2], np.array([1.0, 2.0]))

    def test_rejects_negative_values(self):
        with pytest.raises(InvalidParameter):
            SvdFactors(np.eye(4)[:, :2], np.eye(3)[:, :2], np.array([1.0, -0.5]))

    def test_rejects_k_mismatch(self):
        with pytest.raises(DimensionMismatch):
            SvdFactors(np.eye(4)[:, :2], np.eye(3)[:, :1], np.array([2.0, 1.0]))


class TestFitConfig:
    def test_defaults(self):
        cfg = FitConfig(K=3)
        assert cfg.b == 5 and cfg.rho_grid is None and cfg.cv_every_iteration

    def test_rejects_bad_k(self):
        with pytest.raises(InvalidParameter):
            FitConfig(K=0)

    def test_rejects_small_b(self):
        with pytest.raises(InvalidParameter):
            FitConfig(K=2, b=1)

    def test_rejects_nonpositive_grid(self):
        with pytest.raises(InvalidParameter):
            FitConfig(K=2, rho_grid=(0.0, 1.0))

    def test_rejects_unsorted_grid(self):
        with pytest.raises(InvalidParameter):
            FitConfig(K=2, rho_grid=(1.0, 0.5))


class TestDefaults:
    def test_t_max_formula(self):
        assert default_t_max(500, 10, 3) == int(np.ceil(2 * np.log(5000 / 9)))
        assert default_t_max(1, 1, 5) == 1  # floor at one iteration

    def test_rho_grid_shape_and_scale(self):
        grid = default_rho_grid(3, 500, 10.0)
        s = np.sqrt(3 * np.log(500) / 10.0)
        assert len(grid) == 12
        assert grid[0] == pytest.approx(1e-4 * s, rel=1e-12)
        assert grid[-1] == pytest.approx(10.0 * s, rel=1e-12)
        assert all(a < b for a, b in zip(grid, grid[1:]))


class TestInitializeV:
    def test_noiseless_close_to_truth(self):
        counts, truth, _ = generate_synthetic(80, 20, 3, 20, n_grp=8, seed=1)
        M = truth.W @ truth.A
        X = FrequencyMatrix(M, np.full(80, 10**6, dtype=np.int64))
        V0 = initialize_V(X, 3)
        Vt = np.linalg.svd(M, full_matrices=False)[2][:3].T
        assert sin_theta(V0, Vt) < 1e-2

    def test_orthonormal_output(self):
        X, _, _ = sampled_corpus(40, 12, 2, 30, seed=2)
        V0 = initialize_V(X, 2)
        np.testing.assert_allclose(V0.T @ V0, np.eye(2), atol=1e-10)

    def test_identical_rows_unit_norm(self):
        v = np.array([0.5, 0.3, 0.2])
        X = FrequencyMatrix(np.tile(v, (6, 1)), np.full(6, 10**6))
        V0 = initialize_V(X, 1)
        assert np.linalg.norm(V0[:, 0]) == pytest.approx(1.0, abs=1e-12)
        assert abs(V0[:, 0] @ (v / np.linalg.norm(v))) > 0.99

    def test_row_permutation_invariance(self):
        X, _, _ = sampled_corpus(40, 12, 3, 25, seed=3)
        rng = np.random.default_rng(4)
        perm = rng.permutation(40)
        Xp = FrequencyMatrix(X.freqs[perm], X.doc_lengths[perm])
        np.testing.assert_allclose(initialize_V(X, 3), initialize_V(Xp, 3),
                                   atol=1e-8)

    def test_rank_deficient_warns_and_pads(self):
        v = np.array([0.5, 0.3, 0.2])
        X = FrequencyMatrix(np.tile(v, (6, 1)), np.full(6, 10**6))
        with pytest.warns(RankDeficientWarning):
            V0 = initialize_V(X, 3)
        assert V0.shape == (3, 3)
        np.testing.assert_allclose(V0.T @ V0, np.eye(3), atol=1e-10)

    def test_k_bound(self):
        X, _, _ = sampled_corpus(10, 5, 2, 20, seed=5)
        with pytest.raises(InvalidParameter):
            initialize_V(X, 6)


class TestFitPlsi:
    def test_identity_matrix(self):
        X = FrequencyMatrix(np.eye(4), np.full(4, 10))
        f = fit_plsi(X, 2)
        np.testing.assert_allclose(f.singular_values, [1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(np.abs(f.U.T @ f.U), np.eye(2), atol=1e-10)
        # every column is a canonical basis vector with positive sign
        assert ((f.U == 1.0).sum(axis=0) == 1).all()
        assert (np.sort(np.abs(f.U), axis=0)[:-1] == 0).all()

    def test_rank_one(self):
        v = np.array([0.1, 0.2, 0.3, 0.4])
        X = np.tile(v, (5, 1))
        f = fit_plsi(X, 1)
        np.testing.assert_allclose(np.abs(f.U[:, 0]), np.full(5, 1 / np.sqrt(5)),
                                   atol=1e-12)
        np.testing.assert_allclose(f.V[:, 0], v / np.linalg.norm(v), atol=1e-12)
        assert f.singular_values[0] == pytest.approx(
            np.sqrt(5) * np.linalg.norm(v), rel=1e-12)

    def test_matches_dense_svd(self):
        # projector distance instead of sin-theta: the latter bottoms
        # out at sqrt(machine eps) and cannot certify 1e-8
        rng = np.random.default_rng(6)
        for _ in range(5):
            M = rng.uniform(size=(50, 20))
            M /= M.sum(axis=1, keepdims=True)
            f = fit_plsi(M, 4)
            U, s, Vt = np.linalg.svd(M, full_matrices=False)
            Ur, Vr = U[:, :4], Vt[:4].T
            assert np.linalg.norm(f.U @ f.U.T - Ur @ Ur.T) < 1e-8
            assert np.linalg.norm(f.V @ f.V.T - Vr @ Vr.T) < 1e-8
            np.testing.assert_allclose(f.singular_values, s[:4], rtol=1e-10)

    def test_rank_deficient_warns(self):
        with pytest.warns(RankDeficientWarning):
            fit_plsi(np.tile([0.25, 0.25, 0.5], (4, 1)), 2)


class TestCrossValidateRho:
    def test_singleton_grid(self):
        X, _, g = sampled_corpus(30, 10, 2, 15, seed=7)
        V0 = initialize_V(X, 2)
        rho, errs = cross_validate_rho(X, g, V0, (0.0,), 3, seed=0)
        assert rho == 0.0 and errs.shape == (1,)

    def test_determinism(self):
        X, _, g = sampled_corpus(30, 10, 2, 15, seed=8)
        V0 = initialize_V(X, 2)
        grid = default_rho_grid(2, 30, 15.0)
        a = cross_validate_rho(X, g, V0, grid, 3, seed=11)
        b = cross_validate_rho(X, g, V0, grid, 3, seed=11)
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1], b[1])

    def test_empty_graph_ties_to_smallest(self):
        X, _, _ = sampled_corpus(12, 8, 2, 15, seed=9)
        g = DocumentGraph(12, ())
        V0 = initialize_V(X, 2)
        rho, errs = cross_validate_rho(X, g, V0, (0.5, 1.0, 2.0), 3, seed=0)
        assert rho == 0.5
        assert np.ptp(errs) == 0.0  # denoiser is the identity without edges

    def test_isolated_holdout_fallback_logged(self, caplog):
        X, _, _ = sampled_corpus(10, 6, 2, 15, seed=10)
        g = DocumentGraph.from_edges(10, [(i, i + 1) for i in range(7)])
        V0 = initialize_V(X, 2)
        with caplog.at_level(logging.WARNING, logger="gplsi.decomposition"):
            cross_validate_rho(X, g, V0, (0.1,), 2, seed=0)
        assert any("no neighbor outside the fold" in r.message
                   for r in caplog.records)

    def test_heavy_noise_two_blocks_selects_positive(self):
        # piecewise-constant mixtures on two cliques, tiny documents:
        # denoising along the graph should win nearly always
        hits = 0
        for trial in range(50):
            rng = np.random.default_rng(1000 + trial)
            n, p = 40, 12
            half = n // 2
            W = np.vstack([np.tile([0.85, 0.15], (half, 1)),
                           np.tile([0.15, 0.85], (half, 1))])
            A = rng.dirichlet(np.ones(p), size=2)
            M = W @ A
            counts = rng.multinomial(5, M)
            lengths = counts.sum(axis=1)
            if (lengths == 0).any():
                counts[lengths == 0, 0] = 1
                lengths = counts.sum(axis=1)
            X = FrequencyMatrix(counts / lengths[:, None], lengths)
            edges = [(i, j) for i in range(half) for j in range(i + 1, half)
                     if (i + j) % 3 == 0]
            edges += [(half + i, half + j)
                      for i in range(half) for j in range(i + 1, half)
                      if (i + j) % 3 == 0]
            edges += [(half - 1, half)]
            g = DocumentGraph.from_edges(n, edges)
            V0 = initialize_V(X, 2)
            grid = (0.0,) + default_rho_grid(2, n, 5.0)
            rho, _ = cross_validate_rho(X, g, V0, grid, 5, seed=trial,
                                        tv_tol=1e-4, tv_max_iter=2000)
            hits += rho > 0
        assert hits >= 45

    def test_grid_validation(self):
        X, _, g = sampled_corpus(12, 6, 2, 15, seed=11)
        V0 = initialize_V(X, 2)
        with pytest.raises(InvalidParameter):
            cross_validate_rho(X, g, V0, (), 3, seed=0)
        with pytest.raises(InvalidParameter):
            cross_validate_rho(X, g, V0, (1.0, 0.5), 3, seed=0)
        with pytest.raises(InvalidParameter):
            cross_validate_rho(X, g, V0, (-0.5, 1.0), 3, seed=0)

    def test_graph_size_mismatch(self):
        X, _, _ = sampled_corpus(12, 6, 2, 15, seed=12)
        with pytest.raises(DimensionMismatch):
            cross_validate_rho(X, DocumentGraph(5, ()), None, (0.1,), 3, seed=0)


class TestFitGplsi:
    def test_noiseless_recovers_spans(self):
        X, g, Uref, Vref = noiseless_corpus()
        factors, trace = fit_gplsi(X, g, FitConfig(K=3))
        assert sin_theta(factors.U, Uref) < 1e-6
        assert sin_theta(factors.V, Vref) < 1e-6
        assert trace.converged

    def test_empty_graph_equals_plain_svd(self):
        X, _, _, _ = noiseless_corpus(lengths=10**6)
        g = DocumentGraph(60, ())
        factors, trace = fit_gplsi(X, g, FitConfig(K=3))
        ref = fit_plsi(X, 3)
        np.testing.assert_allclose(factors.U, ref.U, atol=1e-8)
        np.testing.assert_allclose(factors.V, ref.V, atol=1e-8)
        np.testing.assert_allclose(factors.singular_values,
                                   ref.singular_values, rtol=1e-10)

    def test_determinism(self):
        X, truth, g = sampled_corpus(50, 12, 3, 20, seed=13)
        cfg = FitConfig(K=3, cv_seed=5)
        f1, t1 = fit_gplsi(X, g, cfg)
        f2, t2 = fit_gplsi(X, g, cfg)
        np.testing.assert_array_equal(f1.U, f2.U)
        np.testing.assert_array_equal(f1.V, f2.V)
        np.testing.assert_array_equal(f1.singular_values, f2.singular_values)
        assert t1.rho_path == t2.rho_path
        assert [r.score for r in t1.records] == [r.score for r in t2.records]

    def test_factors_orthonormal_and_sorted(self):
        X, _, g = sampled_corpus(50, 12, 3, 20, seed=14)
        factors, _ = fit_gplsi(X, g, FitConfig(K=3))
        np.testing.assert_allclose(factors.U.T @ factors.U, np.eye(3),
                                   atol=1e-10)
        np.testing.assert_allclose(factors.V.T @ factors.V, np.eye(3),
                                   atol=1e-10)
        s = factors.singular_values
        assert (s[:-1] >= s[1:]).all() and (s >= 0).all()

    def test_trace_records_iterations(self):
        X, _, g = sampled_corpus(50, 12, 3, 20, seed=15)
        _, trace = fit_gplsi(X, g, FitConfig(K=3, t_max=3))
        assert 1 <= trace.iterations <= 3
        assert trace.records[0].score == np.inf
        assert all(r.cv_errors is not None for r in trace.records)

    def test_cv_once_mode(self):
        X, _, g = sampled_corpus(50, 12, 3, 20, seed=16)
        cfg = FitConfig(K=3, t_max=3, cv_every_iteration=False)
        _, trace = fit_gplsi(X, g, cfg)
        assert trace.records[0].cv_errors is not None
        assert all(r.cv_errors is None for r in trace.records[1:])
        rhos = set(trace.rho_path)
        assert len(rhos) == 1  # penalty frozen after the first selection

    def test_graph_mismatch(self):
        X, _, _ = sampled_corpus(20, 8, 2, 15, seed=17)
        with pytest.raises(DimensionMismatch):
            fit_gplsi(X, DocumentGraph(4, ()), FitConfig(K=2))

    def test_median_error_not_worse_than_plsi(self):
        st_g, st_p = [], []
        for seed in range(8):
            X, truth, g = sampled_corpus(120, 15, 3, 20, seed=seed)
            Uref = np.linalg.svd(truth.W @ truth.A,
                                 full_matrices=False)[0][:, :3]
            factors, _ = fit_gplsi(X, g, FitConfig(K=3, cv_seed=seed))
            st_g.append(sin_theta(factors.U, Uref))
            st_p.append(sin_theta(fit_plsi(X, 3).U, Uref))
        assert np.median(st_g) <= np.median(st_p)


class TestFitOnestep:
    def test_noiseless_near_exact(self):
        X, g, Uref, Vref = noiseless_corpus(lengths=10**6)
        cfg = FitConfig(K=3, rho_grid=(1e-12, 1e-11, 1e-10))
        factors = fit_onestep(X, g, cfg)
        # projector distance: stable down to machine precision, unlike
        # the sin-theta formula which bottoms out near sqrt(eps)
        assert np.linalg.norm(factors.U @ factors.U.T - Uref @ Uref.T) < 1e-8
        assert np.linalg.norm(factors.V @ factors.V.T - Vref @ Vref.T) < 1e-8

    def test_empty_graph_equals_plsi(self):
        X, _, _ = sampled_corpus(30, 10, 2, 20, seed=18)
        factors = fit_onestep(X, DocumentGraph(30, ()), FitConfig(K=2))
        ref = fit_plsi(X, 2)
        np.testing.assert_allclose(factors.U, ref.U, atol=1e-12)
        np.testing.assert_allclose(factors.V, ref.V, atol=1e-12)

    def test_full_output_trace(self):
        X, _, g = sampled_corpus(30, 10, 2, 20, seed=19)
        factors, trace = fit_onestep(X, g, FitConfig(K=2), full_output=True)
        assert trace.iterations == 1
        assert trace.records[0].rho in default_rho_grid(2, 30, X.mean_length)

    def test_determinism(self):
        X, _, g = sampled_corpus(30, 10, 2, 20, seed=20)
        a = fit_onestep(X, g, FitConfig(K=2, cv_seed=3))
        b = fit_onestep(X, g, FitConfig(K=2, cv_seed=3))
        np.testing.assert_array_equal(a.U, b.U)

    def test_denoised_not_worse_than_plsi_on_blocks(self):
        st_o, st_p = [], []
        for seed in range(10):
            rng = np.random.default_rng(2000 + seed)
            n, p = 60, 12
            half = n // 2
            W = np.vstack([np.tile([0.9, 0.1], (half, 1)),
                           np.tile([0.1, 0.9], (half, 1))])
            A = rng.dirichlet(np.ones(p), size=2)
            M = W @ A
            counts = rng.multinomial(20, M)
            X = FrequencyMatrix(counts / 20.0, np.full(n, 20))
            edges = [(i, i + 1) for i in range(half - 1)]
            edges += [(half + i, half + i + 1) for i in range(half - 1)]
            edges += [(0, 2), (half, half + 2), (half - 1, half)]
            g = DocumentGraph.from_edges(n, edges)
            Uref = np.linalg.svd(M, full_matrices=False)[0][:, :2]
            st_o.append(sin_theta(fit_onestep(X, g, FitConfig(K=2,
                                                              cv_seed=seed)).U,
                                  Uref))
            st_p.append(sin_theta(fit_plsi(X, 2).U, Uref))
        assert np.median(st_o) <= np.median(st_p)


class TestFitTrace:
    def test_to_csv(self, tmp_path):
        trace = FitTrace()
        trace.records.append(IterationRecord(1, 0.5, np.inf, (3.0, 2.0), 40,
                                             True, 0.01))
        trace.records.append(IterationRecord(2, 0.25, 0.001, None, 17, True,
                                             0.02))
        out = tmp_path / "trace.csv"
        trace.to_csv(out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == ("t,rho,score,solver_iterations,solver_converged,"
                            "seconds,cverr_0,cverr_1")
        assert len(lines) == 3
        assert lines[2].endswith(",,")  # no CV curve on the second iteration
