import numpy as np
import pytest

import fcrcluster as fc
from fcrcluster.em import EmConfig, kmeanspp_init


def blobs(rng, centers, n_per, scale=1.0):
    parts = [c + scale * rng.normal(size=(n_per, len(c))) for c in map(np.asarray, centers)]
    return np.vstack(parts)


class TestKmeansppInit:
    def test_single_cluster_uses_sample_mean(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 2))
        init = kmeanspp_init(x, 1, rng)
        np.testing.assert_allclose(init.components[0].mean, x.mean(axis=0))
        np.testing.assert_array_equal(init.weights, [1.0])

    def test_q_equals_n_distinct_rows(self):
        x = np.arange(10.0).reshape(5, 2)
        init = kmeanspp_init(x, 5, np.random.default_rng(1))
        centers = sorted(tuple(c.mean) for c in init.components)
        assert centers == sorted(map(tuple, x))

    def test_separated_blobs_get_one_center_each(self):
        hits = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            x = blobs(rng, [(-10.0, -10.0), (10.0, 10.0)], 100)
            init = kmeanspp_init(x, 2, rng)
            signs = sorted(np.sign(c.mean[0]) for c in init.components)
            hits += signs == [-1.0, 1.0]
        assert hits >= 99

    def test_needs_enough_rows(self):
        with pytest.raises(ValueError, match="rows"):
            kmeanspp_init(np.zeros((1, 2)), 2, np.random.default_rng(0))

    def test_structure_projection(self):
        rng = np.random.default_rng(3)
        x = blobs(rng, [(0.0, 0.0)], 200) @ np.array([[1.0, 0.4], [0.0, 1.0]])
        init = kmeanspp_init(x, 2, rng, structure="diagonal")
        for comp in init.components:
            off = comp.scatter[~np.eye(2, dtype=bool)]
            assert np.all(off == 0.0)
        init_sph = kmeanspp_init(x, 2, rng, structure="spherical")
        s = init_sph.components[0].scatter
        assert s[0, 0] == pytest.approx(s[1, 1])


class TestGaussianEm:
    def test_single_component_closed_form(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(120, 2)) @ np.array([[1.5, 0.2], [0.0, 0.7]])
        fit = fc.em_fit(x, 1, EmConfig(n_starts=1, max_iter=5), np.random.default_rng(0))
        np.testing.assert_allclose(fit.params.components[0].mean, x.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(
            fit.params.components[0].scatter,
            np.cov(x, rowvar=False, ddof=0),
            rtol=1e-10,
        )

    def test_two_blob_recovery(self):
        rng = np.random.default_rng(5)
        x = blobs(rng, [(-5.0, 0.0), (5.0, 0.0)], 200)
        fit = fc.em_fit(x, 2, EmConfig(n_starts=5), np.random.default_rng(1))
        means = sorted(c.mean[0] for c in fit.params.components)
        assert abs(means[0] - (-5.0)) < 0.3
        assert abs(means[1] - 5.0) < 0.3

    def test_trace_monotone(self):
        rng = np.random.default_rng(6)
        x = blobs(rng, [(0.0, 0.0), (2.0, 1.0)], 150)
        fit = fc.em_fit(x, 2, EmConfig(n_starts=3), np.random.default_rng(2))
        assert np.all(np.diff(fit.loglik_trace) >= -1e-8)

    def test_monotone_all_structures_and_families(self):
        rng = np.random.default_rng(7)
        for structure in ("spherical", "diagonal", "full"):
            for family, fitter in (("gaussian", fc.em_fit), ("student", fc.student_em_fit)):
                x = blobs(rng, [(0.0, 0.0), (1.5, 1.5)], 60)
                cfg = EmConfig(structure=structure, n_starts=2, max_iter=40)
                fit = fitter(x, 2, cfg, np.random.default_rng(8))
                diffs = np.diff(fit.loglik_trace)
                slack = 1e-8 * np.abs(fit.loglik_trace[:-1])
                assert np.all(diffs >= -np.maximum(slack, 1e-8)), (structure, family)

    def test_known_regime_bit_exact(self):
        rng = np.random.default_rng(9)
        x = blobs(rng, [(-3.0, 0.0), (3.0, 0.0)], 100)
        kw = np.array([0.4, 0.6])
        kc = (np.eye(2) * 1.3, np.eye(2) * 0.8)
        cfg = EmConfig(structure="known", known_weights=kw, known_covariances=kc, n_starts=2)
        fit = fc.em_fit(x, 2, cfg, np.random.default_rng(3))
        assert np.array_equal(fit.params.weights, kw)
        for comp, known in zip(fit.params.components, kc):
            assert np.array_equal(comp.scatter, known)

    def test_known_requires_covariances(self):
        with pytest.raises(ValueError, match="known_covariances"):
            EmConfig(structure="known").validate()

    def test_constraint_shapes(self):
        rng = np.random.default_rng(10)
        x = blobs(rng, [(0.0, 0.0), (4.0, 0.0)], 120) @ np.array([[1.0, 0.3], [0.0, 1.0]])
        diag = fc.em_fit(x, 2, EmConfig(structure="diagonal", n_starts=2),
                         np.random.default_rng(4))
        for comp in diag.params.components:
            assert comp.scatter[0, 1] == 0.0 and comp.scatter[1, 0] == 0.0
        sph = fc.em_fit(x, 2, EmConfig(structure="spherical", n_starts=2),
                        np.random.default_rng(5))
        for comp in sph.params.components:
            assert comp.scatter[0, 0] == comp.scatter[1, 1]
            assert comp.scatter[0, 1] == 0.0

    def test_determinism(self):
        rng = np.random.default_rng(11)
        x = blobs(rng, [(0.0, 0.0), (3.0, 3.0)], 100)
        cfg = EmConfig(n_starts=4, seed=99)
        fit1 = fc.em_fit(x, 2, cfg)
        fit2 = fc.em_fit(x, 2, cfg)
        np.testing.assert_array_equal(fit1.loglik_trace, fit2.loglik_trace)
        np.testing.assert_array_equal(fit1.params.weights, fit2.params.weights)
        for a, b in zip(fit1.params.components, fit2.params.components):
            np.testing.assert_array_equal(a.mean, b.mean)
            np.testing.assert_array_equal(a.scatter, b.scatter)

    def test_coordinate_permutation_equivariance(self):
        rng = np.random.default_rng(12)
        x = blobs(rng, [(0.0, 1.0, -1.0), (4.0, -2.0, 2.0)], 80)
        cfg = EmConfig(n_starts=3, seed=5)
        fit = fc.em_fit(x, 2, cfg)
        perm = [2, 0, 1]
        fit_p = fc.em_fit(x[:, perm], 2, cfg)
        np.testing.assert_allclose(fit_p.loglik_trace[-1], fit.loglik_trace[-1], rtol=1e-9)
        for a, b in zip(fit.params.components, fit_p.params.components):
            np.testing.assert_allclose(b.mean, a.mean[perm], rtol=1e-8, atol=1e-10)
            np.testing.assert_allclose(
                b.scatter, a.scatter[np.ix_(perm, perm)], rtol=1e-8, atol=1e-10
            )

    def test_degenerate_component_reinitialized(self):
        # one far outlier cannot hold a component: mass collapses, reinit kicks in
        rng = np.random.default_rng(13)
        x = np.vstack([rng.normal(size=(60, 1)), [[1e4]]])
        fit = fc.em_fit(x, 2, EmConfig(n_starts=1, max_iter=30), np.random.default_rng(6))
        assert np.all(np.isfinite(fit.loglik_trace))


class TestStudentEm:
    def test_symmetric_two_point_mean_zero(self):
        x = np.array([[-3.0], [3.0]])
        fit = fc.student_em_fit(x, 1, EmConfig(n_starts=1, max_iter=60),
                                np.random.default_rng(0))
        assert abs(fit.params.components[0].mean[0]) < 1e-10

    def test_outlier_robustness(self):
        rng = np.random.default_rng(14)
        clean = rng.normal(size=(99, 1))
        x = np.vstack([clean, [[100.0]]])
        cfg = EmConfig(n_starts=1, max_iter=80)
        gauss = fc.em_fit(x, 1, cfg, np.random.default_rng(1))
        student = fc.student_em_fit(x, 1, cfg, np.random.default_rng(1))
        target = clean.mean()
        err_gauss = abs(gauss.params.components[0].mean[0] - target)
        err_student = abs(student.params.components[0].mean[0] - target)
        assert err_student < err_gauss

    def test_dof_never_updated(self):
        rng = np.random.default_rng(15)
        x = blobs(rng, [(0.0,), (5.0,)], 80)
        fit = fc.student_em_fit(x, 2, EmConfig(n_starts=2, dof=4.0, max_iter=30),
                                np.random.default_rng(2))
        assert all(c.dof == 4.0 for c in fit.params.components)


class TestFitExport:
    def test_save_fit_round_trip(self, tmp_path):
        rng = np.random.default_rng(16)
        x = blobs(rng, [(0.0, 0.0), (4.0, 4.0)], 60)
        fit = fc.em_fit(x, 2, EmConfig(n_starts=2), np.random.default_rng(0))
        params_path = tmp_path / "params.json"
        trace_path = tmp_path / "trace.csv"
        from fcrcluster.em import save_fit

        save_fit(fit, params_path, trace_path)
        loaded = fc.load_mixture_json(params_path)
        np.testing.assert_array_equal(loaded.weights, fit.params.weights)
        lines = trace_path.read_text().splitlines()
        assert lines[0] == "iteration,loglik"
        assert len(lines) == len(fit.loglik_trace) + 1
