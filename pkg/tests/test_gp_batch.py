import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gpaf import gp_batch
from gpaf.gp_batch import Dataset, blr_fit, blr_predict
from gpaf.kernels import HyperParams, KernelSpec, gram, kernel_eval, kernel_vector


def make_spec(mode="rbf_only", a1=1.0, g=(1.0,), a2=0.5, a3=0.1):
    return KernelSpec(mode, HyperParams.from_values(a1, list(g), a2, a3))


def dense_predict(spec, X, y, xq):
    """Reference posterior from explicit inverses (no Cholesky)."""
    C = gram(spec, X, include_noise=True)
    Ci = np.linalg.inv(C)
    k = kernel_vector(spec, X, xq)
    kxx = kernel_eval(spec, xq, xq)
    mean = float(k @ Ci @ y)
    var = kxx - float(k @ Ci @ k)
    return mean, var


def dense_lml(spec, X, y):
    C = gram(spec, X, include_noise=True)
    sign, logdet = np.linalg.slogdet(C)
    assert sign > 0
    return float(
        -0.5 * y @ np.linalg.solve(C, y) - 0.5 * logdet - 0.5 * len(y) * math.log(2 * math.pi)
    )


class TestPredict:
    def test_matches_dense_inverse_oracle(self):
        rng = np.random.default_rng(0)
        for mode, d in [("rbf_only", 1), ("composite", 2), ("linear_only", 3)]:
            spec = make_spec(mode, g=[0.7] * d)
            X = rng.uniform(-2, 2, (9, d))
            y = rng.standard_normal(9)
            model = gp_batch.fit(Dataset(X, y), spec)
            for xq in rng.uniform(-2, 2, (5, d)):
                mean, var = dense_predict(spec, X, y, xq)
                p = gp_batch.predict(model, xq)
                assert_allclose(p.mean, mean, atol=1e-10)
                assert_allclose(p.var_latent, var, atol=1e-10)
                assert_allclose(p.var_output, var + spec.params.alpha3, atol=1e-10)

    def test_single_point_weights(self):
        spec = make_spec(a3=0.01)
        model = gp_batch.fit(Dataset(np.array([[0.5]]), np.array([2.0])), spec)
        # C = alpha1 + alpha3 = 1.01, weights = y / C
        assert_allclose(model.weights, [2.0 / 1.01], rtol=1e-14)

    def test_interpolates_with_tiny_noise(self):
        rng = np.random.default_rng(1)
        spec = make_spec(a3=1e-10)
        X = np.sort(rng.uniform(-2, 2, 8))[:, None]
        y = np.cos(X[:, 0])
        model = gp_batch.fit(Dataset(X, y), spec)
        preds = [gp_batch.predict(model, x).mean for x in X]
        assert_allclose(preds, y, atol=1e-4)

    def test_reverts_to_prior_far_away(self):
        rng = np.random.default_rng(2)
        spec = make_spec(a1=2.0, g=(1.5,), a3=0.1)
        X = rng.uniform(-1, 1, (10, 1))
        y = rng.standard_normal(10)
        p = gp_batch.predict(gp_batch.fit(Dataset(X, y), spec), np.array([40.0]))
        assert abs(p.mean) < 1e-8
        assert_allclose(p.var_latent, 2.0, rtol=1e-10)
        assert_allclose(p.var_output, 2.1, rtol=1e-10)

    def test_empty_dataset_gives_prior(self):
        spec = make_spec(a1=1.3)
        model = gp_batch.fit(Dataset(np.zeros((0, 1)), np.zeros(0)), spec)
        p = gp_batch.predict(model, np.array([0.7]))
        assert p.mean == 0.0
        assert_allclose(p.var_latent, 1.3, rtol=1e-15)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        spec = make_spec("composite", g=(1.0, 2.0))
        X = rng.standard_normal((12, 2))
        y = rng.standard_normal(12)
        perm = rng.permutation(12)
        m1 = gp_batch.fit(Dataset(X, y), spec)
        m2 = gp_batch.fit(Dataset(X[perm], y[perm]), spec)
        xq = rng.standard_normal(2)
        p1, p2 = gp_batch.predict(m1, xq), gp_batch.predict(m2, xq)
        assert_allclose(p1.mean, p2.mean, atol=1e-12)
        assert_allclose(p1.var_latent, p2.var_latent, atol=1e-12)

    def test_predict_joint_diagonal_matches_marginals(self):
        rng = np.random.default_rng(4)
        spec = make_spec()
        X = rng.uniform(-2, 2, (7, 1))
        y = rng.standard_normal(7)
        model = gp_batch.fit(Dataset(X, y), spec)
        Xq = rng.uniform(-2, 2, (4, 1))
        mean, cov = gp_batch.predict_joint(model, Xq)
        assert np.array_equal(cov, cov.T)
        for i, xq in enumerate(Xq):
            p = gp_batch.predict(model, xq)
            assert_allclose(mean[i], p.mean, atol=1e-12)
            assert_allclose(cov[i, i], p.var_latent, atol=1e-12)

    def test_dimension_mismatch_raises(self):
        spec = make_spec(g=(1.0, 1.0))
        with pytest.raises(ValueError):
            gp_batch.fit(Dataset(np.zeros((3, 1)), np.zeros(3)), spec)


class TestLogMarginalLikelihood:
    def test_scalar_closed_form(self):
        # n = 1, y = 0, C = alpha1 + alpha3 = 2:  lml = -0.5 log(4 pi)
        spec = make_spec(a1=1.0, a3=1.0)
        lml = gp_batch.log_marginal_likelihood(
            Dataset(np.array([[0.0]]), np.array([0.0])), spec
        )
        assert_allclose(lml, -0.5 * math.log(4 * math.pi), rtol=1e-14)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(5)
        for mode, d in [("rbf_only", 1), ("composite", 2), ("linear_only", 2)]:
            spec = make_spec(mode, g=[0.8] * d, a3=0.2)
            X = rng.uniform(-2, 2, (8, d))
            y = rng.standard_normal(8)
            data = Dataset(X, y)
            assert_allclose(
                gp_batch.log_marginal_likelihood(data, spec),
                dense_lml(spec, X, y),
                atol=1e-10,
            )

    @pytest.mark.parametrize("mode,d", [("composite", 2), ("rbf_only", 3), ("linear_only", 2)])
    def test_gradient_matches_finite_differences(self, mode, d):
        rng = np.random.default_rng(6)
        spec = make_spec(mode, g=list(rng.uniform(0.5, 2.0, d)), a3=0.3)
        X = rng.uniform(-2, 2, (10, d))
        y = rng.standard_normal(10)
        data = Dataset(X, y)
        grad = gp_batch.lml_gradient(data, spec)
        theta = spec.pack_params()
        h = 1e-6
        for j in range(len(theta)):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            num = (
                gp_batch.log_marginal_likelihood(data, spec.with_packed_params(tp))
                - gp_batch.log_marginal_likelihood(data, spec.with_packed_params(tm))
            ) / (2 * h)
            assert_allclose(grad[j], num, rtol=1e-5, atol=1e-8)

    def test_empty_data_raises(self):
        with pytest.raises(ValueError):
            gp_batch.log_marginal_likelihood(
                Dataset(np.zeros((0, 1)), np.zeros(0)), make_spec()
            )


def smooth_dataset(seed=3, n=25):
    rng = np.random.default_rng(seed)
    X = np.sort(rng.uniform(-3, 3, n))[:, None]
    y = np.sin(1.3 * X[:, 0]) + 0.05 * rng.standard_normal(n)
    return Dataset(X, y)


class TestOptimizer:
    def test_every_restart_ascends(self):
        data = smooth_dataset()
        spec0 = make_spec(a3=0.5)
        best, traces = gp_batch.optimize_hyperparams_traced(
            data, spec0, restarts=4, max_iters=60, seed=0
        )
        assert len(traces) == 4
        for tr in traces:
            path = np.asarray(tr.lml_path)
            assert path.shape[0] >= 1
            assert tr.final_lml >= path[0] - 1e-12
            # monotone non-decreasing iterates
            assert np.all(np.diff(path) >= -1e-12)
        lml0 = gp_batch.log_marginal_likelihood(data, spec0)
        assert gp_batch.log_marginal_likelihood(data, best) >= lml0

    def test_zero_iterations_returns_start(self):
        data = smooth_dataset()
        spec0 = make_spec()
        best, traces = gp_batch.optimize_hyperparams_traced(
            data, spec0, restarts=3, max_iters=0
        )
        assert traces == []
        assert np.array_equal(best.pack_params(), spec0.pack_params())

    def test_warns_when_start_is_already_optimal(self):
        data = smooth_dataset()
        spec0 = make_spec(a3=0.1)
        star = gp_batch.optimize_hyperparams(
            data, spec0, restarts=1, max_iters=400, tol=1e-15
        )
        with pytest.warns(RuntimeWarning):
            out, _ = gp_batch.optimize_hyperparams_traced(
                data, star, restarts=1, max_iters=50
            )
        assert np.array_equal(out.pack_params(), star.pack_params())

    def test_target_rescaling_moves_amplitude(self):
        # scaling y by 2 should raise the fitted signal variance ~4x
        data = smooth_dataset(seed=7, n=40)
        data2 = Dataset(data.X, 2.0 * data.y)
        spec0 = make_spec()
        b1 = gp_batch.optimize_hyperparams(data, spec0, restarts=2, max_iters=150, seed=1)
        b2 = gp_batch.optimize_hyperparams(data2, spec0, restarts=2, max_iters=150, seed=1)
        ratio = b2.params.alpha1 / b1.params.alpha1
        assert_allclose(math.log(ratio), math.log(4.0), atol=0.5)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_noise_recovery_from_gp_draw(self, seed):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 99]))
        true = make_spec(a1=1.0, g=(2.0,), a3=0.01)
        X = rng.uniform(-3, 3, (150, 1))
        K = gram(true, X, include_noise=False)
        L = np.linalg.cholesky(K + 1e-12 * np.eye(150))
        y = L @ rng.standard_normal(150) + 0.1 * rng.standard_normal(150)
        best = gp_batch.optimize_hyperparams(
            Dataset(X, y), make_spec(a1=0.5, g=(1.0,), a3=0.1),
            restarts=3, max_iters=120, seed=seed,
        )
        assert abs(best.params.log_alpha3 - math.log(0.01)) < 0.5

    def test_tied_lengthscales_are_equal(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(-2, 2, (40, 3))
        y = np.sin(X.sum(axis=1)) + 0.05 * rng.standard_normal(40)
        spec0 = make_spec("rbf_only", g=(1.0, 1.0, 1.0))
        best = gp_batch.optimize_hyperparams(
            Dataset(X, y), spec0, restarts=2, max_iters=80, seed=0, tie_lengthscales=True
        )
        lg = best.params.log_gamma
        assert np.ptp(lg) < 1e-12

    def test_validation(self):
        data = smooth_dataset()
        with pytest.raises(ValueError):
            gp_batch.optimize_hyperparams(data, make_spec(), restarts=0)
        with pytest.raises(ValueError):
            gp_batch.optimize_hyperparams(data, make_spec(), max_iters=-1)
        tiny = Dataset(np.zeros((1, 1)), np.zeros(1))
        with pytest.raises(ValueError):
            gp_batch.optimize_hyperparams(tiny, make_spec())


class TestBayesianLinearRegression:
    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(9)
        n, d = 12, 3
        X = rng.standard_normal((n, d))
        y = rng.standard_normal(n)
        sw2, sn2 = 0.7, 0.05
        model = blr_fit(Dataset(X, y), sw2, sn2)
        Sw = np.linalg.inv(X.T @ X / sn2 + np.eye(d) / sw2)
        mw = Sw @ X.T @ y / sn2
        for xq in rng.standard_normal((5, d)):
            p = blr_predict(model, xq)
            assert_allclose(p.mean, xq @ mw, atol=1e-12)
            assert_allclose(p.var_latent, xq @ Sw @ xq, atol=1e-12)
            assert_allclose(p.var_output, xq @ Sw @ xq + sn2, atol=1e-12)

    def test_underdetermined_n_less_than_d(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((2, 5))
        y = rng.standard_normal(2)
        model = blr_fit(Dataset(X, y), 1.0, 0.1)
        p = blr_predict(model, rng.standard_normal(5))
        assert np.isfinite(p.mean) and p.var_latent > 0

    def test_no_data_gives_prior(self):
        model = blr_fit(Dataset(np.zeros((0, 2)), np.zeros(0)), 0.5, 0.1)
        xq = np.array([1.0, -2.0])
        p = blr_predict(model, xq)
        assert p.mean == 0.0
        assert_allclose(p.var_latent, 0.5 * float(xq @ xq), rtol=1e-14)

    def test_equals_linear_kernel_gp(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((8, 2))
        y = rng.standard_normal(8)
        sw2, sn2 = 0.4, 0.2
        blr = blr_fit(Dataset(X, y), sw2, sn2)
        spec = KernelSpec(
            "linear_only",
            HyperParams(0.0, np.zeros(2), math.log(sw2), math.log(sn2)),
        )
        gp = gp_batch.fit(Dataset(X, y), spec)
        for xq in rng.standard_normal((6, 2)):
            pa, pb = blr_predict(blr, xq), gp_batch.predict(gp, xq)
            assert_allclose(pa.mean, pb.mean, atol=1e-11)
            assert_allclose(pa.var_output, pb.var_output, atol=1e-11)
