import numpy as np
import pytest

from shmlearn.conjugate import (
    DirichletParams,
    NiwParams,
    categorical_predictive,
    dirichlet_update,
    log_sum_exp,
    niw_predictive_logpdf,
    niw_predictive_logpdf_batch,
    niw_update,
)

from oracles import niw_grid_posterior_1d


def prior_2d():
    return NiwParams(m=np.zeros(2), kappa=1.0, nu=4.0, S=np.eye(2))


class TestNiwUpdate:
    def test_empty_update_is_identity(self):
        post = niw_update(prior_2d(), np.empty((0, 2)))
        assert post.kappa == 1.0 and post.nu == 4.0
        np.testing.assert_array_equal(post.m, np.zeros(2))
        np.testing.assert_array_equal(post.S, np.eye(2))

    def test_observation_at_prior_mean(self):
        post = niw_update(prior_2d(), np.zeros((1, 2)))
        assert post.kappa == 2.0 and post.nu == 5.0
        np.testing.assert_allclose(post.m, np.zeros(2))
        np.testing.assert_allclose(post.S, np.eye(2))

    def test_matches_grid_oracle_fixed_instance(self):
        prior = NiwParams(m=np.zeros(1), kappa=1.0, nu=3.0, S=np.eye(1))
        post = niw_update(prior, np.array([[1.0], [3.0]]))
        # Closed forms for this instance: kappa=3, nu=5, m=4/3, S=17/3.
        np.testing.assert_allclose(post.kappa, 3.0)
        np.testing.assert_allclose(post.nu, 5.0)
        np.testing.assert_allclose(post.m, [4.0 / 3.0])
        np.testing.assert_allclose(post.S, [[17.0 / 3.0]])

        oracle = niw_grid_posterior_1d(0.0, 1.0, 3.0, 1.0, [1.0, 3.0])
        d = 1
        dof = post.nu - d + 1
        e_mu = post.m[0]
        var_mu = post.S[0, 0] / (post.kappa * dof) * dof / (dof - 2)
        e_var = post.S[0, 0] / (post.nu - 2)
        assert abs(e_mu - oracle["E_mu"]) < 1e-6
        assert abs(var_mu - oracle["Var_mu"]) < 1e-6
        assert abs(e_var - oracle["E_var"]) < 1e-6

    def test_matches_grid_oracle_random_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m0 = float(rng.normal(0, 1))
            kappa0 = float(rng.uniform(0.5, 3.0))
            nu0 = float(rng.uniform(3.0, 6.0))
            s0 = float(rng.uniform(0.5, 2.0))
            n = int(rng.integers(2, 7))
            data = rng.normal(rng.normal(), rng.uniform(0.5, 1.5), size=n)

            prior = NiwParams(m=[m0], kappa=kappa0, nu=nu0, S=[[s0]])
            post = niw_update(prior, data[:, None])
            oracle = niw_grid_posterior_1d(m0, kappa0, nu0, s0, data)

            dof = post.nu  # = nu_n - d + 1 with d = 1
            e_mu = post.m[0]
            var_mu = post.S[0, 0] / (post.kappa * dof) * dof / (dof - 2)
            e_var = post.S[0, 0] / (post.nu - 2)
            assert abs(e_mu - oracle["E_mu"]) < 1e-6
            assert abs(var_mu - oracle["Var_mu"]) < 1e-6
            assert abs(e_var - oracle["E_var"]) < 1e-6

    def test_batch_equals_sequential(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(6, 2))
        prior = prior_2d()
        batch = niw_update(prior, X)
        seq = prior
        for row in X:
            seq = niw_update(seq, row[None, :])
        np.testing.assert_allclose(seq.m, batch.m, atol=1e-12)
        np.testing.assert_allclose(seq.S, batch.S, atol=1e-12)
        assert seq.kappa == batch.kappa and seq.nu == batch.nu

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            niw_update(prior_2d(), np.zeros((3, 4)))


class TestNiwPredictive:
    def test_symmetry_about_location(self):
        post = NiwParams(m=np.array([1.0, -2.0]), kappa=3.0, nu=6.0, S=np.eye(2) * 2)
        delta = np.array([0.3, 0.7])
        lo = niw_predictive_logpdf(post, post.m + delta)
        hi = niw_predictive_logpdf(post, post.m - delta)
        assert lo == pytest.approx(hi, abs=1e-12)

    def test_normalizes_on_grid_1d(self):
        post = NiwParams(m=np.array([0.5]), kappa=2.0, nu=5.0, S=np.array([[2.0]]))
        xs = np.linspace(-50, 50, 200001)
        dens = np.exp(niw_predictive_logpdf_batch(post, xs[:, None]))
        total = np.trapezoid(dens, xs)
        assert total == pytest.approx(1.0, abs=1e-3)

    def test_matches_grid_oracle_marginal(self):
        prior = NiwParams(m=np.zeros(1), kappa=1.0, nu=3.0, S=np.eye(1))
        post = niw_update(prior, np.array([[1.0], [3.0]]))
        oracle = niw_grid_posterior_1d(0.0, 1.0, 3.0, 1.0, [1.0, 3.0])
        ours = np.exp(niw_predictive_logpdf(post, np.array([2.0])))
        assert abs(ours - oracle["predictive"](2.0)) < 1e-3

    def test_maximized_at_location(self):
        post = NiwParams(m=np.array([0.3, -0.1]), kappa=2.0, nu=7.0, S=np.eye(2))
        at_m = niw_predictive_logpdf(post, post.m)
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = post.m + rng.normal(scale=2.0, size=2)
            assert niw_predictive_logpdf(post, x) <= at_m

    def test_invalid_dof(self):
        from shmlearn.conjugate import student_t_logpdf

        with pytest.raises(ValueError):
            student_t_logpdf(np.zeros((1, 2)), np.zeros(2), np.eye(2), 0.0)

    def test_normalizes_on_grid_2d(self):
        post = NiwParams(m=np.array([0.2, -0.4]), kappa=3.0, nu=7.0, S=np.eye(2) * 1.5)
        xs = np.linspace(-30, 30, 601)
        xx, yy = np.meshgrid(xs, xs, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        dens = np.exp(niw_predictive_logpdf_batch(post, pts)).reshape(xx.shape)
        total = np.trapezoid(np.trapezoid(dens, xs, axis=1), xs)
        assert total == pytest.approx(1.0, abs=1e-3)


class TestDirichlet:
    def test_empty_update(self):
        post = dirichlet_update(DirichletParams([1, 1, 1]), np.zeros(3))
        np.testing.assert_array_equal(post.alpha, [1, 1, 1])

    def test_additivity(self):
        post = dirichlet_update(DirichletParams([1, 1, 1]), [2, 3, 5])
        np.testing.assert_array_equal(post.alpha, [3, 4, 6])

    def test_sequential_equals_combined(self):
        rng = np.random.default_rng(0)
        prior = DirichletParams([1.0, 2.0, 0.5])
        c1 = rng.integers(0, 10, size=3)
        c2 = rng.integers(0, 10, size=3)
        seq = dirichlet_update(dirichlet_update(prior, c1), c2)
        combined = dirichlet_update(prior, c1 + c2)
        np.testing.assert_array_equal(seq.alpha, combined.alpha)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            dirichlet_update(DirichletParams([1, 1]), [1, 2, 3])

    def test_predictive_mean(self):
        np.testing.assert_allclose(
            categorical_predictive(DirichletParams([3, 4, 6])),
            [3 / 13, 4 / 13, 6 / 13],
        )

    def test_predictive_symmetry(self):
        np.testing.assert_allclose(categorical_predictive(DirichletParams([1, 1])), [0.5, 0.5])

    def test_predictive_concentration_limit(self):
        p = categorical_predictive(DirichletParams([1e6, 1.0]))
        assert p[0] >= 0.999998

    def test_predictive_proper(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            alpha = rng.uniform(0.1, 10.0, size=rng.integers(2, 8))
            p = categorical_predictive(DirichletParams(alpha))
            assert abs(p.sum() - 1.0) < 1e-12
            assert np.all((p > 0) & (p < 1))


class TestLogSumExp:
    def test_ln2(self):
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(np.log(2.0))

    def test_no_overflow(self):
        assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000.0 + np.log(2.0))

    def test_matches_naive_sum(self):
        rng = np.random.default_rng(2)
        v = rng.uniform(-5, 5, size=20)
        naive = np.log(np.exp(v).sum())
        assert abs(log_sum_exp(v) - naive) < 1e-12

    def test_shift_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            v = rng.uniform(-10, 10, size=rng.integers(1, 15))
            c = float(rng.uniform(-100, 100))
            assert abs(log_sum_exp(v + c) - (log_sum_exp(v) + c)) < 1e-12

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            log_sum_exp([])

    def test_axis(self):
        m = np.array([[0.0, 0.0], [1.0, 1.0]])
        np.testing.assert_allclose(
            log_sum_exp(m, axis=1), [np.log(2.0), 1.0 + np.log(2.0)]
        )


class TestParamValidation:
    def test_kappa_positive(self):
        with pytest.raises(ValueError):
            NiwParams(m=np.zeros(2), kappa=0.0, nu=4.0, S=np.eye(2))

    def test_nu_bound(self):
        with pytest.raises(ValueError):
            NiwParams(m=np.zeros(2), kappa=1.0, nu=1.0, S=np.eye(2))

    def test_pd_repair_then_error(self):
        # Slightly indefinite matrix is repaired by one jitter pass.
        S = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-12]])
        p = NiwParams(m=np.zeros(2), kappa=1.0, nu=4.0, S=S)
        np.linalg.cholesky(p.S)
        # A badly indefinite matrix still fails.
        with pytest.raises(np.linalg.LinAlgError):
            NiwParams(m=np.zeros(2), kappa=1.0, nu=4.0, S=np.array([[1.0, 2.0], [2.0, 1.0]]))
