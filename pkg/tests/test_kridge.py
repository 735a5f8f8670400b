import numpy as np
import pytest

from smdisagg.errors import DimensionError, DomainError, SolverError
from smdisagg import kridge


def random_problem(rng, n=40, d=3):
    X = rng.uniform(size=(n, d))
    y = np.sin(3 * X[:, 0]) + 0.5 * X[:, 1] + rng.normal(0, 0.05, n)
    return X, y


class TestFit:
    def test_single_point_constant(self):
        model = kridge.fit(np.array([[2.0, 3.0]]), np.array([7.5]), mu=0.0, sigma=1.0)
        assert abs(kridge.predict(model, np.array([2.0, 3.0])) - 7.5) < 1e-12

    def test_interpolation_at_tiny_mu(self):
        rng = np.random.default_rng(0)
        X, y = random_problem(rng, n=80)
        model = kridge.fit(X, y, mu=1e-10, sigma=0.4)
        preds = kridge.predict_batch(model, X)
        assert np.max(np.abs(preds - y)) < 1e-6

    def test_shrinkage_across_mu(self):
        rng = np.random.default_rng(1)
        X, y = random_problem(rng, n=50)
        mus = [1e-6, 1e-4, 1e-2, 1.0, 10.0]
        norms = [np.linalg.norm(kridge.fit(X, y, mu=m, sigma=0.5).weights) for m in mus]
        assert all(a >= b for a, b in zip(norms, norms[1:]))

    def test_duplicate_rows_at_mu_zero_raise(self):
        X = np.array([[1.0, 2.0], [1.0, 2.0], [3.0, 4.0]])
        y = np.array([1.0, 2.0, 3.0])
        with pytest.raises(SolverError):
            kridge.fit(X, y, mu=0.0, sigma=1.0)

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            kridge.fit(np.array([[1.0]]), np.array([np.nan]), mu=0.1)
        with pytest.raises(DomainError):
            kridge.fit(np.array([[1.0]]), np.array([1.0]), mu=-1.0)
        with pytest.raises(DimensionError):
            kridge.fit(np.ones((3, 2)), np.ones(4), mu=0.1)


class TestPredict:
    def test_training_points_roundtrip(self):
        rng = np.random.default_rng(2)
        X, y = random_problem(rng, n=60)
        model = kridge.fit(X, y, mu=1e-10, sigma=0.5)
        for i in range(0, 60, 7):
            assert abs(kridge.predict(model, X[i]) - y[i]) < 1e-6

    def test_far_point_bounded(self):
        rng = np.random.default_rng(3)
        X, y = random_problem(rng)
        model = kridge.fit(X, y, mu=1e-3, sigma=0.5)
        far = np.full(3, 1e6)
        pred = kridge.predict(model, far)
        # kernel terms vanish except through the constant feature; the
        # standardized prediction is bounded by the weight mass
        bound = np.sum(np.abs(model.weights)) * model.y_scale + abs(model.y_mean)
        assert abs(pred) <= bound + 1e-9

    def test_linearity_in_targets(self):
        rng = np.random.default_rng(4)
        X, y = random_problem(rng)
        q = rng.uniform(size=(15, 3))
        m1 = kridge.fit(X, y, mu=0.1, sigma=0.7)
        m2 = kridge.fit(X, 2.0 * y, mu=0.1, sigma=0.7)
        p1 = kridge.predict_batch(m1, q)
        p2 = kridge.predict_batch(m2, q)
        np.testing.assert_allclose(p2, 2.0 * p1, rtol=1e-10)

    def test_dimension_mismatch(self):
        model = kridge.fit(np.ones((2, 3)) + np.arange(2)[:, None], np.array([1.0, 2.0]), mu=0.1)
        with pytest.raises(DimensionError):
            kridge.predict(model, np.ones(4))


class TestInvariants:
    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(5)
        X, y = random_problem(rng, n=30)
        q = rng.uniform(size=(10, 3))
        perm = rng.permutation(30)
        m1 = kridge.fit(X, y, mu=0.05, sigma=0.6)
        m2 = kridge.fit(X[perm], y[perm], mu=0.05, sigma=0.6)
        np.testing.assert_allclose(
            kridge.predict_batch(m1, q), kridge.predict_batch(m2, q), atol=1e-12
        )

    def test_default_sigma_is_silverman_of_standardized(self):
        from smdisagg.itclust import silverman_sigma

        rng = np.random.default_rng(6)
        X, y = random_problem(rng, n=25)
        model = kridge.fit(X, y, mu=0.1)
        Xs = (X - X.mean(axis=0)) / X.std(axis=0)
        assert abs(model.sigma - silverman_sigma(Xs)) < 1e-12
