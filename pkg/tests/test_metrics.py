import numpy as np
import pytest

from smdisagg.errors import DimensionError, DomainError
from smdisagg.grid import Grid, VarTag
from smdisagg import metrics


def rmse_two_pass_oracle(a, b):
    total = 0.0
    count = 0
    for x, y in zip(a.ravel(), b.ravel()):
        total += (x - y) ** 2
        count += 1
    return (total / count) ** 0.5


def gaussian_kl(mu1, s1, mu2, s2):
    return np.log(s2 / s1) + (s1**2 + (mu1 - mu2) ** 2) / (2 * s2**2) - 0.5


class TestRmse:
    def test_identical_grids(self):
        g = Grid(np.random.default_rng(0).uniform(size=(4, 4)), 1000.0, VarTag.SM)
        assert metrics.rmse(g, g) == 0.0

    def test_constant_offset(self):
        t = Grid(np.zeros((5, 5)), 1000.0, VarTag.SM)
        e = Grid(np.full((5, 5), 0.02), 1000.0, VarTag.SM)
        assert abs(metrics.rmse(e, t) - 0.02) < 1e-15

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.uniform(size=(2, 8, 8))
        assert abs(metrics.rmse(a, b) - rmse_two_pass_oracle(a, b)) < 1e-12

    def test_mask_and_errors(self):
        rng = np.random.default_rng(2)
        a, b = rng.uniform(size=(2, 6, 6))
        mask = np.zeros((6, 6), dtype=bool)
        mask[:3] = True
        got = metrics.rmse(a, b, mask=mask)
        assert abs(got - rmse_two_pass_oracle(a[:3], b[:3])) < 1e-12
        with pytest.raises(DomainError):
            metrics.rmse(a, b, mask=np.zeros((6, 6), dtype=bool))
        with pytest.raises(DimensionError):
            metrics.rmse(a, b[:3])

    def test_sign_symmetry_and_permutation(self):
        rng = np.random.default_rng(3)
        a, b = rng.uniform(size=(2, 5, 5))
        assert metrics.rmse(a, b) == metrics.rmse(b, a)
        perm = rng.permutation(25)
        assert abs(
            metrics.rmse(a.ravel()[perm].reshape(5, 5), b.ravel()[perm].reshape(5, 5))
            - metrics.rmse(a, b)
        ) < 1e-12

    def test_by_landcover(self):
        est = Grid(np.full((4, 4), 0.2), 1000.0, VarTag.SM)
        tru = Grid(np.full((4, 4), 0.25), 1000.0, VarTag.SM)
        lc_vals = np.zeros((4, 4))
        lc_vals[:2] = 1
        lc = Grid(lc_vals, 1000.0, VarTag.LC)
        out = metrics.rmse_by_landcover(est, tru, lc)
        assert set(out) == {0, 1}
        assert abs(out[0] - 0.05) < 1e-12


class TestKld:
    def test_identical_samples_zero(self):
        x = np.random.default_rng(4).uniform(size=1000)
        assert metrics.kld(x, x, bins=40) < 1e-12

    def test_gaussian_closed_form(self):
        rng = np.random.default_rng(5)
        a = rng.normal(0.0, 1.0, 100_000)
        b = rng.normal(0.5, 1.0, 100_000)
        want = gaussian_kl(0.5, 1.0, 0.0, 1.0)  # KL(p_b || p_a), truth=b
        got = metrics.kld(a, b, bins=50)
        assert abs(got - want) / want < 0.15

    def test_nonnegative_always(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            a = rng.uniform(size=rng.integers(10, 200))
            b = rng.uniform(size=rng.integers(10, 200)) ** 2
            assert metrics.kld(a, b, bins=20) >= 0.0

    def test_direction_flag(self):
        rng = np.random.default_rng(7)
        a = rng.normal(0, 1, 5000)
        b = rng.normal(1, 2, 5000)
        fwd = metrics.kld(a, b, bins=30, direction="truth_vs_est")
        rev = metrics.kld(a, b, bins=30, direction="est_vs_truth")
        assert fwd != rev

    def test_too_few_samples(self):
        with pytest.raises(DomainError):
            metrics.kld(np.ones(5), np.ones(50))


class TestZtest:
    def test_all_zero_errors_pass(self):
        passed, stat = metrics.ztest_threshold(np.zeros(50), 0.04)
        assert passed

    def test_large_errors_fail(self):
        passed, stat = metrics.ztest_threshold(np.full(50, 0.1), 0.04)
        assert not passed

    def test_small_noise_passes_nearly_always(self):
        wins = 0
        for seed in range(100):
            errs = np.abs(np.random.default_rng(seed).normal(0, 0.01, 200))
            passed, _ = metrics.ztest_threshold(errs, 0.04)
            wins += passed
        assert wins > 99

    def test_small_sample_warns(self):
        with pytest.warns(UserWarning):
            metrics.ztest_threshold(np.full(10, 0.001) + np.arange(10) * 1e-4, 0.04)


class TestErrorFraction:
    def test_exact_match(self):
        g = np.random.default_rng(8).uniform(size=(5, 5))
        assert metrics.error_fraction_below(g, g, 0.001) == 1.0

    def test_half_and_half(self):
        t = np.zeros(10)
        e = np.concatenate([np.zeros(5), np.full(5, 0.05)])
        assert metrics.error_fraction_below(e, t, 0.02) == 0.5
