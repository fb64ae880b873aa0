import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdpmix.expfam import (
    BernoulliStats,
    DiagGaussianStats,
    TransformPriorStats,
    stats_allclose,
)

from oracles import (
    bernoulli_predictive_quad,
    beta_mode_grid,
    gaussian_predictive_quad,
    invgamma_mode_grid,
    nig_mode_grid,
    zero_gaussian_predictive_quad,
)


class TestUpdates:
    def test_bernoulli_first_insert(self):
        s = BernoulliStats(3, a=1, b=1)
        s.add([1, 0, 1])
        assert s.count == 1
        assert np.array_equal(s.ones, [1.0, 0.0, 1.0])

    def test_add_remove_restores_empty_exactly(self):
        s = BernoulliStats(3)
        s.add([1, 0, 1])
        s.remove([1, 0, 1])
        assert s.count == 0
        assert np.array_equal(s.ones, np.zeros(3))

    def test_gauss_hand_accumulation(self):
        # hand accumulation: 1 + 3 = 4, 1 + 9 = 10, cross-checked from scratch
        g = DiagGaussianStats(1)
        g.add([1.0])
        g.add([3.0])
        assert np.allclose(g.sum, [4.0])
        assert np.allclose(g.sumsq, [10.0])
        fresh = DiagGaussianStats(1)
        for x in ([1.0], [3.0]):
            fresh.add(x)
        assert stats_allclose(g, fresh, rtol=0)

    def test_dimension_mismatch(self):
        s = BernoulliStats(3)
        with pytest.raises(ValueError):
            s.add([1, 0])

    def test_remove_below_zero(self):
        s = DiagGaussianStats(2)
        with pytest.raises(ValueError):
            s.remove([0.0, 0.0])

    def test_bernoulli_range_check(self):
        s = BernoulliStats(1)
        with pytest.raises(ValueError):
            s.add([1.5])

    @pytest.mark.parametrize("cls", [BernoulliStats, DiagGaussianStats, TransformPriorStats])
    def test_remove_any_order_restores(self, cls):
        rng = np.random.default_rng(7)
        s = cls(4)
        if cls is BernoulliStats:
            items = (rng.random((9, 4)) > 0.5).astype(float)
        else:
            items = rng.normal(0, 2, (9, 4))
        start = s.copy()
        for x in items:
            s.add(x)
        for j in rng.permutation(9):
            s.remove(items[j])
        assert s.count == 0
        assert stats_allclose(s, start, rtol=1e-12, atol=1e-9)

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_gauss_add_remove_property(self, values):
        s = TransformPriorStats(len(values))
        s.add(values)
        s.remove(values)
        assert s.count == 0
        assert np.allclose(s.sumsq, 0.0, atol=1e-9)


class TestPredictive:
    def test_bernoulli_prior_predictive(self):
        s = BernoulliStats(1, a=1, b=1)
        assert s.logpredictive([1.0]) == pytest.approx(math.log(0.5), abs=1e-12)

    def test_bernoulli_posterior_predictive_matches_quadrature(self):
        # 3 ones and 1 zero at a single pixel; P(next=1) = 4/6
        s = BernoulliStats(1, a=1, b=1)
        for v in (1, 1, 1, 0):
            s.add([float(v)])
        got = s.logpredictive([1.0])
        assert got == pytest.approx(math.log(4 / 6), abs=1e-12)
        oracle = bernoulli_predictive_quad(4, 3.0, 1.0, 1.0, 1.0)
        assert got == pytest.approx(oracle, abs=1e-8)

    def test_gauss_prior_predictive_is_student_t(self):
        s = DiagGaussianStats(1, mu0=0.3, kappa0=0.5, a0=2.0, b0=0.7)
        x = 1.1
        got = s.logpredictive([x])
        oracle = gaussian_predictive_quad(0, 0.0, 0.0, 0.3, 0.5, 2.0, 0.7, x)
        assert got == pytest.approx(oracle, abs=1e-6)

    @pytest.mark.parametrize("case", range(20))
    def test_bernoulli_predictive_quadrature_agreement(self, case):
        rng = np.random.default_rng(100 + case)
        a, b = rng.uniform(0.3, 3.0, 2)
        s = BernoulliStats(1, a=a, b=b)
        n = rng.integers(0, 7)
        ones = 0.0
        for _ in range(n):
            v = float(rng.integers(0, 2))
            ones += v
            s.add([v])
        x = float(rng.integers(0, 2))
        oracle = bernoulli_predictive_quad(int(n), ones, a, b, x)
        assert s.logpredictive([x]) == pytest.approx(oracle, abs=1e-6)

    @pytest.mark.parametrize("case", range(20))
    def test_gauss_predictive_quadrature_agreement(self, case):
        rng = np.random.default_rng(200 + case)
        mu0 = rng.normal()
        kappa0 = rng.uniform(0.05, 2.0)
        a0 = rng.uniform(0.8, 4.0)
        b0 = rng.uniform(0.1, 2.0)
        s = DiagGaussianStats(1, mu0=mu0, kappa0=kappa0, a0=a0, b0=b0)
        n = int(rng.integers(0, 7))
        xs = rng.normal(0, 1.5, n)
        for x in xs:
            s.add([x])
        xq = float(rng.normal(0, 2.0))
        oracle = gaussian_predictive_quad(
            n, xs.sum(), (xs**2).sum(), mu0, kappa0, a0, b0, xq
        )
        assert s.logpredictive([xq]) == pytest.approx(oracle, abs=1e-6)

    @pytest.mark.parametrize("case", range(20))
    def test_transform_predictive_quadrature_agreement(self, case):
        rng = np.random.default_rng(300 + case)
        aT = rng.uniform(1.0, 4.0)
        bT = rng.uniform(0.1, 2.0)
        s = TransformPriorStats(1, aT=aT, bT=bT)
        n = int(rng.integers(0, 7))
        xs = rng.normal(0, 0.8, n)
        for x in xs:
            s.add([x])
        xq = float(rng.normal(0, 1.0))
        oracle = zero_gaussian_predictive_quad(n, (xs**2).sum(), aT, bT, xq)
        assert s.logpredictive([xq]) == pytest.approx(oracle, abs=1e-6)

    def test_multidim_predictive_sums_dimensions(self):
        s = DiagGaussianStats(3)
        per_dim = [DiagGaussianStats(1) for _ in range(3)]
        rng = np.random.default_rng(5)
        for x in rng.normal(0, 1, (4, 3)):
            s.add(x)
            for d in range(3):
                per_dim[d].add([x[d]])
        xq = rng.normal(0, 1, 3)
        want = sum(per_dim[d].logpredictive([xq[d]]) for d in range(3))
        assert s.logpredictive(xq) == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize(
        "make",
        [
            lambda: BernoulliStats(2),
            lambda: DiagGaussianStats(2, mu0=0.2),
            lambda: TransformPriorStats(2),
        ],
    )
    def test_exchangeability(self, make):
        rng = np.random.default_rng(11)
        if isinstance(make(), BernoulliStats):
            items = (rng.random((8, 2)) > 0.4).astype(float)
        else:
            items = rng.normal(0, 1, (8, 2))

        def joint_ll(order):
            s = make()
            total = 0.0
            for j in order:
                total += s.logpredictive(items[j])
                s.add(items[j])
            return total

        base = joint_ll(range(8))
        for _ in range(5):
            assert joint_ll(rng.permutation(8)) == pytest.approx(base, abs=1e-9)


class TestModes:
    def test_bernoulli_mode_grid(self):
        # 3 ones of 4 with a Beta(1,1) prior: posterior Beta(4, 2)
        s = BernoulliStats(1, a=1, b=1)
        for v in (1, 1, 1, 0):
            s.add([float(v)])
        assert s.mode()[0] == pytest.approx(0.75, abs=1e-12)
        assert s.mode()[0] == pytest.approx(beta_mode_grid(4, 2), abs=1e-4)

    def test_bernoulli_mode_clamps(self):
        s = BernoulliStats(1, a=1, b=1)
        s.add([1.0])
        # formula gives 1.0 exactly; clamped inside (0, 1)
        assert 0 < s.mode()[0] < 1
        empty = BernoulliStats(1, a=1, b=1)
        assert empty.mode()[0] == pytest.approx(0.5)

    def test_transform_prior_mode(self):
        s = TransformPriorStats(1, aT=2.0, bT=1.0)
        assert s.mode()[0] == pytest.approx(1 / 3, abs=1e-12)
        assert s.mode()[0] == pytest.approx(invgamma_mode_grid(2.0, 1.0), abs=1e-4)

    def test_gauss_mode_symmetric_data(self):
        s = DiagGaussianStats(1, mu0=0.0)
        s.add([-1.7])
        s.add([1.7])
        mean, _ = s.mode()
        assert mean[0] == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("case", range(6))
    def test_gauss_mode_grid(self, case):
        rng = np.random.default_rng(400 + case)
        s = DiagGaussianStats(1, mu0=rng.normal(), kappa0=0.3, a0=1.5, b0=0.4)
        for x in rng.normal(1.0, 1.0, int(rng.integers(2, 6))):
            s.add([x])
        kappa_n, mu_n, a_n, b_n = s.posterior()
        want_mu, want_var = nig_mode_grid(mu_n[0], kappa_n, a_n, b_n[0])
        mean, var = s.mode()
        assert mean[0] == pytest.approx(want_mu, abs=2e-2)
        assert var[0] == pytest.approx(want_var, rel=3e-2)

    @pytest.mark.parametrize("case", range(6))
    def test_transform_mode_grid(self, case):
        rng = np.random.default_rng(500 + case)
        aT = rng.uniform(1.5, 3.0)
        bT = rng.uniform(0.2, 1.0)
        s = TransformPriorStats(1, aT=aT, bT=bT)
        for x in rng.normal(0, 0.7, int(rng.integers(0, 6))):
            s.add([x])
        a_n, b_n = s.posterior()
        assert s.mode()[0] == pytest.approx(
            invgamma_mode_grid(a_n, b_n[0]), rel=1e-3
        )

    @pytest.mark.parametrize("case", range(6))
    def test_bernoulli_mode_grid_random(self, case):
        rng = np.random.default_rng(600 + case)
        a, b = rng.uniform(1.1, 3.0, 2)
        s = BernoulliStats(1, a=a, b=b)
        n = int(rng.integers(1, 8))
        ones = 0.0
        for _ in range(n):
            v = float(rng.integers(0, 2))
            ones += v
            s.add([v])
        want = beta_mode_grid(a + ones, b + n - ones)
        assert s.mode()[0] == pytest.approx(want, abs=1e-4)


class TestInvariants:
    def test_gauss_sumsq_bound(self):
        rng = np.random.default_rng(3)
        s = DiagGaussianStats(3)
        for x in rng.normal(0, 1, (10, 3)):
            s.add(x)
        bound = s.sum**2 / s.count
        assert np.all(s.sumsq >= bound - 1e-9 * np.abs(bound))

    def test_zero_dim_transform_prior(self):
        s = TransformPriorStats(0)
        s.add(np.zeros(0))
        assert s.logpredictive(np.zeros(0)) == 0.0
        assert s.mode().shape == (0,)
