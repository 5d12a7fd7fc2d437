# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest

from services.errors import BoundInapplicable, InvalidDimension, InvalidParameter, UndefinedMetric
from services.evaluation import (
    adaptation_experiment, auc, beta_min_bound, correlation_matrix, detection_rate,
    empirical_beta_min, pricing_experiment, regret_harness, rmse,
)
from services.simgen import DriftConfig, PricingConfig, SimStream


class TestMetrics:
    def test_detection_rate(self):
        assert detection_rate([1, 2, 7], [2, 7, 9]) == pytest.approx(2 / 3)
        assert detection_rate([], [4]) == 0.0

    def test_detection_rate_needs_truth(self):
        with pytest.raises(UndefinedMetric):
            detection_rate([1], [])

    def test_rmse(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
        with pytest.raises(InvalidDimension):
            rmse([1.0], [1.0, 2.0])

    def test_auc_known_value(self):
        assert auc([0.1, 0.4, 0.35, 0.8], [-1, -1, 1, 1]) == pytest.approx(0.75)

    def test_auc_perfect_and_ties(self):
        assert auc([0.1, 0.2, 0.9], [-1, 1, 1]) == 1.0
        assert auc([1.0, 1.0], [1, -1]) == 0.5

    def test_auc_monotone_invariance(self, rng):
        s = rng.standard_normal(200)
        lab = np.where(s + rng.standard_normal(200) > 0, 1, -1)
        assert auc(np.exp(3 * s) + 2, lab) == pytest.approx(auc(s, lab))

    def test_auc_one_class(self):
        with pytest.raises(UndefinedMetric):
            auc([0.2, 0.3], [1, 1])


def _oracle_regret(X, y, n0, cps, ridge=1.0):
    p = X.shape[1]
    cum, out = 0.0, []
    for i in range(X.shape[0]):
        A = X[:i].T @ X[:i]
        if i < n0:
            A = A + ridge * np.eye(p)
        beta = np.linalg.solve(A, X[:i].T @ y[:i])
        cum += (y[i] - X[i] @ beta) ** 2
        m = i + 1
        if m in cps:
            best = np.linalg.lstsq(X[:m], y[:m], rcond=None)[0]
            off = np.sum((y[:m] - X[:m] @ best) ** 2)
            out.append((cum - off) / m)
    return np.array(out)


class TestRegret:
    def test_matches_brute_force(self):
        st = SimStream(seed=21)
        X = st.design(600, 10)
        y = X @ np.linspace(-1, 1, 10) + st.noise_draw(600)
        cps = [50, 120, 300, 600]
        trace = regret_harness(X, y, n0=50, checkpoints=cps)
        np.testing.assert_allclose(trace.regret, _oracle_regret(X, y, 50, set(cps)), rtol=1e-6)
        assert np.all(trace.regret >= -1e-9)

    def test_refactorization_keeps_exactness(self):
        st = SimStream(seed=22)
        X = st.design(400, 6)
        y = X @ np.arange(1.0, 7.0) + st.noise_draw(400)
        a = regret_harness(X, y, n0=30, checkpoints=[100, 400], refactor_every=7)
        b = regret_harness(X, y, n0=30, checkpoints=[100, 400], refactor_every=10_000)
        np.testing.assert_allclose(a.cumulative_loss, b.cumulative_loss, rtol=1e-8)

    def test_noiseless_loss_stops_growing(self):
        st = SimStream(seed=23, noise=False)
        X = st.design(500, 8)
        y = X @ np.ones(8)
        trace = regret_harness(X, y, n0=40, checkpoints=[40, 100, 250, 500])
        np.testing.assert_allclose(trace.cumulative_loss, trace.cumulative_loss[0], rtol=1e-8)
        np.testing.assert_allclose(trace.offline_loss, 0.0, atol=1e-12)

    def test_sparse_mode(self):
        st = SimStream(seed=24)
        X = st.design(800, 10)
        beta = np.zeros(10)
        beta[[2, 7]] = 2.0
        y = X @ beta + st.noise_draw(800)
        trace = regret_harness(X, y, k=2, n0=60, checkpoints=[100, 400, 800])
        df = trace.to_frame()
        assert list(df.columns) == ["n", "cumulative_loss", "offline_loss", "regret"]
        assert np.all(np.isfinite(trace.regret))
        assert trace.regret[-1] < trace.regret[0]

    def test_default_warmup(self):
        st = SimStream(seed=25)
        X = st.design(5000, 3)
        y = X.sum(axis=1) + st.noise_draw(5000)
        trace = regret_harness(X, y)
        assert trace.n0 == math.ceil(400 * math.log(5000))
        assert trace.checkpoints[0] >= trace.n0

    @pytest.mark.parametrize("kw", [
        dict(n0=5), dict(n0=1000), dict(k=0), dict(checkpoints=[100, 90]), dict(checkpoints=[5, 100]),
    ])
    def test_bad_arguments(self, kw):
        st = SimStream(seed=26)
        X = st.design(200, 6)
        y = st.noise_draw(200)
        args = dict(n0=20)
        args.update(kw)
        with pytest.raises(InvalidParameter):
            regret_harness(X, y, **args)


class TestBounds:
    def test_prop2_value(self):
        val = beta_min_bound("prop2", 4096, 1000, lam=0.25)
        assert val == pytest.approx(8 * math.sqrt(math.log(1000) / 4096))

    def test_prop2_from_sigma(self):
        S = correlation_matrix(20)
        val = beta_min_bound("prop2", 1024, 20, Sigma=S)
        assert val == pytest.approx(4 / math.sqrt(0.5) * math.sqrt(math.log(20) / 1024))

    def test_thm1_identity(self):
        val = beta_min_bound("thm1", 4096, 64)
        lam = 0.9 - math.sqrt(64 / 4096)
        assert val == pytest.approx(4 / lam * math.sqrt(math.log(64) / 4096))

    def test_thm1_inapplicable(self):
        with pytest.raises(BoundInapplicable):
            beta_min_bound("thm1", 256, 256)

    def test_monotone(self):
        by_n = [beta_min_bound("thm1", n, 64) for n in (1024, 2048, 4096)]
        by_p = [beta_min_bound("thm1", 4096, p) for p in (32, 64, 128)]
        assert by_n == sorted(by_n, reverse=True)
        assert by_p == sorted(by_p)

    def test_exponent_relaxes(self):
        assert beta_min_bound("prop2", 4096, 64, lam=1.0, alpha_exp=0.97) > \
            beta_min_bound("prop2", 4096, 64, lam=1.0)

    def test_unknown_kind(self):
        with pytest.raises(InvalidParameter):
            beta_min_bound("thm9", 100, 10)

    def test_correlation_matrix(self):
        S = correlation_matrix(3, 1.0)
        np.testing.assert_allclose(np.diag(S), 1.0)
        assert S[0, 2] == pytest.approx(0.5)
        np.testing.assert_allclose(correlation_matrix(3, 0.0), np.eye(3))

    def test_empirical_below_theory(self):
        emp = empirical_beta_min(512, 32, 4, seeds=20, n_jobs=1)
        bound = beta_min_bound("prop2", 512, 32, Sigma=correlation_matrix(32))
        assert 0 < emp < bound

    def test_empirical_unreachable(self):
        with pytest.raises(InvalidParameter):
            empirical_beta_min(512, 32, 4, seeds=5, hi=1e-3, n_jobs=1)


class TestAdaptation:
    def test_drift_tracking(self):
        cfg = DriftConfig(T_period=100.0, batch=200)
        res = adaptation_experiment(cfg, alpha=0.2, steps=200, seed=1, eval_last=100)
        assert len(res.trace) == 199
        assert list(res.trace.columns) == [
            "t", "rmse_adaptive", "rmse_static", "beta_true", "beta_adaptive", "beta_static",
        ]
        assert res.rmse_adaptive < 0.7 * res.rmse_static

    def test_uniform_alpha_matches_static(self):
        cfg = DriftConfig(T_period=100.0, batch=150)
        res = adaptation_experiment(cfg, alpha=0.0, steps=20, seed=2, eval_last=0)
        np.testing.assert_allclose(res.trace["rmse_adaptive"], res.trace["rmse_static"])

    def test_bad_alpha(self):
        with pytest.raises(InvalidParameter):
            adaptation_experiment(alpha=1.0, steps=2)

    def test_pricing_recovers_gamma(self):
        cfg = PricingConfig(T_period=200.0, batch=200)
        res = pricing_experiment(cfg, alpha=0.05, steps=150, seed=3, eval_last=50)
        assert res.extra["gamma_adaptive"] == pytest.approx(cfg.gamma, abs=0.05)
        assert res.extra["gamma_static"] == pytest.approx(cfg.gamma, abs=0.05)
        assert res.rmse_adaptive < res.rmse_static
