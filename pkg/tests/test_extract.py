# -*- coding: utf-8 -*-
import numpy as np
import pandas as pd
import pytest

from conftest import make_data, moments_of, raw_standardized, raw_top_k
from services.config import get_settings
from services.errors import Diverged, InvalidParameter, InvalidSparsity, ParseError
from services.extract import (
    FsaSchedule, PenaltySpec, _top_k, extract_model, lambda_grid, lambda_path, ofsa, olasso, oelnet,
    ols, ols_th, omcp, penalized_gd, predict, predict_class, read_model, solution_path,
    threshold_operator, tune_lambda_for_sparsity, write_model,
)
from services.linsolve import SpdSystem, solve_ridge, solve_spd
from services.moments import exponential
from services.standardize import standardize


# ---- oráculos na matriz bruta -------------------------------------------------------------------
def fsa_oracle(S, s, k, T, mu, eta):
    r = len(s)
    active = np.arange(r)
    beta = np.zeros(r)
    for t in range(1, T + 1):
        Sa, sa = S[np.ix_(active, active)], s[active]
        beta = beta - eta * (Sa @ beta - sa)
        frac = max(0.0, (T - t) / (t * mu + T))
        m = k + int(np.floor((r - k) * frac + 1e-9))
        if m < active.size:
            keep = raw_top_k(beta, m)
            active, beta = active[keep], beta[keep]
    return active, np.linalg.solve(S[np.ix_(active, active)], s[active])


def prox_oracle(S, s, lam, eta, iters, family="lasso", b=3.0, tol=1e-9, l2=0.0):
    beta = np.zeros(len(s))
    thr = eta * lam
    for _ in range(iters):
        z = beta - eta * (S @ beta - s + l2 * beta)
        if family == "mcp":
            a = np.abs(z)
            new = np.where(a <= thr, 0.0, np.where(a <= b * thr, (z - thr * np.sign(z)) / (1 - 1 / b), z))
        else:
            new = np.sign(z) * np.maximum(np.abs(z) - thr, 0.0)
        done = np.max(np.abs(new - beta)) < tol
        beta = new
        if done:
            break
    return beta


def lasso_objective(S, s, beta, lam):
    return 0.5 * beta @ S @ beta - beta @ s + lam * np.abs(beta).sum()


@pytest.fixture
def sm_small(small_data):
    X, y, _ = small_data
    return standardize(moments_of(X, y))


@pytest.fixture
def sm_clean(rng):
    X = rng.standard_normal((400, 8))
    y = 2.0 * X[:, 1] - 2.0 * X[:, 4] + 0.3 * rng.standard_normal(400)
    return standardize(moments_of(X, y))


# ---- equivalência momentos ↔ dados brutos ---------------------------------------------------------
class TestRawEquivalence:
    @pytest.mark.parametrize("seed", range(50))
    def test_every_extractor(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(60, 200))
        p = int(rng.integers(4, 20))
        X, y, _ = make_data(rng, n=n, p=p, support=(0, p - 1))
        sm = standardize(moments_of(X, y))
        S, s, _, _ = raw_standardized(X, y)
        k = max(1, p // 3)

        np.testing.assert_allclose(ols(sm).beta_std, np.linalg.solve(S, s), rtol=1e-8, atol=1e-8)

        idx = raw_top_k(np.linalg.solve(S, s), k)
        m = ols_th(sm, k)
        assert list(m.support) == list(idx)
        np.testing.assert_allclose(m.beta_std, np.linalg.solve(S[np.ix_(idx, idx)], s[idx]),
                                   rtol=1e-8, atol=1e-8)

        eta = 0.9 / np.linalg.eigvalsh(S)[-1]
        active, refit = fsa_oracle(S, s, k, 50, 10.0, eta)
        m = ofsa(sm, FsaSchedule(k=k, T=50, mu=10.0, eta=eta))
        assert list(m.support) == sorted(active)
        order = np.argsort(active)
        np.testing.assert_allclose(m.beta_std, refit[order], rtol=1e-8, atol=1e-8)

        lam = 0.3 * np.max(np.abs(s))
        for family, l2 in (("lasso", 0.0), ("mcp", 0.0), ("elasticnet", 0.5)):
            ref = prox_oracle(S, s, lam, eta, 300, family, l2=l2)
            got = penalized_gd(sm, PenaltySpec(family, lam, l2_mix=l2), iters=300, eta=eta)
            nz = np.flatnonzero(ref)
            assert list(got.support) == list(nz)
            np.testing.assert_allclose(got.beta_prefit, ref[nz], rtol=1e-8, atol=1e-8)

    def test_lasso_objective_matches_converged_oracle(self, rng):
        X, y, _ = make_data(rng, n=60, p=8, support=(2, 5))
        sm = standardize(moments_of(X, y))
        S, s, _, _ = raw_standardized(X, y)
        lam = 0.1 * np.max(np.abs(s))
        eta = 0.9 / np.linalg.eigvalsh(S)[-1]
        ref = prox_oracle(S, s, lam, eta, 200_000, tol=1e-14)
        got = penalized_gd(sm, PenaltySpec("lasso", lam), iters=20_000, eta=eta)
        full = np.zeros(sm.r)
        full[got.support] = got.beta_prefit
        assert lasso_objective(S, s, full, lam) == pytest.approx(lasso_objective(S, s, ref, lam), abs=1e-6)


# ---- OLS / OLS-th --------------------------------------------------------------------------------------
class TestOlsTh:
    def test_selection_rule(self):
        assert list(_top_k(np.array([3.0, 0.1, -2.0]), 2)) == [0, 2]

    def test_ties_lower_index_wins(self):
        assert list(_top_k(np.array([1.0, -2.0, 2.0, 0.5]), 1)) == [1]

    def test_selection_scale_free(self, rng):
        v = rng.standard_normal(30)
        for c in (1e-6, 0.5, 1e6):
            assert list(_top_k(c * v, 7)) == list(_top_k(v, 7))

    def test_full_k_equals_ols(self, sm_small):
        np.testing.assert_allclose(ols_th(sm_small, sm_small.r).beta_std, ols(sm_small).beta_std, rtol=1e-12)

    def test_recovers_true_support(self, small_data, sm_small):
        _, _, beta = small_data
        assert list(ols_th(sm_small, 2).support) == list(np.flatnonzero(beta))

    @pytest.mark.parametrize("k", [0, 9])
    def test_k_out_of_range(self, sm_small, k):
        with pytest.raises(InvalidSparsity):
            ols_th(sm_small, k)

    def test_ridge_when_p_exceeds_n(self, rng):
        X, y, _ = make_data(rng, n=10, p=15, support=(0, 3))
        sm = standardize(moments_of(X, y))
        m = ols_th(sm, 3)
        assert m.size == 3
        assert np.all(np.isfinite(m.beta_std))

    def test_adapted_moments_use_effective_n(self, rng):
        X, y, _ = make_data(rng, n=3000, p=50, support=(3, 17, 40))
        sm = standardize(moments_of(X, y, exponential(0.05)))
        assert sm.effective_n == pytest.approx(20.0)
        assert sm.effective_n < sm.r
        S, s = sm.S_xx_std, sm.S_xy_std
        ridge = solve_ridge(SpdSystem(S, s), 1e-3 * np.trace(S) / S.shape[0])
        plain = solve_spd(SpdSystem(S, s))
        m = ols_th(sm, 5)
        np.testing.assert_array_equal(m.support, raw_top_k(ridge, 5))
        np.testing.assert_allclose(m.beta_prefit, ridge[m.support], rtol=1e-10)
        assert not np.allclose(m.beta_prefit, plain[m.support], rtol=1e-9, atol=0.0)

    def test_uniform_moments_skip_ridge(self, rng):
        X, y, _ = make_data(rng, n=400, p=10)
        sm = standardize(moments_of(X, y))
        plain = solve_spd(SpdSystem(sm.S_xx_std, sm.S_xy_std))
        m = ols_th(sm, 3)
        np.testing.assert_allclose(m.beta_prefit, plain[m.support], rtol=1e-12)


# ---- OFSA -------------------------------------------------------------------------------------------------
class TestOfsa:
    def test_schedule_endpoints(self):
        sched = FsaSchedule(k=100, T=100, mu=10.0)
        assert sched.m_t(1, 1000) == 910
        assert sched.m_t(100, 1000) == 100
        assert sched.m_t(150, 1000) == 100

    def test_schedule_monotone(self):
        sched = FsaSchedule(k=5, T=40, mu=3.0)
        vals = [sched.m_t(t, 200) for t in range(0, 41)]
        assert vals[0] == 200
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_support_size_is_k(self, sm_small):
        m = ofsa(sm_small, FsaSchedule(k=2))
        assert m.size == 2
        assert m.extra["T"] == 100

    def test_descent_with_debug_checks(self, sm_small, monkeypatch):
        monkeypatch.setenv("RAVG_DEBUG", "1")
        get_settings.cache_clear()
        m = ofsa(sm_small, FsaSchedule(k=2, T=60))
        steps = np.array(m.extra["descent"])
        assert steps.shape == (60, 2)
        assert np.all(steps[:, 1] <= steps[:, 0] + 1e-12 * np.maximum(1.0, np.abs(steps[:, 0])))

    def test_divergence_reported(self, sm_small):
        with pytest.raises(Diverged) as e:
            ofsa(sm_small, FsaSchedule(k=2, T=100, eta=1e200))
        assert e.value.eta == 1e200

    def test_bad_schedule(self):
        with pytest.raises(InvalidParameter):
            FsaSchedule(k=2, T=0)
        with pytest.raises(InvalidSparsity):
            FsaSchedule(k=0)


# ---- thresholding e penalizações -------------------------------------------------------------------------
class TestThreshold:
    @pytest.mark.parametrize("t, expected", [(0.5, 0.0), (2.0, 1.5), (5.0, 5.0), (-2.0, -1.5), (1.0, 0.0)])
    def test_mcp_branches(self, t, expected):
        assert threshold_operator(t, 1.0, PenaltySpec("mcp", 1.0, b=3.0)) == pytest.approx(expected)

    @pytest.mark.parametrize("t, expected", [(0.5, 0.0), (2.0, 1.0), (-3.0, -2.0)])
    def test_soft(self, t, expected):
        assert threshold_operator(t, 1.0, PenaltySpec("lasso", 1.0)) == pytest.approx(expected)

    def test_elastic_net_uses_soft(self):
        assert threshold_operator(2.0, 1.0, PenaltySpec("elasticnet", 1.0, l2_mix=0.5)) == pytest.approx(1.0)

    def test_negative_threshold(self):
        with pytest.raises(InvalidParameter):
            threshold_operator(1.0, -1.0, PenaltySpec("lasso", 1.0))

    def test_mcp_needs_b_above_one(self):
        with pytest.raises(InvalidParameter):
            PenaltySpec("mcp", 1.0, b=1.0)

    def test_l2_mix_only_for_elastic_net(self):
        assert PenaltySpec("lasso", 1.0, l2_mix=0.7).l2_mix == 0.0


class TestPenalized:
    def test_gradient_matches_finite_differences(self, rng):
        X, y, _ = make_data(rng, n=80, p=6)
        sm = standardize(moments_of(X, y))
        S, s = sm.S_xx_std, sm.S_xy_std
        loss = lambda b: 0.5 * b @ S @ b - b @ s  # noqa: E731
        beta = rng.standard_normal(sm.r)
        h = 1e-6
        fd = np.array([(loss(beta + h * e) - loss(beta - h * e)) / (2 * h) for e in np.eye(sm.r)])
        np.testing.assert_allclose(S @ beta - s, fd, atol=1e-6)

    def test_lambda_max_gives_empty_model(self, sm_small):
        lam = float(np.max(np.abs(sm_small.S_xy_std)))
        m = penalized_gd(sm_small, PenaltySpec("lasso", lam))
        assert m.size == 0
        assert predict(m, np.ones(sm_small.p)) == pytest.approx(sm_small.mu_y)

    @pytest.mark.parametrize("spec", [
        PenaltySpec("lasso", 0.05), PenaltySpec("elasticnet", 0.05, l2_mix=0.5), PenaltySpec("mcp", 0.05),
    ])
    def test_descent_with_debug_checks(self, sm_small, monkeypatch, spec):
        monkeypatch.setenv("RAVG_DEBUG", "1")
        get_settings.cache_clear()
        m = penalized_gd(sm_small, spec, iters=200)
        steps = np.array(m.extra["descent"])
        assert steps.shape == (m.extra["iters"], 2)
        assert np.all(steps[:, 1] <= steps[:, 0] + 1e-12 * np.maximum(1.0, np.abs(steps[:, 0])))

    def test_no_trace_without_debug(self, sm_small):
        assert "descent" not in penalized_gd(sm_small, PenaltySpec("lasso", 0.05)).extra

    def test_divergence_reported(self, sm_small):
        with pytest.raises(Diverged):
            penalized_gd(sm_small, PenaltySpec("mcp", 1e-6), iters=200, eta=1e200)


class TestLambdaGrid:
    def test_grid_endpoints(self):
        g = lambda_grid(2.0, 200, 1e-3)
        assert len(g) == 200
        assert g[0] == pytest.approx(2.0)
        assert g[-1] == pytest.approx(2e-3)
        assert np.all(np.diff(g) < 0)

    def test_lasso_path_monotone(self, rng):
        X = rng.standard_normal((500, 5))
        y = X @ np.array([2.0, -1.5, 1.0, 0.5, 0.25]) + 0.3 * rng.standard_normal(500)
        sm = standardize(moments_of(X, y))
        grid = lambda_grid(float(np.max(np.abs(sm.S_xy_std))), 60)
        counts = [int(np.count_nonzero(b)) for b in lambda_path(sm, "lasso", grid, iters=2000)]
        assert counts[0] == 0
        assert all(a <= b for a, b in zip(counts, counts[1:]))

    def test_tune_hits_target(self, small_data, sm_small):
        lam, m = tune_lambda_for_sparsity(sm_small, "lasso", 2)
        assert lam > 0
        assert m.size <= 2
        assert m.extra["nonzeros"] == m.size

    def test_k_equals_p(self, rng):
        X = rng.standard_normal((500, 5))
        y = X @ np.array([2.0, -1.5, 1.0, 0.5, 0.25]) + 0.3 * rng.standard_normal(500)
        sm = standardize(moments_of(X, y))
        _, m = tune_lambda_for_sparsity(sm, "lasso", sm.r)
        assert m.size == sm.r

    def test_wrappers(self, sm_clean):
        for fn in (olasso, oelnet, omcp):
            m = fn(sm_clean, 2)
            assert list(m.support) == [1, 4]


# ---- previsão e ficheiro de modelo ---------------------------------------------------------------------
class TestPredict:
    def test_forms_agree(self, rng, sm_small):
        m = ols_th(sm_small, 3)
        Xq = rng.standard_normal((100, sm_small.p)) * 5
        np.testing.assert_allclose(m.predict(Xq), m.predict_std(Xq), rtol=1e-10, atol=1e-10)

    def test_noiseless_refit_exact(self, rng):
        X, y, _ = make_data(rng, n=150, p=6, support=(1, 4), noise=0.0)
        m = ols_th(standardize(moments_of(X, y)), 2)
        np.testing.assert_allclose(m.predict(X), y, atol=1e-8)

    def test_classify_sign(self, sm_small):
        m = ols_th(sm_small, 2)
        x = np.zeros(sm_small.p)
        assert predict_class(m, x) == (1 if m.predict(x) >= 0 else -1)

    def test_dimension_mismatch(self, sm_small):
        from services.errors import InvalidDimension
        with pytest.raises(InvalidDimension):
            ols(sm_small).predict(np.ones(3))


class TestModelFile:
    def test_round_trip_predictions(self, tmp_path, rng, sm_small):
        m = ols_th(sm_small, 3)
        write_model(m, tmp_path / "m.txt")
        back = read_model(tmp_path / "m.txt")
        Xq = rng.standard_normal((20, sm_small.p))
        np.testing.assert_allclose(back.predict(Xq), m.predict(Xq), rtol=1e-13, atol=1e-12)
        assert back.method == "olsth"

    def test_layout(self, sm_small):
        text = write_model(ols_th(sm_small, 2)).splitlines()
        assert text[0] == "ravg-model v1"
        assert text[1] == "k 2"
        assert text[2].startswith("intercept ")
        assert len(text[-1].split()) == 5

    def test_deterministic(self, small_data):
        X, y, _ = small_data
        a = write_model(ofsa(standardize(moments_of(X, y)), FsaSchedule(k=2)))
        b = write_model(ofsa(standardize(moments_of(X, y)), FsaSchedule(k=2)))
        assert a == b

    def test_bad_header(self, tmp_path):
        (tmp_path / "m.txt").write_text("not a model\n")
        with pytest.raises(ParseError) as e:
            read_model(tmp_path / "m.txt")
        assert e.value.line == 1


class TestDispatch:
    def test_methods(self, sm_clean):
        for method in ("ols", "olsth", "ofsa", "lasso", "elnet", "mcp"):
            m = extract_model(sm_clean, method, k=2)
            assert m.size == (sm_clean.r if method == "ols" else 2)

    def test_explicit_lambda(self, sm_small):
        m = extract_model(sm_small, "lasso", lam=1e-4)
        assert m.lam == pytest.approx(1e-4)

    def test_unknown(self, sm_small):
        with pytest.raises(InvalidParameter):
            extract_model(sm_small, "scad", k=2)

    def test_solution_path_matches_per_k(self, sm_small):
        df = solution_path(sm_small, "olsth", range(1, 5))
        assert isinstance(df, pd.DataFrame)
        for k, grp in df.groupby("k"):
            m = ols_th(sm_small, int(k))
            assert list(grp["feature"]) == list(m.support)
            np.testing.assert_allclose(grp["beta_std"].to_numpy(), m.beta_std)
