# -*- coding: utf-8 -*-
"""
Avaliação:
- métricas (detection rate, RMSE, AUC)
- regret sequencial com a recursão rank-1 do OLS (ridge antes do warm-up n₀)
- limites teóricos para β_min e a procura empírica por bissecção
- experiências de adaptação (drift sinusoidal e preço dinâmico)
"""
from __future__ import annotations
from dataclasses import dataclass, field
import logging
import math

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import rankdata

from services.config import get_settings
from services.errors import BoundInapplicable, InvalidDimension, InvalidParameter, UndefinedMetric
from services.extract import ols_th, ols_th_system
from services.linsolve import SpdSystem, rank1_update_inverse, solve_spd, spd_inverse
from services.moments import UNIFORM, MomentSet, exponential, new_moments
from services.simgen import (
    DriftConfig, PricingConfig, SimStream, drift_batch, pricing_batch, pricing_coeffs, true_support,
)
from services.standardize import standardize
from utils.transform import geometric_checkpoints

logger = logging.getLogger(__name__)

__all__ = [
    "detection_rate", "rmse", "auc",
    "RegretTrace", "regret_harness",
    "correlation_matrix", "beta_min_bound", "empirical_beta_min",
    "AdaptationResult", "adaptation_experiment", "pricing_experiment",
]


# ---- métricas ----------------------------------------------------------------------------
def detection_rate(selected, truth) -> float:
    truth = {int(j) for j in np.asarray(truth).reshape(-1)}
    if not truth:
        raise UndefinedMetric("detection rate sem variáveis verdadeiras")
    sel = {int(j) for j in np.asarray(selected).reshape(-1)}
    return len(sel & truth) / len(truth)


def rmse(yhat, y) -> float:
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if yhat.shape != y.shape:
        raise InvalidDimension(f"comprimentos diferentes: {yhat.size} vs {y.size}")
    if y.size == 0:
        raise UndefinedMetric("RMSE de um vetor vazio")
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


def auc(scores, labels) -> float:
    """Estatística de Mann–Whitney; empates contam ½ (ranks médios)."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    lab = np.asarray(labels).reshape(-1)
    if s.shape != lab.shape:
        raise InvalidDimension(f"comprimentos diferentes: {s.size} vs {lab.size}")
    pos = lab > 0
    n_pos = int(pos.sum())
    n_neg = int(s.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC precisa das duas classes")
    ranks = rankdata(s, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# ---- regret ---------------------------------------------------------------------------------
@dataclass(frozen=True)
class RegretTrace:
    checkpoints: np.ndarray
    cumulative_loss: np.ndarray      # Σ_{i≤n} (y_i − x_iᵀβ_i)², β_i visto antes de z_i
    offline_loss: np.ndarray         # min_β Σ_{i≤n} (y_i − x_iᵀβ)² no prefixo
    n0: int
    k: int | None = None

    @property
    def regret(self) -> np.ndarray:
        return (self.cumulative_loss - self.offline_loss) / self.checkpoints

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "n": self.checkpoints,
            "cumulative_loss": self.cumulative_loss,
            "offline_loss": self.offline_loss,
            "regret": self.regret,
        })


def _offline_loss(X: np.ndarray, y: np.ndarray, A: np.ndarray, b: np.ndarray, k: int | None) -> float:
    if k is None:
        beta = solve_spd(SpdSystem(A, b))
    else:
        beta = ols_th_system(A, b, k)
    r = y - X @ beta
    return float(r @ r)


def regret_harness(X, y, k: int | None = None, n0: int | None = None, checkpoints=None,
                   refactor_every: int = 1000, ridge: float = 1.0) -> RegretTrace:
    """Regret de OLS sequencial (ou OLS-th com k) sobre a stream (X, y), sem intercepto.

    Antes de n₀: ridge (λI + Σxxᵀ)⁻¹ mantido por Sherman–Morrison.
    Em n₀ e a cada `refactor_every` passos: inversa refatorizada do zero.
    Com k: β_i = OLS-th do sistema do prefixo, refeito em cada checkpoint e refatorização.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidDimension(f"stream com forma {X.shape} e {y.shape[0]} respostas")
    n, p = X.shape
    if n0 is None:
        n0 = max(p + 1, int(math.ceil(400 * math.log(max(n, 2)))))
    n0 = int(n0)
    if not p < n0 <= n:
        raise InvalidParameter(f"warm-up n₀={n0} tem de estar em ({p}, {n}]")
    if k is not None and not 1 <= k <= p:
        raise InvalidParameter(f"k={k} fora de [1, {p}]")
    if refactor_every < 1 or not ridge > 0:
        raise InvalidParameter("refactor_every ≥ 1 e ridge > 0")

    if checkpoints is None:
        checkpoints = geometric_checkpoints(n0, n)
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.size == 0 or np.any(np.diff(cps) <= 0) or cps[0] <= p or cps[-1] > n:
        raise InvalidParameter(f"checkpoints têm de ser estritamente crescentes em ({p}, {n}]")
    cp_set = set(int(c) for c in cps)

    P = np.eye(p) / ridge
    beta = np.zeros(p)
    A = np.zeros((p, p))
    b = np.zeros(p)
    synced = 0                       # linhas já somadas em (A, b)
    cum = 0.0
    cum_out, off_out = [], []

    def sync(i: int):
        nonlocal A, b, synced
        if i > synced:
            Xi = X[synced:i]
            A = A + Xi.T @ Xi
            b = b + Xi.T @ y[synced:i]
            synced = i

    for i in range(n):
        # i observações já vistas
        if i >= n0 and (i - n0) % refactor_every == 0:
            sync(i)
            if k is None:
                P = spd_inverse(A)
                beta = P @ b
            else:
                beta = ols_th_system(A, b, k)
            logger.debug("regret: refatorização em n=%d", i)
        x = X[i]
        r = float(x @ beta) - y[i]
        cum += r * r
        if k is None or i < n0:
            # RLS: β ← β − P x (xᵀβ − y) com P já atualizada
            P = rank1_update_inverse(P, x)
            beta = beta - (P @ x) * r
        m = i + 1
        if m in cp_set:
            sync(m)
            if k is not None and m > n0:
                beta = ols_th_system(A, b, k)
            cum_out.append(cum)
            off_out.append(_offline_loss(X[:m], y[:m], A, b, k))

    return RegretTrace(
        checkpoints=cps, cumulative_loss=np.asarray(cum_out), offline_loss=np.asarray(off_out),
        n0=n0, k=k,
    )


# ---- limites para β_min ---------------------------------------------------------------------------
def correlation_matrix(p: int, alpha_corr: float = 1.0) -> np.ndarray:
    """Correlação do desenho α·z·1 + u: 1 na diagonal, α²/(1+α²) fora."""
    c = alpha_corr ** 2 / (1.0 + alpha_corr ** 2)
    return (1.0 - c) * np.eye(p) + c * np.ones((p, p))


def beta_min_bound(kind: str, n: float, p: int, sigma: float = 1.0, lam: float | None = None,
                   Sigma: np.ndarray | None = None, alpha_exp: float = 1.0) -> float:
    """Lado direito da condição de recuperação do suporte por OLS-th.

    prop2: 4σ/√λ · √(log p / n^α), com λ dado ou λ_min(Σ).
    thm1:  4σ/λ · √(log p / n^α), λ = 0.9·λ_min(√Σ) − ρ(Σ)·√(p/n), ρ = maior diagonal de Σ.
    """
    if n < 1 or p < 1:
        raise InvalidParameter(f"n={n}, p={p} inválidos")
    if sigma < 0:
        raise InvalidParameter(f"σ negativo: {sigma}")
    rate = math.sqrt(math.log(p) / n ** alpha_exp)

    if kind == "prop2":
        if lam is None:
            if Sigma is None:
                raise InvalidParameter("prop2 precisa de λ ou Σ")
            lam = float(np.linalg.eigvalsh(Sigma)[0])
        if not lam > 0:
            raise InvalidParameter(f"λ tem de ser > 0 (recebido {lam})")
        return 4.0 * sigma / math.sqrt(lam) * rate

    if kind == "thm1":
        if Sigma is None:
            Sigma = np.eye(p)
        Sigma = np.asarray(Sigma, dtype=np.float64)
        if Sigma.shape != (p, p):
            raise InvalidDimension(f"Σ com forma {Sigma.shape}, esperado ({p}, {p})")
        ev_min = float(np.linalg.eigvalsh(Sigma)[0])
        if not ev_min > 0:
            raise InvalidParameter("Σ tem de ser definida positiva")
        rho = float(np.max(np.diag(Sigma)))
        lam_t = 0.9 * math.sqrt(ev_min) - rho * math.sqrt(p / n)
        if not lam_t > 0:
            raise BoundInapplicable(f"λ = {lam_t:.4g} ≤ 0 para n={n}, p={p}")
        return 4.0 * sigma / lam_t * rate

    raise InvalidParameter(f"tipo de limite desconhecido: {kind!r} (prop2|thm1)")


def _beta_min_parts(seed: int, n: int, p: int, k_star: int, spacing: int,
                    alpha_corr: float) -> tuple[np.ndarray, np.ndarray]:
    """(σ_x, OLS padronizado do ruído) para uma seed; β̂(β) = β·σ_S + ε̂."""
    st = SimStream(seed=seed, alpha_corr=alpha_corr)
    X = st.design(n, p)
    eps = st.noise_draw(n)
    m = new_moments(p).update_batch(X, eps)
    sm = standardize(m)
    v = solve_spd(SpdSystem(sm.S_xx_std, sm.S_xy_std))
    return sm.sigma_x, v


def empirical_beta_min(n: int, p: int, k_star: int, seeds: int = 100, success: float = 0.99,
                       alpha_corr: float = 1.0, spacing: int | None = None, lo: float = 1e-4,
                       hi: float = 10.0, rtol: float = 0.01, base_seed: int = 0,
                       n_jobs: int | None = None) -> float:
    """Menor β com recuperação exata do suporte em ≥ `success` das seeds (bissecção em log β)."""
    spacing = spacing or min(10, p // k_star)
    if spacing < 1 or k_star * spacing > p:
        raise InvalidParameter(f"k*={k_star} não cabe em p={p}")
    truth = true_support(p, k_star, spacing)
    jobs = n_jobs or get_settings().threads
    parts = Parallel(n_jobs=jobs)(
        delayed(_beta_min_parts)(base_seed + s, n, p, k_star, spacing, alpha_corr) for s in range(seeds)
    )
    sig = np.stack([pt[0] for pt in parts])
    noise = np.stack([pt[1] for pt in parts])
    on = np.zeros(p)
    on[truth] = 1.0
    need = math.ceil(success * seeds - 1e-9)

    def ok(beta: float) -> bool:
        est = beta * sig * on + noise
        top = np.sort(np.argsort(-np.abs(est), axis=1, kind="stable")[:, :k_star], axis=1)
        hits = int(np.sum(np.all(top == truth, axis=1)))
        return hits >= need

    if not ok(hi):
        raise InvalidParameter(f"β={hi} ainda não recupera o suporte; aumente hi")
    if ok(lo):
        return lo
    while hi / lo > 1.0 + rtol:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---- adaptação --------------------------------------------------------------------------------------
@dataclass
class AdaptationResult:
    trace: pd.DataFrame
    rmse_adaptive: float
    rmse_static: float
    extra: dict = field(default_factory=dict)


def _coef(model, j: int) -> float:
    hit = np.flatnonzero(model.support == j)
    return float(model.beta_orig[hit[0]]) if hit.size else 0.0


def _track(batches, p: int, k: int, alpha: float, watch: int, eval_last: int) -> AdaptationResult:
    """Avalia o modelo atual no lote novo antes de o juntar aos momentos."""
    mode = exponential(alpha) if alpha > 0 else UNIFORM
    live: MomentSet = new_moments(p, mode)
    static: MomentSet = new_moments(p)
    rows = []
    m_live = m_static = None
    for t, X, y, beta_t in batches:
        if m_live is not None:
            rows.append({
                "t": t,
                "rmse_adaptive": rmse(m_live.predict(X), y),
                "rmse_static": rmse(m_static.predict(X), y),
                "beta_true": float(beta_t[watch]),
                "beta_adaptive": _coef(m_live, watch),
                "beta_static": _coef(m_static, watch),
            })
        live.update_batch(X, y)
        static.update_batch(X, y)
        m_live = ols_th(standardize(live), k)
        m_static = ols_th(standardize(static), k)
    trace = pd.DataFrame(rows, columns=["t", "rmse_adaptive", "rmse_static",
                                        "beta_true", "beta_adaptive", "beta_static"])
    tail = trace.tail(eval_last) if eval_last else trace
    return AdaptationResult(
        trace=trace,
        rmse_adaptive=float(tail["rmse_adaptive"].mean()) if len(tail) else float("nan"),
        rmse_static=float(tail["rmse_static"].mean()) if len(tail) else float("nan"),
    )


def adaptation_experiment(drift: DriftConfig | None = None, alpha: float = 0.01, steps: int | None = None,
                          seed: int = 0, eval_last: int = 300) -> AdaptationResult:
    """Drift sinusoidal: OLS-th com momentos exponenciais (α por período) vs uniformes."""
    drift = drift or DriftConfig()
    if not 0.0 <= alpha < 1.0:
        raise InvalidParameter(f"α fora de [0, 1): {alpha}")
    steps = steps or drift.steps
    st = SimStream(seed=seed, alpha_corr=drift.alpha_corr)

    def batches():
        for t in range(1, steps + 1):
            X, y, beta = drift_batch(st, t, drift)
            yield t, X, y, beta

    res = _track(batches(), drift.p, drift.k, alpha, watch=9, eval_last=eval_last)
    logger.info("adaptação α=%.3g: RMSE %.3f (adaptativo) vs %.3f (estático)",
                alpha, res.rmse_adaptive, res.rmse_static)
    return res


def pricing_experiment(cfg: PricingConfig | None = None, alpha: float = 0.01, steps: int | None = None,
                       seed: int = 0, eval_last: int = 300) -> AdaptationResult:
    """Procura D = β₀ + γ·preço + xᵀβ_t + ε; segue γ̂ (coluna 0) com e sem adaptação."""
    cfg = cfg or PricingConfig()
    if not 0.0 <= alpha < 1.0:
        raise InvalidParameter(f"α fora de [0, 1): {alpha}")
    steps = steps or cfg.steps
    st = SimStream(seed=seed, alpha_corr=cfg.alpha_corr)

    def batches():
        for t in range(1, steps + 1):
            X, y = pricing_batch(st, t, cfg.batch, cfg)
            yield t, X, y, pricing_coeffs(cfg, t)

    res = _track(batches(), cfg.p, cfg.k, alpha, watch=0, eval_last=eval_last)
    tail = res.trace.tail(eval_last) if eval_last else res.trace
    res.extra["gamma_adaptive"] = float(tail["beta_adaptive"].mean())
    res.extra["gamma_static"] = float(tail["beta_static"].mean())
    logger.info("preço α=%.3g: γ̂ %.3f (adaptativo) vs %.3f (estático), γ=%.3f",
                alpha, res.extra["gamma_adaptive"], res.extra["gamma_static"], cfg.gamma)
    return res
