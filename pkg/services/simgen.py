# -*- coding: utf-8 -*-
"""
Geradores sintéticos determinísticos (Philox, contador 64-bit, chave = (seed, shard)):
- desenho com correlação uniforme: x = α·z·1 + u, z ~ N(0,1), u ~ N(0, I_p)
- respostas de regressão (xᵀβ* + η) e classificação (sign, com sign(0) = +1)
- coeficientes com drift sinusoidal e o modelo de procura/preço
- expansão de interações (originais, quadrados, pares i<j)
"""
from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO
import math

import numpy as np
import pandas as pd

from services.errors import InvalidDimension, InvalidParameter
from services.moments import Observation

__all__ = [
    "GenConfig", "DriftConfig", "PricingConfig", "SimStream",
    "true_beta", "true_support", "gen_design_row", "gen_response",
    "gen_drift_coeffs", "gen_pricing_obs", "pricing_coeffs",
    "expand_interactions", "write_stream_csv",
]

TASKS = ("regression", "classification")


def make_rng(seed: int, shard: int = 0) -> np.random.Generator:
    """Philox keyed por SeedSequence((seed, shard)); shards dão streams disjuntas."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(shard)])
    return np.random.Generator(np.random.Philox(ss))


# ---- configs ----------------------------------------------------------------------------
@dataclass(frozen=True)
class GenConfig:
    p: int
    n: int
    k_star: int
    beta_strength: float = 1.0
    alpha_corr: float = 1.0
    task: str = "regression"
    seed: int = 0
    spacing: int = 10

    def __post_init__(self):
        if self.p < 1 or self.n < 0:
            raise InvalidDimension(f"p={self.p}, n={self.n} inválidos")
        if self.task not in TASKS:
            raise InvalidParameter(f"task desconhecida: {self.task!r}")
        if self.k_star < 0 or self.k_star * self.spacing > self.p:
            raise InvalidParameter(f"k*·spacing = {self.k_star}·{self.spacing} excede p={self.p}")
        if not self.beta_strength > 0:
            raise InvalidParameter(f"β tem de ser > 0 (recebido {self.beta_strength})")


@dataclass(frozen=True)
class DriftConfig:
    a: float = 0.4
    b: float = 0.6
    T_period: float = 1000.0
    k: int = 10
    p: int = 100
    batch: int = 1000
    steps: int = 1000
    alpha_corr: float = 1.0

    def __post_init__(self):
        if not self.T_period > 0:
            raise InvalidParameter(f"período T tem de ser > 0 (recebido {self.T_period})")
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise InvalidParameter("a, b têm de ser finitos")
        if self.k * 10 > self.p:
            raise InvalidParameter(f"k·10 = {self.k * 10} excede p={self.p}")


@dataclass(frozen=True)
class PricingConfig:
    a: float = 0.2
    b: float = 0.4
    T_period: float = 2000.0
    k: int = 10
    p: int = 100                 # preço + (p−1) covariáveis
    batch: int = 200
    steps: int = 2000
    gamma: float = -0.5
    beta0: float = 10.0
    price_low: float = 10.0
    price_high: float = 20.0
    alpha_corr: float = 1.0

    def __post_init__(self):
        if not self.T_period > 0:
            raise InvalidParameter(f"período T tem de ser > 0 (recebido {self.T_period})")
        if self.k < 1 or 10 * (self.k - 1) >= self.p:
            raise InvalidParameter(f"k={self.k} incompatível com p={self.p}")


# ---- coeficientes verdadeiros ------------------------------------------------------------
def true_support(p: int, k_star: int, spacing: int = 10) -> np.ndarray:
    """Índices 0-based das features ativas: spacing·j − 1, j = 1..k*."""
    return spacing * np.arange(1, k_star + 1) - 1


def true_beta(cfg: GenConfig) -> np.ndarray:
    beta = np.zeros(cfg.p)
    beta[true_support(cfg.p, cfg.k_star, cfg.spacing)] = cfg.beta_strength
    return beta


def gen_drift_coeffs(cfg: DriftConfig, t: float) -> np.ndarray:
    """β_tj = a·sin(2π(t − 100j)/T) + b nas posições 10j (1-based)."""
    j = np.arange(1, cfg.k + 1)
    beta = np.zeros(cfg.p)
    beta[10 * j - 1] = cfg.a * np.sin(2.0 * np.pi * (t - 100.0 * j) / cfg.T_period) + cfg.b
    return beta


def pricing_coeffs(cfg: PricingConfig, t: float) -> np.ndarray:
    """Coeficientes completos: [γ (preço), covariáveis j=2..k nas posições 10(j−1)]."""
    beta = np.zeros(cfg.p)
    beta[0] = cfg.gamma
    j = np.arange(2, cfg.k + 1)
    beta[10 * (j - 1)] = cfg.a * np.sin(2.0 * np.pi * (t - 100.0 * j) / cfg.T_period) + cfg.b
    return beta


# ---- stream ------------------------------------------------------------------------------
class SimStream:
    """Estado explícito do gerador; mesma (seed, shard, config) → mesma stream."""

    def __init__(self, seed: int = 0, shard: int = 0, alpha_corr: float = 1.0, noise: bool = True):
        self.seed = int(seed)
        self.shard = int(shard)
        self.alpha_corr = float(alpha_corr)
        self.noise = bool(noise)
        self.rng = make_rng(seed, shard)

    def design(self, n: int, p: int) -> np.ndarray:
        z = self.rng.standard_normal(n)
        u = self.rng.standard_normal((n, p))
        return self.alpha_corr * z[:, None] + u

    def noise_draw(self, n: int) -> np.ndarray:
        if not self.noise:
            return np.zeros(n)
        return self.rng.standard_normal(n)

    def sample(self, cfg: GenConfig, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        n = cfg.n if n is None else n
        X = self.design(n, cfg.p)
        y = gen_response(X, true_beta(cfg), cfg.task, eta=self.noise_draw(n))
        return X, y


def gen_design_row(state: SimStream, p: int) -> np.ndarray:
    return state.design(1, p)[0]


def gen_response(x, beta_star: np.ndarray, task: str = "regression", eta=None,
                 rng: np.random.Generator | None = None):
    """y = xᵀβ* + η (regressão) ou sign(xᵀβ* + η) ∈ {−1, +1} (classificação)."""
    if task not in TASKS:
        raise InvalidParameter(f"task desconhecida: {task!r}")
    X = np.asarray(x, dtype=np.float64)
    lin = X @ beta_star
    if eta is None:
        eta = (rng or make_rng(0)).standard_normal(np.shape(lin))
    val = lin + eta
    if task == "classification":
        return np.where(val >= 0.0, 1.0, -1.0) if np.ndim(val) else (1.0 if val >= 0.0 else -1.0)
    return val


def gen_pricing_obs(state: SimStream, t: float, cfg: PricingConfig | None = None) -> Observation:
    cfg = cfg or PricingConfig()
    X, y = pricing_batch(state, t, 1, cfg)
    return Observation(X[0], float(y[0]))


def pricing_batch(state: SimStream, t: float, n: int, cfg: PricingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Procura D = β0 + γ·preço + xᵀβ_t + ε; coluna 0 é o preço ~ U[10, 20]."""
    price = state.rng.uniform(cfg.price_low, cfg.price_high, size=n)
    cov = state.design(n, cfg.p - 1)
    X = np.column_stack([price, cov])
    y = cfg.beta0 + X @ pricing_coeffs(cfg, t) + state.noise_draw(n)
    return X, y


def drift_batch(state: SimStream, t: float, cfg: DriftConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    beta = gen_drift_coeffs(cfg, t)
    X = state.design(cfg.batch, cfg.p)
    y = X @ beta + state.noise_draw(cfg.batch)
    return X, y, beta


# ---- interações ------------------------------------------------------------------------------
def expand_interactions(x) -> np.ndarray:
    """(x, x², x_i·x_j para i<j em ordem lexicográfica); aceita vetor ou matriz."""
    X = np.asarray(x, dtype=np.float64)
    p = X.shape[-1]
    if p < 2:
        raise InvalidDimension(f"expansão de interações exige p ≥ 2 (p={p})")
    i, j = np.triu_indices(p, k=1)
    return np.concatenate([X, X ** 2, X[..., i] * X[..., j]], axis=-1)


# ---- CSV ------------------------------------------------------------------------------------
def write_stream_csv(X: np.ndarray, y: np.ndarray, path: str | Path | TextIO):
    if isinstance(path, str):
        path = Path(path)
    cols = [f"x{j}" for j in range(1, X.shape[1] + 1)]
    df = pd.DataFrame(X, columns=cols)
    df["y"] = y
    df.to_csv(path, index=False, float_format="%.17g")
    return path
