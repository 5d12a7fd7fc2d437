# -*- coding: utf-8 -*-
"""
Padronização feita só no espaço dos momentos:
  S̃_xy = Π(S_xy − μ_y μ_x),  S̃_xx = Π(S_xx − μ_x μ_xᵀ)Π,  Π = diag(1/σ_xj)
A resposta é centrada mas não escalada. Variância com 1/n (não 1/(n−1)).
"""
from __future__ import annotations
from dataclasses import dataclass
import logging

import numpy as np

from services.errors import DegenerateMoments, InsufficientData
from services.moments import MomentSet

logger = logging.getLogger(__name__)

__all__ = ["StandardizedMoments", "standardize"]

# folga de cancelamento em E[x²] − μ², em ulps
CANCEL_ULPS = 4.0


@dataclass(frozen=True)
class StandardizedMoments:
    p: int
    n: int
    S_xx_std: np.ndarray      # r×r, só features retidas
    S_xy_std: np.ndarray      # r
    var_y: float
    sigma_x: np.ndarray       # p (0 nas descartadas)
    mu_x: np.ndarray          # p
    mu_y: float
    dropped: tuple[int, ...]
    kept: np.ndarray          # índices originais das r features retidas
    effective_n: float = 0.0

    @property
    def r(self) -> int:
        return int(self.kept.shape[0])


def standardize(m: MomentSet, min_sigma: float = 1e-12) -> StandardizedMoments:
    if m.n < 2:
        raise InsufficientData(f"são precisas pelo menos 2 observações (n={m.n})")

    second = np.diag(m.S_xx)
    var_x = second - m.mu_x ** 2
    # variância ao nível do erro de arredondamento conta como zero
    floor = CANCEL_ULPS * np.finfo(np.float64).eps * np.abs(second)
    var_x = np.where(var_x <= floor, 0.0, var_x)
    sigma = np.sqrt(np.clip(var_x, 0.0, None))
    top = float(sigma.max()) if sigma.size else 0.0
    keep_mask = sigma > min_sigma * top if top > 0 else np.zeros(m.p, dtype=bool)
    kept = np.flatnonzero(keep_mask)
    dropped = tuple(int(j) for j in np.flatnonzero(~keep_mask))
    if kept.size == 0:
        raise DegenerateMoments("todas as features têm variância nula")
    if dropped:
        logger.warning("features com variância nula descartadas: %s", list(dropped)[:20])

    inv = 1.0 / sigma[kept]
    mu = m.mu_x[kept]
    cov = m.S_xx[np.ix_(kept, kept)] - np.outer(mu, mu)
    cov = 0.5 * (cov + cov.T)
    S_xx_std = cov * inv[:, None] * inv[None, :]
    S_xy_std = inv * (m.S_xy[kept] - m.mu_y * mu)

    sig_full = np.where(keep_mask, sigma, 0.0)
    return StandardizedMoments(
        p=m.p, n=m.n,
        S_xx_std=S_xx_std, S_xy_std=S_xy_std,
        var_y=max(float(m.S_yy - m.mu_y ** 2), 0.0),
        sigma_x=sig_full, mu_x=m.mu_x.copy(), mu_y=float(m.mu_y),
        dropped=dropped, kept=kept, effective_n=m.effective_n,
    )
