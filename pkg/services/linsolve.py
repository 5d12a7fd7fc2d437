# -*- coding: utf-8 -*-
"""
Álgebra linear densa SPD usada pelos extratores:
- solve_spd: Cholesky (scipy) com tolerância de pivô 1e-12·tr(A)/d
- solve_ridge: (A + λI)β = b
- rank1_update_inverse: Sherman–Morrison para o OLS sequencial
"""
from __future__ import annotations
from dataclasses import dataclass
import logging

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from services.errors import InvalidDimension, InvalidParameter, RankOneBreakdown, SingularSystem

logger = logging.getLogger(__name__)

__all__ = ["SpdSystem", "solve_spd", "solve_ridge", "rank1_update_inverse", "lambda_max_estimate"]

PIVOT_RTOL = 1e-12
SM_DENOM_MIN = 1e-12


@dataclass(frozen=True)
class SpdSystem:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise InvalidDimension(f"A tem de ser d×d com d ≥ 1 (forma {A.shape})")
        if b.shape[0] != A.shape[0]:
            raise InvalidDimension(f"b com {b.shape[0]} entradas para A {A.shape}")
        scale = max(1.0, float(np.abs(A).max()))
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-10 * scale):
            raise InvalidParameter("A não é simétrica")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return int(self.A.shape[0])


def _factor(A: np.ndarray):
    d = A.shape[0]
    tr = float(np.trace(A))
    if not np.isfinite(tr) or tr <= 0.0:
        raise SingularSystem(f"traço não positivo ({tr:.3g})")
    try:
        c, low = cho_factor(A, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as e:
        raise SingularSystem(f"fatorização de Cholesky falhou: {e}") from None
    pivots = np.diag(c) ** 2
    tol = PIVOT_RTOL * tr / d
    if float(pivots.min()) <= tol:
        raise SingularSystem(f"pivô {pivots.min():.3g} abaixo da tolerância {tol:.3g}")
    return c, low


def solve_spd(sys: SpdSystem) -> np.ndarray:
    cf = _factor(sys.A)
    return cho_solve(cf, sys.b, check_finite=False)


def solve_ridge(sys: SpdSystem, lambda_ridge: float) -> np.ndarray:
    lam = float(lambda_ridge)
    if lam < 0:
        raise InvalidParameter(f"lambda_ridge negativo: {lam}")
    if lam == 0.0:
        return solve_spd(sys)
    A = sys.A + lam * np.eye(sys.d)
    return solve_spd(SpdSystem(A, sys.b))


def spd_inverse(A: np.ndarray) -> np.ndarray:
    """Inversa via Cholesky (refatorização do zero)."""
    cf = _factor(np.asarray(A, dtype=np.float64))
    inv = cho_solve(cf, np.eye(A.shape[0]), check_finite=False)
    return 0.5 * (inv + inv.T)


def rank1_update_inverse(Ainv: np.ndarray, v: np.ndarray, weight: float = 1.0) -> np.ndarray:
    """(A + w·vvᵀ)⁻¹ a partir de A⁻¹ (Sherman–Morrison)."""
    if weight == 0.0:
        return Ainv.copy()
    u = Ainv @ v
    denom = 1.0 + weight * float(v @ u)
    if not denom > SM_DENOM_MIN:
        raise RankOneBreakdown(f"denominador de Sherman–Morrison {denom:.3g}")
    return Ainv - (weight / denom) * np.outer(u, u)


def lambda_max_estimate(A: np.ndarray, iters: int = 20) -> float:
    """Maior valor próprio por método da potência (arranque determinístico)."""
    d = A.shape[0]
    v = np.ones(d) / np.sqrt(d)
    lam = 0.0
    for _ in range(max(1, iters)):
        w = A @ v
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        lam = float(v @ w)
        v = w / nrm
    # vᵀAv ≤ ‖Av‖ ≤ λ_max
    return max(lam, nrm)
