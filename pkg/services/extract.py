# -*- coding: utf-8 -*-
"""
Extração de modelos esparsos a partir de momentos padronizados:
- ols / ols_th (OLS + threshold + refit)
- ofsa (descida de gradiente com poda anelada M_t)
- penalized_gd (gradiente + operador de threshold Θ: lasso, elastic net, MCP)
- tune_lambda_for_sparsity (grelha exponencial de λ até k não-zeros)
Todos trabalham só sobre (S̃_xx, S̃_xy); nada aqui toca nos dados brutos.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from pathlib import Path
import logging
import math

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from services.config import get_settings
from services.errors import (
    Diverged, InvalidDimension, InvalidParameter, InvalidSparsity, ParseError, SingularSystem,
)
from services.linsolve import SpdSystem, lambda_max_estimate, solve_ridge, solve_spd
from services.standardize import StandardizedMoments

logger = logging.getLogger(__name__)

__all__ = [
    "SparseModel", "PenaltySpec", "FsaSchedule",
    "ols", "ols_th", "ofsa", "threshold_operator", "penalized_gd",
    "lambda_grid", "lambda_path", "tune_lambda_for_sparsity",
    "olasso", "oelnet", "omcp", "extract_model", "METHODS",
    "predict", "predict_class", "ols_th_system", "solution_path",
    "write_model", "read_model",
]

PENALTY_FAMILIES = ("lasso", "elasticnet", "mcp")
METHODS = ("ols", "olsth", "ofsa", "lasso", "elnet", "mcp")


# ---- tipos ------------------------------------------------------------------------
@dataclass(frozen=True)
class PenaltySpec:
    family: str
    lam: float
    l2_mix: float = 0.0
    b: float = 3.0

    def __post_init__(self):
        if self.family not in PENALTY_FAMILIES:
            raise InvalidParameter(f"penalização desconhecida: {self.family!r}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidParameter(f"λ tem de ser > 0 (recebido {self.lam})")
        if self.l2_mix < 0:
            raise InvalidParameter(f"l2_mix negativo: {self.l2_mix}")
        if self.family == "mcp" and not self.b > 1:
            raise InvalidParameter(f"MCP exige b > 1 (recebido {self.b})")
        if self.family != "elasticnet":
            object.__setattr__(self, "l2_mix", 0.0)


@dataclass(frozen=True)
class FsaSchedule:
    k: int
    T: int = 100
    mu: float = 10.0
    eta: float | None = None

    def __post_init__(self):
        if self.k < 1:
            raise InvalidSparsity(f"k tem de ser ≥ 1 (recebido {self.k})")
        if self.T < 1:
            raise InvalidParameter(f"T tem de ser ≥ 1 (recebido {self.T})")
        if self.mu < 0:
            raise InvalidParameter(f"μ negativo: {self.mu}")
        if self.eta is not None and not self.eta > 0:
            raise InvalidParameter(f"η tem de ser > 0 (recebido {self.eta})")

    def m_t(self, t: int, p: int) -> int:
        """M_t = k + (p − k)·max{0, (T − t)/(tμ + T)}"""
        frac = max(0.0, (self.T - t) / (t * self.mu + self.T))
        return self.k + int(math.floor((p - self.k) * frac + 1e-9))


@dataclass(frozen=True)
class SparseModel:
    p: int
    k: int
    support: np.ndarray          # índices originais, ordenados
    beta_std: np.ndarray
    mu_x: np.ndarray
    sigma_x: np.ndarray
    mu_y: float
    method: str = "ols"
    lam: float | None = None
    beta_prefit: np.ndarray | None = None
    warning: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def beta_orig(self) -> np.ndarray:
        return self.beta_std / self.sigma_x[self.support]

    @property
    def intercept_orig(self) -> float:
        return float(self.mu_y - self.beta_orig @ self.mu_x[self.support])

    @property
    def size(self) -> int:
        return int(self.support.shape[0])

    def predict(self, x) -> np.ndarray | float:
        X = np.asarray(x, dtype=np.float64)
        if X.shape[-1] != self.p:
            raise InvalidDimension(f"x com {X.shape[-1]} features, modelo com p={self.p}")
        out = self.intercept_orig + X[..., self.support] @ self.beta_orig
        return float(out) if X.ndim == 1 else out

    def predict_std(self, x) -> np.ndarray | float:
        """Mesma previsão pela forma padronizada μ_y + Σ β̃_j (x_j − μ_j)/σ_j."""
        X = np.asarray(x, dtype=np.float64)
        z = (X[..., self.support] - self.mu_x[self.support]) / self.sigma_x[self.support]
        out = self.mu_y + z @ self.beta_std
        return float(out) if X.ndim == 1 else out


def predict(model: SparseModel, x):
    return model.predict(x)


def predict_class(model: SparseModel, x):
    yhat = np.asarray(model.predict(x))
    cls = np.where(yhat >= 0.0, 1, -1)
    return int(cls) if cls.ndim == 0 else cls


# ---- auxiliares ---------------------------------------------------------------------
def _top_k(values: np.ndarray, k: int) -> np.ndarray:
    """Posições dos k maiores |v|; empates → menor índice. Devolve ordenado."""
    order = np.argsort(-np.abs(values), kind="stable")
    return np.sort(order[:k])


def _refit(S: np.ndarray, s: np.ndarray, idx: np.ndarray) -> np.ndarray:
    if idx.size == 0:
        return np.zeros(0)
    return solve_spd(SpdSystem(S[np.ix_(idx, idx)], s[idx]))


def _default_ridge(S: np.ndarray) -> float:
    return 1e-3 * float(np.trace(S)) / S.shape[0]


def _model(sm: StandardizedMoments, local: np.ndarray, beta: np.ndarray, k: int, method: str,
           **kw) -> SparseModel:
    return SparseModel(
        p=sm.p, k=int(k), support=sm.kept[local].astype(np.int64), beta_std=np.asarray(beta, dtype=np.float64),
        mu_x=sm.mu_x, sigma_x=sm.sigma_x, mu_y=sm.mu_y, method=method, **kw,
    )


def _check_k(k: int, r: int) -> int:
    k = int(k)
    if not 1 <= k <= r:
        raise InvalidSparsity(f"k={k} fora de [1, {r}] (features retidas)")
    return k


def _quad_loss(S: np.ndarray, s: np.ndarray, beta: np.ndarray) -> float:
    return 0.5 * float(beta @ S @ beta) - float(beta @ s)


def _check_descent(trace: list, label: str, t: int, before: float, after: float) -> None:
    """Modo debug: guarda (antes, depois) de cada passo de gradiente e avisa se a perda subir."""
    trace.append((before, after))
    if after > before + 1e-12 * max(1.0, abs(before)):
        logger.warning("%s t=%d: perda subiu %.6g → %.6g", label, t, before, after)


# ---- OLS ------------------------------------------------------------------------------
def ols(sm: StandardizedMoments) -> SparseModel:
    beta = solve_spd(SpdSystem(sm.S_xx_std, sm.S_xy_std))
    return _model(sm, np.arange(sm.r), beta, sm.r, "ols")


def _dense_estimate(S: np.ndarray, s: np.ndarray, n_obs: float, ridge_lambda: float | None) -> np.ndarray:
    sys = SpdSystem(S, s)
    if ridge_lambda is not None:
        return solve_ridge(sys, ridge_lambda)
    if n_obs and n_obs <= S.shape[0]:
        lam = _default_ridge(S)
        logger.debug("p ≥ n (n=%.0f, p=%d): passo 1 com ridge λ=%.3g", n_obs, S.shape[0], lam)
        return solve_ridge(sys, lam)
    try:
        return solve_spd(sys)
    except SingularSystem as e:
        lam = _default_ridge(S)
        logger.warning("passo 1 singular (%s); a usar ridge λ=%.3g", e, lam)
        return solve_ridge(sys, lam)


def ols_th(sm: StandardizedMoments, k: int, ridge_lambda: float | None = None) -> SparseModel:
    k = _check_k(k, sm.r)
    S, s = sm.S_xx_std, sm.S_xy_std
    dense = _dense_estimate(S, s, sm.effective_n, ridge_lambda)
    idx = _top_k(dense, k)
    beta = _refit(S, s, idx)
    return _model(sm, idx, beta, k, "olsth", beta_prefit=dense[idx])


def ols_th_system(A: np.ndarray, b: np.ndarray, k: int, ridge_lambda: float | None = None) -> np.ndarray:
    """OLS-th num sistema normal não padronizado; devolve β de comprimento d com zeros."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    k = _check_k(k, A.shape[0])
    dense = _dense_estimate(A, b, 0.0, ridge_lambda)
    idx = _top_k(dense, k)
    out = np.zeros(A.shape[0])
    out[idx] = _refit(A, b, idx)
    return out


# ---- OFSA -------------------------------------------------------------------------------
def ofsa(sm: StandardizedMoments, sched: FsaSchedule) -> SparseModel:
    S, s = sm.S_xx_std, sm.S_xy_std
    r = sm.r
    k = _check_k(sched.k, r)
    eta = sched.eta if sched.eta is not None else 0.9 / max(lambda_max_estimate(S), 1e-300)
    descent: list[tuple[float, float]] | None = [] if get_settings().debug else None

    active = np.arange(r)
    beta = np.zeros(r)
    Sa, sa = S, s
    for t in range(1, sched.T + 1):
        grad = Sa @ beta - sa
        new = beta - eta * grad
        if not np.all(np.isfinite(new)):
            raise Diverged(f"OFSA divergiu na iteração {t}", eta=eta)
        if descent is not None:
            _check_descent(descent, "OFSA", t, _quad_loss(Sa, sa, beta), _quad_loss(Sa, sa, new))
        beta = new
        m = sched.m_t(t, r)
        if m < active.size:
            keep = _top_k(beta, m)
            active, beta = active[keep], beta[keep]
            Sa, sa = S[np.ix_(active, active)], s[active]

    refit = _refit(S, s, active)
    extra = {"eta": eta, "T": sched.T, "mu": sched.mu}
    if descent is not None:
        extra["descent"] = descent
    return _model(sm, active, refit, k, "ofsa", beta_prefit=beta, extra=extra)


# ---- thresholding / penalizações ----------------------------------------------------------
def _theta(v: np.ndarray, thr: float, spec: PenaltySpec) -> np.ndarray:
    a = np.abs(v)
    if spec.family == "mcp":
        mid = (v - thr * np.sign(v)) / (1.0 - 1.0 / spec.b)
        return np.where(a <= thr, 0.0, np.where(a <= spec.b * thr, mid, v))
    return np.sign(v) * np.maximum(a - thr, 0.0)


def threshold_operator(t: float, thr: float, spec: PenaltySpec) -> float:
    if thr < 0:
        raise InvalidParameter(f"limiar negativo: {thr}")
    return float(_theta(np.array([float(t)]), float(thr), spec)[0])


def _step_size(S: np.ndarray, spec: PenaltySpec) -> float:
    return 0.9 / max(lambda_max_estimate(S) + spec.l2_mix, 1e-300)


def _penalized_iterate(S: np.ndarray, s: np.ndarray, spec: PenaltySpec, iters: int, eta: float,
                       beta0: np.ndarray | None = None, tol: float = 1e-9,
                       descent: list | None = None) -> tuple[np.ndarray, int]:
    beta = np.zeros(S.shape[0]) if beta0 is None else beta0.copy()
    thr = eta * spec.lam
    # parte suave: quadrática mais o termo l2 do elastic net
    Sq = S + spec.l2_mix * np.eye(S.shape[0]) if (spec.l2_mix and descent is not None) else S
    it = 0
    for it in range(1, iters + 1):
        grad = S @ beta - s
        if spec.l2_mix:
            grad = grad + spec.l2_mix * beta
        z = beta - eta * grad
        if descent is not None:
            _check_descent(descent, spec.family, it, _quad_loss(Sq, s, beta), _quad_loss(Sq, s, z))
        new = _theta(z, thr, spec)
        if not np.all(np.isfinite(new)):
            raise Diverged(f"{spec.family} divergiu na iteração {it}", eta=eta)
        done = float(np.max(np.abs(new - beta))) < tol if new.size else True
        beta = new
        if done:
            break
    return beta, it


def penalized_gd(sm: StandardizedMoments, spec: PenaltySpec, iters: int = 500,
                 eta: float | None = None) -> SparseModel:
    if iters < 1:
        raise InvalidParameter(f"iters tem de ser ≥ 1 (recebido {iters})")
    S, s = sm.S_xx_std, sm.S_xy_std
    eta = _step_size(S, spec) if eta is None else float(eta)
    if not eta > 0:
        raise InvalidParameter(f"η tem de ser > 0 (recebido {eta})")
    descent = [] if get_settings().debug else None
    beta, used = _penalized_iterate(S, s, spec, iters, eta, descent=descent)
    extra = {"eta": eta, "iters": used}
    if descent is not None:
        extra["descent"] = descent
    return _from_penalized(sm, spec, beta, k=int(np.count_nonzero(beta)), extra=extra)


def _from_penalized(sm: StandardizedMoments, spec: PenaltySpec, beta: np.ndarray, k: int,
                    warning: str | None = None, extra: dict | None = None) -> SparseModel:
    S, s = sm.S_xx_std, sm.S_xy_std
    nz = np.flatnonzero(beta)
    refit = _refit(S, s, nz)
    return _model(sm, nz, refit, k, spec.family, lam=spec.lam, beta_prefit=beta[nz],
                  warning=warning, extra=extra or {})


def lambda_grid(lam_max: float, grid_size: int = 200, eps: float = 1e-3) -> np.ndarray:
    if grid_size < 2:
        raise InvalidParameter(f"grid_size tem de ser ≥ 2 (recebido {grid_size})")
    return lam_max * np.power(eps, np.arange(grid_size) / (grid_size - 1))


def lambda_path(sm: StandardizedMoments, family: str, grid: np.ndarray, l2_mix: float = 0.0,
                b: float = 3.0, iters: int = 500, eta: float | None = None,
                warm_start: bool = True, stop_above: int | None = None) -> list[np.ndarray]:
    """Coeficientes (antes do refit) para cada λ da grelha, por ordem."""
    S, s = sm.S_xx_std, sm.S_xy_std
    out: list[np.ndarray] = []
    beta = None
    over = 0
    step = eta
    for lam in grid:
        spec = PenaltySpec(family, float(lam), l2_mix=l2_mix, b=b)
        if step is None:
            step = _step_size(S, spec)
        beta, _ = _penalized_iterate(S, s, spec, iters, step, beta0=beta if warm_start else None)
        out.append(beta)
        if stop_above is not None:
            over = over + 1 if np.count_nonzero(beta) > stop_above else 0
            if over >= 5:
                break
    return out


def tune_lambda_for_sparsity(sm: StandardizedMoments, family: str, k: int, grid_size: int = 200,
                             l2_mix: float = 0.0, b: float = 3.0, iters: int = 500,
                             eta: float | None = None, eps: float = 1e-3,
                             warm_start: bool = True) -> tuple[float, SparseModel]:
    """λ da grelha cujo modelo tem o maior nº de não-zeros ≤ k (empate → maior λ)."""
    k = _check_k(k, sm.r)
    lam_max = float(np.max(np.abs(sm.S_xy_std)))
    if lam_max <= 0.0:
        spec = PenaltySpec(family, 1.0, l2_mix=l2_mix, b=b)
        return 1.0, _from_penalized(sm, spec, np.zeros(sm.r), k, warning="S_xy nulo: modelo vazio")

    grid = lambda_grid(lam_max, grid_size, eps)
    path = lambda_path(sm, family, grid, l2_mix=l2_mix, b=b, iters=iters, eta=eta,
                       warm_start=warm_start, stop_above=k)
    best, best_count = None, -1
    for i, beta in enumerate(path):
        c = int(np.count_nonzero(beta))
        if c <= k and c > best_count:
            best, best_count = i, c
    if best is None:
        logger.warning("nenhum λ da grelha deu ≤ %d não-zeros; modelo vazio", k)
        spec = PenaltySpec(family, float(grid[-1]), l2_mix=l2_mix, b=b)
        return float(grid[-1]), _from_penalized(sm, spec, np.zeros(sm.r), k,
                                                warning=f"nenhum λ com ≤ {k} não-zeros")
    lam = float(grid[best])
    spec = PenaltySpec(family, lam, l2_mix=l2_mix, b=b)
    model = _from_penalized(sm, spec, path[best], k, extra={"grid_index": best, "nonzeros": best_count})
    return lam, model


def olasso(sm: StandardizedMoments, k: int, **kw) -> SparseModel:
    return tune_lambda_for_sparsity(sm, "lasso", k, **kw)[1]


def oelnet(sm: StandardizedMoments, k: int, l2_mix: float = 0.5, **kw) -> SparseModel:
    return tune_lambda_for_sparsity(sm, "elasticnet", k, l2_mix=l2_mix, **kw)[1]


def omcp(sm: StandardizedMoments, k: int, b: float = 3.0, **kw) -> SparseModel:
    return tune_lambda_for_sparsity(sm, "mcp", k, b=b, **kw)[1]


# ---- despacho por nome -----------------------------------------------------------------
_FAMILY = {"lasso": "lasso", "elnet": "elasticnet", "mcp": "mcp"}


def extract_model(sm: StandardizedMoments, method: str, k: int | None = None, lam: float | None = None,
                  ridge_lambda: float | None = None, T: int = 100, mu: float = 10.0,
                  eta: float | None = None, l2_mix: float = 0.5, b: float = 3.0,
                  iters: int = 500, grid_size: int = 200) -> SparseModel:
    if method == "ols":
        return ols(sm)
    if method == "olsth":
        return ols_th(sm, sm.r if k is None else k, ridge_lambda=ridge_lambda)
    if method == "ofsa":
        if k is None:
            raise InvalidSparsity("OFSA precisa de k")
        _check_k(k, sm.r)
        return ofsa(sm, FsaSchedule(k=k, T=T, mu=mu, eta=eta))
    if method in _FAMILY:
        fam = _FAMILY[method]
        if lam is not None:
            return penalized_gd(sm, PenaltySpec(fam, lam, l2_mix=l2_mix, b=b), iters=iters, eta=eta)
        if k is None:
            raise InvalidSparsity(f"{method} precisa de --k ou --lambda")
        return tune_lambda_for_sparsity(sm, fam, k, grid_size=grid_size, l2_mix=l2_mix, b=b,
                                        iters=iters, eta=eta)[1]
    raise InvalidParameter(f"método desconhecido: {method!r} (opções: {', '.join(METHODS)})")


def solution_path(sm: StandardizedMoments, method: str, ks, n_jobs: int | None = None, **kw) -> pd.DataFrame:
    """Modelos para cada k (uma linha por feature do suporte), em paralelo por k."""
    ks = [int(k) for k in ks]
    for k in ks:
        _check_k(k, sm.r)
    jobs = n_jobs or get_settings().threads
    models = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(extract_model)(sm, method, k=k, **kw) for k in ks
    )
    rows = []
    for k, m in zip(ks, models):
        for j, bs, bo in zip(m.support, m.beta_std, m.beta_orig):
            rows.append({"k": k, "feature": int(j), "beta_std": float(bs), "beta_orig": float(bo)})
    return pd.DataFrame(rows, columns=["k", "feature", "beta_std", "beta_orig"])


# ---- ficheiro de modelo (texto) --------------------------------------------------------------
_MODEL_HEADER = "ravg-model v1"


def write_model(model: SparseModel, path: str | Path | None = None) -> str:
    lines = [
        _MODEL_HEADER,
        f"k {model.k}",
        f"intercept {model.intercept_orig!r}",
        f"p {model.p}",
        f"method {model.method}",
        f"mu_y {model.mu_y!r}",
    ]
    for j, bo, bs in zip(model.support, model.beta_orig, model.beta_std):
        lines.append(f"{int(j)} {float(bo)!r} {float(bs)!r} {float(model.mu_x[j])!r} {float(model.sigma_x[j])!r}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_model(path: str | Path) -> SparseModel:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != _MODEL_HEADER:
        raise ParseError(f"cabeçalho '{_MODEL_HEADER}' em falta", line=1)
    keys: dict[str, str] = {}
    rows = []
    for no, line in enumerate(text[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        try:
            if len(parts) == 2:
                keys[parts[0]] = parts[1]
            elif len(parts) == 5:
                rows.append((int(parts[0]), *map(float, parts[1:])))
            else:
                raise ValueError("número de campos inválido")
        except ValueError as e:
            raise ParseError(str(e), line=no) from None
    for req in ("k", "intercept", "p", "mu_y"):
        if req not in keys:
            raise ParseError(f"chave '{req}' em falta")
    p = int(keys["p"])
    mu_x, sigma_x = np.zeros(p), np.ones(p)
    support = np.array([r[0] for r in rows], dtype=np.int64)
    beta_std = np.array([r[2] for r in rows], dtype=np.float64)
    for j, _bo, _bs, mj, sj in rows:
        mu_x[j], sigma_x[j] = mj, sj
    return SparseModel(p=p, k=int(keys["k"]), support=support, beta_std=beta_std, mu_x=mu_x,
                       sigma_x=sigma_x, mu_y=float(keys["mu_y"]), method=keys.get("method", "ols"))
