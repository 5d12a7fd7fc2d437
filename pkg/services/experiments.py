# -*- coding: utf-8 -*-
"""
Protocolos Monte Carlo das simulações:
- t2: regressão (DR, RMSE no teste, tempo)       - t3: classificação (DR, AUC, tempo)
- t4: adaptação a drift (e preço dinâmico)        - regret: traço + declive log-log
- bounds: β_min empírico vs limites teóricos, em três varrimentos
Cada run_* devolve (por_seed, resumo) com média e erro padrão por grupo.
Escalas (desk|paper) vêm de data/presets.csv.
"""
from __future__ import annotations
from pathlib import Path
import logging
import math

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from services.config import get_settings
from services.data_paths import presets_path, results_dir
from services.errors import BoundInapplicable, InvalidParameter
from services.evaluation import (
    adaptation_experiment, auc, beta_min_bound, correlation_matrix, detection_rate,
    empirical_beta_min, pricing_experiment, regret_harness, rmse,
)
from services.extract import extract_model
from services.io_csv import read_csv_safe, write_table
from services.moments import new_moments
from services.simgen import GenConfig, SimStream, gen_response, true_beta, true_support
from services.standardize import standardize
from utils.timing import timed
from utils.transform import loglog_slope, summarize

logger = logging.getLogger(__name__)

__all__ = [
    "EXPERIMENTS", "load_preset",
    "run_table2", "run_table3", "run_table4", "run_regret", "run_bounds", "bounds_sweep",
    "run_experiment", "write_results",
]

EXPERIMENTS = ("t2", "t3", "t4", "regret", "bounds")
SCALES = ("desk", "paper")
_CHUNK = 10_000


# ---- presets ------------------------------------------------------------------------------
def _parse_value(raw: str):
    parts = [s.strip() for s in str(raw).split("|")]
    vals = []
    for s in parts:
        try:
            v = float(s)
            vals.append(int(v) if v.is_integer() and "." not in s and "e" not in s.lower() else v)
        except ValueError:
            vals.append(s)
    return vals if len(vals) > 1 else vals[0]


def load_preset(experiment: str, scale: str = "desk", path: Path | None = None) -> dict:
    if experiment not in EXPERIMENTS:
        raise InvalidParameter(f"experiência desconhecida: {experiment!r} ({'|'.join(EXPERIMENTS)})")
    if scale not in SCALES:
        raise InvalidParameter(f"escala desconhecida: {scale!r} (desk|paper)")
    df = read_csv_safe(path or presets_path, ["experiment", "scale", "key", "value"])
    sel = df[(df["experiment"] == experiment) & (df["scale"] == scale)]
    if sel.empty:
        raise InvalidParameter(f"sem preset para {experiment}/{scale} em {path or presets_path}")
    return {str(r.key): _parse_value(r.value) for r in sel.itertuples(index=False)}


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _jobs(n_jobs: int | None) -> int:
    return n_jobs or get_settings().threads


# ---- t2 / t3 ---------------------------------------------------------------------------------
def _stream_moments(cfg: GenConfig, seed: int):
    """Momentos de n observações geradas em blocos (memória O(p²) + bloco)."""
    st = SimStream(seed=seed, shard=0, alpha_corr=cfg.alpha_corr)
    beta = true_beta(cfg)
    m = new_moments(cfg.p)
    left = cfg.n
    while left > 0:
        c = min(_CHUNK, left)
        X = st.design(c, cfg.p)
        y = gen_response(X, beta, cfg.task, eta=st.noise_draw(c))
        m.update_batch(X, y)
        left -= c
    return m


def _table_seed(p: int, k: int, beta: float, n: int, n_test: int, task: str, methods: list[str],
                seed: int) -> list[dict]:
    cfg = GenConfig(p=p, n=n, k_star=k, beta_strength=beta, task=task, seed=seed)
    truth = true_support(p, k)
    with timed(f"RAVE n={n} seed={seed}") as t_rave:
        m = _stream_moments(cfg, seed)
        sm = standardize(m)
    X_test, y_test = SimStream(seed=seed, shard=1, alpha_corr=cfg.alpha_corr).sample(cfg, n_test)
    rows = []
    for method in methods:
        with timed(f"{method} n={n} seed={seed}") as t_fit:
            model = extract_model(sm, method, k=k)
        score = model.predict(X_test)
        row = {
            "beta": beta, "n": n, "seed": seed, "method": method,
            "dr": 100.0 * detection_rate(model.support, truth),
            "time_s": t_fit.seconds, "rave_s": t_rave.seconds,
        }
        if task == "regression":
            row["rmse"] = rmse(score, y_test)
        else:
            row["auc"] = auc(score, y_test)
        rows.append(row)
    return rows


def _run_table(task: str, preset: dict, seeds: int | None, base_seed: int,
               n_jobs: int | None) -> tuple[pd.DataFrame, pd.DataFrame]:
    p, k = int(preset["p"]), int(preset["k"])
    n_test = int(preset.get("n_test", 1000))
    methods = [str(m) for m in _as_list(preset["methods"])]
    seeds = int(seeds or preset.get("seeds", 20))
    grid = [(float(b), int(n)) for b in _as_list(preset["beta"]) for n in _as_list(preset["n"])]
    logger.info("%s: p=%d k=%d, %d configurações × %d seeds", task, p, k, len(grid), seeds)
    chunks = Parallel(n_jobs=_jobs(n_jobs))(
        delayed(_table_seed)(p, k, b, n, n_test, task, methods, base_seed + s)
        for b, n in grid for s in range(seeds)
    )
    per_seed = pd.DataFrame([r for rows in chunks for r in rows])
    metric = "rmse" if task == "regression" else "auc"
    summary = summarize(per_seed, ["beta", "n", "method"], ["dr", metric, "time_s", "rave_s"])
    return per_seed, summary


def run_table2(preset: dict | None = None, scale: str = "desk", seeds: int | None = None,
               base_seed: int = 0, n_jobs: int | None = None):
    return _run_table("regression", preset or load_preset("t2", scale), seeds, base_seed, n_jobs)


def run_table3(preset: dict | None = None, scale: str = "desk", seeds: int | None = None,
               base_seed: int = 0, n_jobs: int | None = None):
    return _run_table("classification", preset or load_preset("t3", scale), seeds, base_seed, n_jobs)


# ---- t4 ----------------------------------------------------------------------------------------
def _t4_seed(steps: int, alpha: float, eval_last: int, pricing: bool, seed: int) -> list[dict]:
    res = adaptation_experiment(alpha=alpha, steps=steps, seed=seed, eval_last=eval_last)
    rows = [
        {"experiment": "drift", "alpha": alpha, "seed": seed, "rmse": res.rmse_adaptive},
        {"experiment": "drift", "alpha": 0.0, "seed": seed, "rmse": res.rmse_static},
    ]
    if pricing:
        res = pricing_experiment(alpha=alpha, seed=seed, eval_last=eval_last)
        rows.append({"experiment": "pricing", "alpha": alpha, "seed": seed, "rmse": res.rmse_adaptive,
                     "gamma_hat": res.extra["gamma_adaptive"]})
        rows.append({"experiment": "pricing", "alpha": 0.0, "seed": seed, "rmse": res.rmse_static,
                     "gamma_hat": res.extra["gamma_static"]})
    return rows


def run_table4(preset: dict | None = None, scale: str = "desk", seeds: int | None = None,
               base_seed: int = 0, n_jobs: int | None = None):
    """RMSE com (α) e sem (α=0) adaptação; α=0 corre momentos uniformes."""
    preset = preset or load_preset("t4", scale)
    steps = int(preset.get("steps", 1000))
    alpha = float(preset.get("alpha", 0.01))
    eval_last = int(preset.get("eval_last", 300))
    pricing = bool(int(preset.get("pricing", 0)))
    seeds = int(seeds or preset.get("seeds", 5))
    chunks = Parallel(n_jobs=_jobs(n_jobs))(
        delayed(_t4_seed)(steps, alpha, eval_last, pricing, base_seed + s) for s in range(seeds)
    )
    per_seed = pd.DataFrame([r for rows in chunks for r in rows])
    cols = ["rmse"] + (["gamma_hat"] if pricing else [])
    return per_seed, summarize(per_seed, ["experiment", "alpha"], cols)


# ---- regret ----------------------------------------------------------------------------------------
def _regret_seed(p: int, n: int, n0: int, k: int | None, seed: int) -> pd.DataFrame:
    cfg = GenConfig(p=p, n=n, k_star=max(1, p // 10), spacing=min(10, p))
    X, y = SimStream(seed=seed).sample(cfg)
    tr = regret_harness(X, y, k=k, n0=n0)
    df = tr.to_frame()
    df["seed"] = seed
    return df


def run_regret(preset: dict | None = None, scale: str = "desk", seeds: int | None = None,
               base_seed: int = 0, n_jobs: int | None = None):
    """Traço de regret por seed e média por n; coluna `slope` = declive log-log a partir de from_n."""
    preset = preset or load_preset("regret", scale)
    p, n = int(preset["p"]), int(preset["n"])
    n0 = int(preset.get("n0", max(p + 1, math.ceil(400 * math.log(n)))))
    k = preset.get("k")
    k = int(k) if k not in (None, "") else None
    from_n = int(preset.get("from_n", 1000))
    seeds = int(seeds or preset.get("seeds", 5))
    frames = Parallel(n_jobs=_jobs(n_jobs))(
        delayed(_regret_seed)(p, n, n0, k, base_seed + s) for s in range(seeds)
    )
    per_seed = pd.concat(frames, ignore_index=True)
    summary = summarize(per_seed, ["n"], ["regret"])
    tail = summary[summary["n"] >= from_n]
    slope = loglog_slope(tail["n"], tail["regret"])
    summary["slope"] = slope
    logger.info("regret: declive log-log %.3f (n ≥ %d)", slope if slope is not None else float("nan"), from_n)
    return per_seed, summary


# ---- bounds ------------------------------------------------------------------------------------------
def _bound_or_nan(kind: str, n: int, p: int, Sigma: np.ndarray, alpha_exp: float) -> float:
    try:
        return beta_min_bound(kind, n, p, Sigma=Sigma, alpha_exp=alpha_exp)
    except BoundInapplicable:
        return float("nan")


def bounds_sweep(sweep: str, values, n: int = 4096, p: int = 256, k_star: int = 16,
                 seeds: int = 100, alpha_corr: float = 1.0, base_seed: int = 0,
                 n_jobs: int | None = None) -> pd.DataFrame:
    """Um varrimento (em n, p ou k*) com β_min empírico e os dois limites teóricos."""
    if sweep not in ("n", "p", "k_star"):
        raise InvalidParameter(f"varrimento desconhecido: {sweep!r} (n|p|k_star)")
    rows = []
    for v in _as_list(values):
        pt = {"n": n, "p": p, "k_star": k_star}
        pt[sweep] = int(v)
        nn, pp, kk = pt["n"], pt["p"], pt["k_star"]
        Sigma = correlation_matrix(pp, alpha_corr)
        alpha_exp = 0.97 if pp <= 128 else 1.0
        with timed(f"β_min n={nn} p={pp} k*={kk}", level=logging.INFO) as t:
            emp = empirical_beta_min(nn, pp, kk, seeds=seeds, alpha_corr=alpha_corr,
                                     base_seed=base_seed, n_jobs=n_jobs)
        rows.append({
            "sweep": sweep, "n": nn, "p": pp, "k_star": kk,
            "empirical": emp,
            "prop2": _bound_or_nan("prop2", nn, pp, Sigma, alpha_exp),
            "thm1": _bound_or_nan("thm1", nn, pp, Sigma, alpha_exp),
            "alpha_exp": alpha_exp, "time_s": t.seconds,
        })
    return pd.DataFrame(rows)


def run_bounds(preset: dict | None = None, scale: str = "desk", seeds: int | None = None,
               base_seed: int = 0, n_jobs: int | None = None):
    """Três varrimentos: em n (p=256, k*=32), em p (n=4096, k*=16), em k* (n=4096, p=512)."""
    preset = preset or load_preset("bounds", scale)
    seeds = int(seeds or preset.get("seeds", 20))
    kw = dict(seeds=seeds, base_seed=base_seed, n_jobs=n_jobs)
    points = pd.concat([
        bounds_sweep("n", preset["n"], p=256, k_star=32, **kw),
        bounds_sweep("p", preset["p"], n=4096, k_star=16, **kw),
        bounds_sweep("k_star", preset["k_star"], n=4096, p=512, **kw),
    ], ignore_index=True)
    summary = points.copy()
    thm = summary["thm1"].fillna(np.inf)
    summary["ordered"] = (summary["empirical"] <= summary["prop2"]) & (summary["prop2"] <= thm)
    return points, summary


# ---- despacho -----------------------------------------------------------------------------------------
_RUNNERS = {
    "t2": run_table2, "t3": run_table3, "t4": run_table4,
    "regret": run_regret, "bounds": run_bounds,
}


def run_experiment(name: str, scale: str = "desk", seeds: int | None = None, base_seed: int = 0,
                   n_jobs: int | None = None) -> tuple[pd.DataFrame, pd.DataFrame]:
    preset = load_preset(name, scale)
    return _RUNNERS[name](preset, scale=scale, seeds=seeds, base_seed=base_seed, n_jobs=n_jobs)


def write_results(name: str, per_seed: pd.DataFrame, summary: pd.DataFrame,
                  out_dir: Path | None = None) -> tuple[Path, Path]:
    base = Path(out_dir) if out_dir else results_dir
    a = write_table(per_seed, base / f"{name}_per_seed.csv")
    b = write_table(summary, base / f"{name}_summary.csv")
    return a, b
