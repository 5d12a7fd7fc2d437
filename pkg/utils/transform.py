# -*- coding: utf-8 -*-
import numpy as np
import pandas as pd


def summarize(df: pd.DataFrame, by: list[str], cols: list[str]) -> pd.DataFrame:
    """Média e erro padrão (sd/√n) por grupo; colunas `<col>` e `<col>_se`."""
    if df.empty:
        return pd.DataFrame(columns=by + cols + [f"{c}_se" for c in cols] + ["runs"])
    g = df.groupby(by, as_index=False, observed=True, sort=False)
    mean = g[cols].mean()
    se = g[cols].agg(lambda s: float(s.std(ddof=1) / np.sqrt(len(s))) if len(s) > 1 else 0.0)
    se = se.rename(columns={c: f"{c}_se" for c in cols})
    out = mean.merge(se, on=by)
    out["runs"] = g.size()["size"].to_numpy()
    return out


def loglog_slope(x, y):
    """Declive dos mínimos quadrados de log y vs log x (pontos y ≤ 0 ignorados)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    msk = (x > 0) & (y > 0) & np.isfinite(y)
    if msk.sum() < 2:
        return None
    m, _b = np.polyfit(np.log(x[msk]), np.log(y[msk]), 1)
    return float(m)


def geometric_checkpoints(start: int, stop: int, per_decade: int = 10) -> np.ndarray:
    """Inteiros estritamente crescentes em escala log entre start e stop (inclusive)."""
    if stop <= start:
        return np.array([stop], dtype=np.int64)
    num = max(2, int(np.ceil(np.log10(stop / start) * per_decade)) + 1)
    pts = np.unique(np.round(np.geomspace(start, stop, num)).astype(np.int64))
    return pts


def fmt_num(x, sufixo="", nd=1):
    if x is None or (isinstance(x, float) and np.isnan(x)): return "—"
    return f"{x:.{nd}f}{sufixo}"
