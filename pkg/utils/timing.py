# utils/timing.py
from __future__ import annotations
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import List

import pandas as pd

logger = logging.getLogger(__name__)

_PERF_LOG: List[dict] = []


@dataclass
class Timing:
    label: str
    seconds: float = 0.0
    state: str = "running"

    @property
    def ms(self) -> float:
        return self.seconds * 1000.0


def clear_perf() -> None:
    _PERF_LOG.clear()


def _record(t: Timing) -> None:
    _PERF_LOG.append({"label": t.label, "ms": float(t.ms), "state": t.state})


@contextmanager
def timed(label: str, level: int = logging.DEBUG):
    """Usa com 'with timed("Nome do bloco") as t:'; t.seconds fica preenchido à saída."""
    rec = Timing(label)
    t0 = time.perf_counter()
    try:
        yield rec
    except Exception:
        rec.seconds = time.perf_counter() - t0
        rec.state = "error"
        _record(rec)
        logger.log(level, "❌ %s — %.0f ms", label, rec.ms)
        raise
    else:
        rec.seconds = time.perf_counter() - t0
        rec.state = "ok"
        _record(rec)
        logger.log(level, "✅ %s — %.0f ms", label, rec.ms)


def perf_table() -> pd.DataFrame:
    """Registo acumulado de blocos cronometrados (label, ms, state)."""
    df = pd.DataFrame(_PERF_LOG, columns=["label", "ms", "state"])
    if not df.empty:
        df["ms"] = df["ms"].round(0).astype(int)
    return df
