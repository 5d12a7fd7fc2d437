# -*- coding: utf-8 -*-
"""
Definições lidas do ambiente (com .env opcional via python-dotenv):
- RAVG_THREADS: teto de paralelismo (default: nº de CPUs)
- RAVG_DATA_DIR: pasta de dados/resultados (default: <projeto>/data)
- RAVG_DEBUG: ativa verificações de descida do objetivo nos extratores
"""
from __future__ import annotations
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
import os

from dotenv import load_dotenv

_TRUE = ("1", "true", "t", "yes", "y")


@dataclass(frozen=True)
class Settings:
    threads: int
    data_dir: Path | None
    debug: bool


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    load_dotenv()
    data_dir = os.getenv("RAVG_DATA_DIR", "").strip()
    return Settings(
        threads=_int_env("RAVG_THREADS", os.cpu_count() or 1),
        data_dir=Path(data_dir) if data_dir else None,
        debug=os.getenv("RAVG_DEBUG", "0").strip().lower() in _TRUE,
    )
