# -*- coding: utf-8 -*-
"""
Leitura/escrita de CSV:
- iter_csv_batches: ingestão em streaming (linhas x1..xp,y), valida largura e
  números linha a linha; cabeçalho opcional (detetado pela 1.ª linha não numérica)
- read_csv_safe: tabelas pequenas (presets), separador ; , ou tab
"""
from __future__ import annotations
from pathlib import Path
from typing import Iterator, TextIO
import csv
import io
import math
import sys

import numpy as np
import pandas as pd

from services.errors import InvalidDimension, ParseError

__all__ = ["iter_csv_batches", "read_features_csv", "read_csv_safe", "write_table"]


def _is_numeric_row(row: list[str]) -> bool:
    try:
        [float(c) for c in row]
        return True
    except ValueError:
        return False


def _open(source: str | Path | TextIO | None) -> tuple[TextIO, bool]:
    if source is None or str(source) == "-":
        return sys.stdin, False
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ParseError(f"ficheiro não encontrado: {path}")
        return path.open("r", newline="", encoding="utf-8"), True
    return source, False


def iter_csv_batches(source: str | Path | TextIO | None, batch_rows: int = 10_000,
                     expected_width: int | None = None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Devolve lotes (X, y). A última coluna é y; erros citam a linha do ficheiro."""
    fh, close = _open(source)
    try:
        reader = csv.reader(fh)
        width = expected_width
        first_data = True
        buf: list[list[float]] = []
        for line_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if line_no == 1 and not _is_numeric_row(row):
                if width is None:
                    width = len(row)
                elif len(row) != width:
                    raise InvalidDimension(f"cabeçalho com {len(row)} colunas, esperado {width}")
                continue
            if width is None:
                width = len(row)
            if width < 2:
                raise ParseError(f"são precisas ≥ 2 colunas (features + y), há {width}", line=line_no)
            if len(row) != width:
                if first_data and expected_width is not None:
                    raise InvalidDimension(f"{len(row)} colunas, o snapshot espera {width} (p={width - 1} + y)")
                raise ParseError(f"linha com {len(row)} campos, esperado {width}", line=line_no)
            first_data = False
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ParseError(f"valor não numérico: {row!r}", line=line_no) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("valor não finito", line=line_no)
            buf.append(vals)
            if len(buf) >= batch_rows:
                arr = np.asarray(buf, dtype=np.float64)
                buf = []
                yield arr[:, :-1], arr[:, -1]
        if buf:
            arr = np.asarray(buf, dtype=np.float64)
            yield arr[:, :-1], arr[:, -1]
    finally:
        if close:
            fh.close()


def read_features_csv(source: str | Path, p: int) -> np.ndarray:
    """Matriz de features (sem y) para previsão; aceita p ou p+1 colunas."""
    fh, close = _open(source)
    try:
        rows = []
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if line_no == 1 and not _is_numeric_row(row):
                continue
            if len(row) not in (p, p + 1):
                raise ParseError(f"linha com {len(row)} campos, esperado {p}", line=line_no)
            try:
                rows.append([float(c) for c in row[:p]])
            except ValueError:
                raise ParseError(f"valor não numérico: {row!r}", line=line_no) from None
        return np.asarray(rows, dtype=np.float64).reshape(-1, p)
    finally:
        if close:
            fh.close()


def read_csv_safe(path: Path, expected_cols: list[str] | None = None) -> pd.DataFrame:
    if not path or not Path(path).exists():
        return pd.DataFrame(columns=expected_cols or None)
    raw = Path(path).read_bytes()
    if not raw.strip():
        return pd.DataFrame(columns=expected_cols or None)
    df = None
    for sep in (";", ",", "\t"):
        try:
            df = pd.read_csv(io.BytesIO(raw), sep=sep, engine="python", comment="#")
        except Exception:
            df = None
            continue
        if expected_cols is None or set(expected_cols) <= set(df.columns):
            break
    if df is None:
        return pd.DataFrame(columns=expected_cols or None)
    if expected_cols:
        for c in expected_cols:
            if c not in df.columns:
                df[c] = pd.NA
        df = df[expected_cols]
    return df


def write_table(df: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.10g")
    return path
