# -*- coding: utf-8 -*-
"""
Médias correntes (running averages): as estatísticas suficientes
(n, μx, μy, Sxx, Sxy, Syy) atualizadas observação a observação.

Modos de ponderação:
- Uniform: α_n = 1/(n+1) → médias cumulativas exatas
- Exponential(α): α_n = max(α, 1/(n+1)) → esquecimento para drift

A atualização é sempre a combinação convexa s ← s + α_n·(s_obs − s)
(nunca soma-e-divide), para não transbordar com n grande. Nesta forma uma
feature constante mantém média e segundo momento exatos.
"""
from __future__ import annotations
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator
import io
import logging
import math
import os
import struct

import numpy as np

from services.errors import (
    CorruptSnapshot, InvalidDimension, InvalidObservation, InvalidParameter, UnsupportedMerge,
)

logger = logging.getLogger(__name__)

__all__ = [
    "WeightMode", "UNIFORM", "exponential", "Observation", "MomentSet",
    "new_moments", "update", "update_batch", "merge",
    "snapshot_write", "snapshot_read", "snapshot_lock", "write_snapshot_file", "read_snapshot_file",
]


# ---- modo de ponderação ------------------------------------------------------
@dataclass(frozen=True)
class WeightMode:
    kind: str = "uniform"       # "uniform" | "exponential"
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "exponential"):
            raise InvalidParameter(f"modo de ponderação desconhecido: {self.kind!r}")
        if self.kind == "exponential" and not (0.0 < self.alpha < 1.0):
            raise InvalidParameter(f"taxa de adaptação fora de (0,1): {self.alpha}")

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform"

    def step_weight(self, n: int, batch: int = 1) -> float:
        """Peso α_n do passo que junta `batch` observações a n já vistas."""
        w = batch / (n + batch)
        if self.is_uniform:
            return w
        return max(self.alpha, w)


UNIFORM = WeightMode()


def exponential(alpha: float) -> WeightMode:
    return WeightMode("exponential", float(alpha))


# ---- observação ---------------------------------------------------------------
@dataclass(frozen=True)
class Observation:
    x: np.ndarray
    y: float

    @classmethod
    def of(cls, x, y, p: int | None = None) -> "Observation":
        xv = np.asarray(x, dtype=np.float64).reshape(-1)
        if p is not None and xv.shape[0] != p:
            raise InvalidDimension(f"observação com {xv.shape[0]} features, esperado {p}")
        yv = float(y)
        if not (np.all(np.isfinite(xv)) and math.isfinite(yv)):
            raise InvalidObservation("observação com valores não finitos")
        return cls(xv, yv)


# ---- conjunto de momentos ------------------------------------------------------
@dataclass
class MomentSet:
    p: int
    n: int = 0
    mu_x: np.ndarray = field(default=None)   # type: ignore[assignment]
    mu_y: float = 0.0
    S_xx: np.ndarray = field(default=None)   # type: ignore[assignment]
    S_xy: np.ndarray = field(default=None)   # type: ignore[assignment]
    S_yy: float = 0.0
    mode: WeightMode = UNIFORM

    def __post_init__(self):
        if self.mu_x is None:
            self.mu_x = np.zeros(self.p)
        if self.S_xx is None:
            self.S_xx = np.zeros((self.p, self.p))
        if self.S_xy is None:
            self.S_xy = np.zeros(self.p)

    # -- leitura --
    @property
    def effective_n(self) -> float:
        """n para os solvers: n em Uniform, min(n, 1/α) em Exponential."""
        if self.mode.is_uniform:
            return float(self.n)
        return float(min(self.n, 1.0 / self.mode.alpha))

    @property
    def nbytes(self) -> int:
        return int(self.mu_x.nbytes + self.S_xx.nbytes + self.S_xy.nbytes + 3 * 8)

    def copy(self) -> "MomentSet":
        return MomentSet(self.p, self.n, self.mu_x.copy(), self.mu_y, self.S_xx.copy(),
                         self.S_xy.copy(), self.S_yy, self.mode)

    def same_as(self, other: "MomentSet") -> bool:
        """Igualdade bit a bit, campo a campo."""
        return (
            self.p == other.p and self.n == other.n and self.mode == other.mode
            and self.mu_y == other.mu_y and self.S_yy == other.S_yy
            and np.array_equal(self.mu_x, other.mu_x)
            and np.array_equal(self.S_xy, other.S_xy)
            and np.array_equal(self.S_xx, other.S_xx)
        )

    # -- escrita (um único escritor por MomentSet) --
    def update(self, x, y) -> "MomentSet":
        obs = x if isinstance(x, Observation) else Observation.of(x, y, self.p)
        if obs.x.shape[0] != self.p:
            raise InvalidDimension(f"observação com {obs.x.shape[0]} features, esperado {self.p}")
        a = self.mode.step_weight(self.n)
        xv, yv = obs.x, obs.y
        self.mu_x = self.mu_x + a * (xv - self.mu_x)
        self.mu_y = self.mu_y + a * (yv - self.mu_y)
        self.S_xy = self.S_xy + a * (yv * xv - self.S_xy)
        self.S_yy = self.S_yy + a * (yv * yv - self.S_yy)
        # triângulo inferior e espelho
        low = np.tril_indices(self.p)
        S = self.S_xx
        S[low] = S[low] + a * (np.outer(xv, xv)[low] - S[low])
        self.S_xx = _mirror_lower(S)
        self.n += 1
        return self

    def update_batch(self, X, y) -> "MomentSet":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise InvalidDimension(f"lote com forma {X.shape}, esperado (·, {self.p})")
        if X.shape[0] != y.shape[0]:
            raise InvalidDimension(f"lote com {X.shape[0]} linhas e {y.shape[0]} respostas")
        nb = X.shape[0]
        if nb == 0:
            return self
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidObservation("lote com valores não finitos")
        a = self.mode.step_weight(self.n, nb)
        # colunas constantes: média exata; o resto do lote entra centrado
        const = np.all(X == X[:1], axis=0)
        mean = np.where(const, X[0], X.mean(axis=0))
        Xc = X - mean
        S_b = Xc.T @ Xc / nb + np.outer(mean, mean)
        self.mu_x = self.mu_x + a * (mean - self.mu_x)
        self.mu_y = self.mu_y + a * (float(y.mean()) - self.mu_y)
        self.S_xy = self.S_xy + a * ((X.T @ y) / nb - self.S_xy)
        self.S_yy = self.S_yy + a * (float(y @ y) / nb - self.S_yy)
        self.S_xx = _mirror_lower(self.S_xx + a * (S_b - self.S_xx))
        self.n += nb
        return self


def _mirror_lower(S: np.ndarray) -> np.ndarray:
    low = np.tril(S)
    return low + np.tril(low, -1).T


# ---- API funcional ------------------------------------------------------------
def new_moments(p: int, mode: WeightMode = UNIFORM) -> MomentSet:
    if int(p) < 1:
        raise InvalidDimension(f"p tem de ser ≥ 1 (recebido {p})")
    return MomentSet(int(p), mode=mode)


def update(m: MomentSet, obs: Observation) -> MomentSet:
    return m.update(obs, None)


def update_batch(m: MomentSet, X, y) -> MomentSet:
    return m.update_batch(X, y)


def merge(a: MomentSet, b: MomentSet) -> MomentSet:
    """Momentos da concatenação das duas streams (só Uniform)."""
    if not (a.mode.is_uniform and b.mode.is_uniform):
        raise UnsupportedMerge("merge só é exato em modo Uniform")
    if a.p != b.p:
        raise InvalidDimension(f"merge com p diferentes: {a.p} vs {b.p}")
    if b.n == 0:
        return a.copy()
    if a.n == 0:
        return b.copy()
    n = a.n + b.n
    wb = b.n / n
    return MomentSet(
        p=a.p, n=n,
        mu_x=a.mu_x + wb * (b.mu_x - a.mu_x),
        mu_y=a.mu_y + wb * (b.mu_y - a.mu_y),
        S_xx=_mirror_lower(a.S_xx + wb * (b.S_xx - a.S_xx)),
        S_xy=a.S_xy + wb * (b.S_xy - a.S_xy),
        S_yy=a.S_yy + wb * (b.S_yy - a.S_yy),
        mode=UNIFORM,
    )


# ---- snapshot binário ------------------------------------------------------------
# "RAVG" | u32 versão | u8 modo | f64 α | u64 p | u64 n | f64[]: mu_x, mu_y, S_xy, S_yy, S_xx
_MAGIC = b"RAVG"
_VERSION = 1
_HEADER = struct.Struct("<4sIBdQQ")
_MAX_P = 1 << 20


def snapshot_write(m: MomentSet, sink: BinaryIO | str | Path | None = None) -> bytes:
    mode_code = 0 if m.mode.is_uniform else 1
    buf = io.BytesIO()
    buf.write(_HEADER.pack(_MAGIC, _VERSION, mode_code, float(m.mode.alpha), m.p, m.n))
    for arr in (m.mu_x, np.array([m.mu_y]), m.S_xy, np.array([m.S_yy]), m.S_xx.reshape(-1)):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    blob = buf.getvalue()
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(blob)
    elif sink is not None:
        sink.write(blob)
    return blob


def snapshot_read(source: bytes | BinaryIO | str | Path) -> MomentSet:
    if isinstance(source, (bytes, bytearray, memoryview)):
        raw = bytes(source)
    elif isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
    else:
        raw = source.read()

    if len(raw) < _HEADER.size:
        raise CorruptSnapshot("cabeçalho truncado", offset=len(raw))
    magic, version, mode_code, alpha, p, n = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise CorruptSnapshot(f"magic inválido {magic!r}", offset=0)
    if version != _VERSION:
        raise CorruptSnapshot(f"versão {version} não suportada", offset=4)
    if mode_code not in (0, 1):
        raise CorruptSnapshot(f"modo {mode_code} inválido", offset=8)
    if p < 1 or p > _MAX_P:
        raise CorruptSnapshot(f"p={p} fora do intervalo suportado", offset=17)
    try:
        mode = UNIFORM if mode_code == 0 else exponential(alpha)
    except InvalidParameter as e:
        raise CorruptSnapshot(str(e), offset=9) from None

    off = _HEADER.size
    blocks = {}
    for name, count in (("mu_x", p), ("mu_y", 1), ("S_xy", p), ("S_yy", 1), ("S_xx", p * p)):
        end = off + 8 * count
        if end > len(raw):
            raise CorruptSnapshot(f"bloco {name} truncado", offset=len(raw))
        blocks[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=off).astype(np.float64)
        off = end
    if off != len(raw):
        raise CorruptSnapshot(f"{len(raw) - off} bytes a mais no fim", offset=off)

    return MomentSet(
        p=int(p), n=int(n),
        mu_x=blocks["mu_x"], mu_y=float(blocks["mu_y"][0]),
        S_xx=blocks["S_xx"].reshape(p, p), S_xy=blocks["S_xy"],
        S_yy=float(blocks["S_yy"][0]), mode=mode,
    )


@contextmanager
def snapshot_lock(path: str | Path) -> Iterator[Path]:
    """Lock consultivo `<path>.lock` (criação exclusiva) durante o bloco."""
    path = Path(path)
    lock = path.with_name(path.name + ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise InvalidParameter(
            f"snapshot {path} bloqueado por outro processo ({lock}); se nenhum accumulate "
            f"estiver a correr, o lock ficou de uma execução interrompida: apague {lock}"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        yield path
    finally:
        os.close(fd)
        lock.unlink(missing_ok=True)


def _replace_file(m: MomentSet, path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    snapshot_write(m, tmp)
    os.replace(tmp, path)
    logger.debug("snapshot gravado em %s (n=%d, p=%d)", path, m.n, m.p)


def write_snapshot_file(m: MomentSet, path: str | Path, locked: bool = False) -> Path:
    """Escreve via tmp + replace. `locked=True`: o chamador já tem o lock."""
    path = Path(path)
    if locked:
        _replace_file(m, path)
    else:
        with snapshot_lock(path):
            _replace_file(m, path)
    return path


def read_snapshot_file(path: str | Path) -> MomentSet:
    path = Path(path)
    if not path.exists():
        raise InvalidParameter(f"snapshot não encontrado: {path}")
    return snapshot_read(path)
