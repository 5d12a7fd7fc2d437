# -*- coding: utf-8 -*-
"""
Hierarquia de erros do ravg.
Cada classe traz `exit_code` (1 = falha numérica, 2 = erro de input),
que o CLI usa diretamente como código de saída.
"""
from __future__ import annotations


class RavgError(Exception):
    exit_code: int = 2


# ---- input (exit 2) ---------------------------------------------------------
class InvalidDimension(RavgError):
    pass


class InvalidObservation(RavgError):
    pass


class UnsupportedMerge(RavgError):
    pass


class CorruptSnapshot(RavgError):
    def __init__(self, msg: str, offset: int | None = None):
        if offset is not None:
            msg = f"{msg} (byte {offset})"
        super().__init__(msg)
        self.offset = offset


class InsufficientData(RavgError):
    pass


class InvalidSparsity(RavgError):
    pass


class InvalidParameter(RavgError):
    pass


class UndefinedMetric(RavgError):
    pass


class ParseError(RavgError):
    def __init__(self, msg: str, line: int | None = None):
        if line is not None:
            msg = f"linha {line}: {msg}"
        super().__init__(msg)
        self.line = line


# ---- numéricos (exit 1) -----------------------------------------------------
class NumericError(RavgError):
    exit_code = 1


class DegenerateMoments(NumericError):
    pass


class SingularSystem(NumericError):
    pass


class RankOneBreakdown(NumericError):
    pass


class Diverged(NumericError):
    def __init__(self, msg: str, eta: float | None = None):
        if eta is not None:
            msg = f"{msg} (eta={eta:.6g})"
        super().__init__(msg)
        self.eta = eta


class BoundInapplicable(NumericError):
    pass
