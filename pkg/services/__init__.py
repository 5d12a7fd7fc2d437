# services/__init__.py
# -*- coding: utf-8 -*-
"""
Hub de reexportação do pacote services.
Junta num só sítio os símbolos públicos (__all__) de cada módulo,
para `from services import new_moments, ols_th, ...`.
"""

from __future__ import annotations
from importlib import import_module

from .errors import RavgError  # noqa: F401

__all__: list[str] = ["RavgError"]

_MODULES = [
    "moments",
    "standardize",
    "linsolve",
    "extract",
    "simgen",
    "evaluation",
    "experiments",
    "io_csv",
]


def _export(mod_name: str) -> None:
    mod = import_module(f"{__name__}.{mod_name}")
    for name in getattr(mod, "__all__", []):
        # nomes homónimos de submódulos (ex.: standardize) ficam com o módulo
        if hasattr(mod, name) and name not in globals():
            globals()[name] = getattr(mod, name)
            __all__.append(name)


for _m in _MODULES:
    _export(_m)

del _m
