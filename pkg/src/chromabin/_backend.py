"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy implementation in ``_fallback`` takes over. Set ``CHROMABIN_BACKEND``
to ``python`` or ``cython`` to force one (``cython`` fails loudly if the
extension is missing).
"""

from __future__ import annotations

import importlib
import os
from types import ModuleType

_MODULES = {"cython": "chromabin._kernels", "python": "chromabin._fallback"}


def load(name: str) -> ModuleType:
    """Import the kernel module registered under ``name``."""
    try:
        return importlib.import_module(_MODULES[name])
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; expected one of {sorted(_MODULES)}") from None


def available() -> list[str]:
    names = []
    for name in _MODULES:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select(choice: str) -> tuple[str, ModuleType]:
    if choice == "auto":
        try:
            return "cython", load("cython")
        except ImportError:
            return "python", load("python")
    return choice, load(choice)


name, kernels = _select(os.environ.get("CHROMABIN_BACKEND", "auto").lower())


def use(choice: str) -> str:
    """Switch the active backend at runtime; returns the previous name."""
    global name, kernels
    previous = name
    name, kernels = _select(choice)
    return previous
