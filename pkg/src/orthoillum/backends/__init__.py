"""Kernel backend selection.

The hot loops (fused residual/gradient accumulation, median filtering)
exist twice: a compiled Cython extension and a pure numpy fallback with
identical call signatures.  The compiled one is preferred when the
extension built; ORTHOILLUM_BACKEND=python|compiled overrides.
"""

from __future__ import annotations

import os


def _load():
    choice = os.environ.get("ORTHOILLUM_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "compiled", "python"):
        raise ValueError(
            f"ORTHOILLUM_BACKEND must be 'auto', 'compiled' or 'python', got {choice!r}"
        )
    if choice in ("auto", "compiled"):
        try:
            from . import _kernels

            return _kernels
        except ImportError:
            if choice == "compiled":
                raise
    from . import pykernels

    return pykernels


_active = _load()

NAME: str = _active.NAME


def active():
    """The module providing the kernel functions for this process."""
    return _active
