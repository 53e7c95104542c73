"""Backend selection for the Monte-Carlo hot loops.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``MDIQN_PURE_PYTHON`` is set to a non-empty value, the
numpy implementation is used. Both expose the same functions.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

if os.environ.get("MDIQN_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (``"cython"``, ``"python"`` or default)."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this install")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def tally_rounds(cls_l, cls_r, bit_l, bit_r, phase, u, mu, is_x,
                 t_left, t_right, kappa, dark, backend: str | None = None):
    k = get_backend(backend)
    return k.tally_rounds(
        np.ascontiguousarray(cls_l, dtype=np.int8),
        np.ascontiguousarray(cls_r, dtype=np.int8),
        np.ascontiguousarray(bit_l, dtype=np.int8),
        np.ascontiguousarray(bit_r, dtype=np.int8),
        np.ascontiguousarray(phase, dtype=np.float64),
        np.ascontiguousarray(u, dtype=np.float64),
        np.ascontiguousarray(mu, dtype=np.float64),
        np.ascontiguousarray(is_x, dtype=np.int8),
        float(t_left), float(t_right), float(kappa), float(dark),
    )


def hom_rounds(phase, u, a, b, kappa, dark, backend: str | None = None) -> int:
    k = get_backend(backend)
    return k.hom_rounds(
        np.ascontiguousarray(phase, dtype=np.float64),
        np.ascontiguousarray(u, dtype=np.float64),
        float(a), float(b), float(kappa), float(dark),
    )


def count_joint(s1, s2, backend: str | None = None) -> int:
    k = get_backend(backend)
    return k.count_joint(
        np.ascontiguousarray(s1, dtype=np.uint8), np.ascontiguousarray(s2, dtype=np.uint8)
    )
