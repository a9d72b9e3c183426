"""Kernel backend selection.

Tries the compiled Cython extension first and falls back to numpy. The
active backend name is exposed as BACKEND; `benchmarks/bench_kernels.py`
compares the two.
"""

from __future__ import annotations

import numpy as np

from . import _pykernels

try:  # pragma: no cover - exercised only when the extension is built
    from . import _ckernels as _impl

    _COMPILED = True
except ImportError:  # pragma: no cover
    _impl = _pykernels
    _COMPILED = False

BACKEND = _impl.BACKEND
numpy_impl = _pykernels
compiled_impl = _impl if _COMPILED else None


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def silu_fwd(z):
    return _impl.silu_fwd(_c(z))


def silu_bwd(z, da):
    return _impl.silu_bwd(_c(z), _c(da))


def relu_fwd(z):
    return _impl.relu_fwd(_c(z))


def relu_bwd(z, da):
    return _impl.relu_bwd(_c(z), _c(da))


def clamp_fwd(y, limit):
    return _impl.clamp_fwd(_c(y), float(limit))


def clamp_bwd(y_raw, limit, dy):
    return _impl.clamp_bwd(_c(y_raw), float(limit), _c(dy))


def adam_step(p, g, m, v, t, lr, b1, b2, eps):
    _impl.adam_step(p, _c(g), m, v, int(t), float(lr), float(b1), float(b2),
                    float(eps))
