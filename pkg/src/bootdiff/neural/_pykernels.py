"""Pure-numpy implementations of the hot elementwise kernels.

Signatures mirror the compiled Cython module `_ckernels`; which one is used
is decided once at import time in `kernels`.
"""

import numpy as np

BACKEND = "numpy"


def silu_fwd(z: np.ndarray) -> np.ndarray:
    return z / (1.0 + np.exp(-z))


def silu_bwd(z: np.ndarray, da: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-z))
    return da * (s * (1.0 + z * (1.0 - s)))


def relu_fwd(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def relu_bwd(z: np.ndarray, da: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, da, 0.0)


def clamp_fwd(y: np.ndarray, limit: float) -> np.ndarray:
    return np.clip(y, -limit, limit)


def clamp_bwd(y_raw: np.ndarray, limit: float, dy: np.ndarray) -> np.ndarray:
    return np.where(np.abs(y_raw) < limit, dy, 0.0)


def adam_step(p: np.ndarray, g: np.ndarray, m: np.ndarray, v: np.ndarray,
              t: int, lr: float, b1: float, b2: float, eps: float) -> None:
    """One fused Adam update, in place."""
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    mhat = m / (1.0 - b1**t)
    vhat = v / (1.0 - b2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
