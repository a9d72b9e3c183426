"""Fully-connected denoisers with hand-implemented backpropagation.

A denoiser computes

    y = clamp( c_skip(sigma) * x_t + c_out(sigma) * F(h), -U, U )
    h = concat( c_in(sigma) * x_t, fourier_embed(c_noise(sigma)) )

where F is a plain MLP. The topology is fixed (dense layers plus an
elementwise activation), which keeps the gradient path closed-form and
checkable against finite differences.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, NumericError, ShapeError
from ..rng import substream
from . import kernels

EMBED_DIM = 16
_EMBED_FREQS = 2.0 ** np.arange(EMBED_DIM // 2)


def fourier_embed(u: np.ndarray) -> np.ndarray:
    """(n,) scalar noise labels -> (n, EMBED_DIM) sin/cos features."""
    ang = np.asarray(u, dtype=np.float64)[:, None] * _EMBED_FREQS
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _embed_grad(u: np.ndarray) -> np.ndarray:
    # derivative of fourier_embed w.r.t. u (unused by training: u depends
    # only on sigma, never on parameters); kept for completeness of tests
    ang = np.asarray(u, dtype=np.float64)[:, None] * _EMBED_FREQS
    return np.concatenate([np.cos(ang) * _EMBED_FREQS,
                           -np.sin(ang) * _EMBED_FREQS], axis=1)


@dataclass(frozen=True)
class Preconditioner:
    """Noise-dependent scalings around the raw network.

    skip_mode "edm" gives the identity limit at sigma -> 0 (c_skip -> 1,
    c_out -> 0); "none" zeroes the skip path (residual denoisers).
    out_mode "unit" fixes c_out = 1 so an external range adapter owns the
    output scale.
    """

    sigma_data: float = 0.5
    skip_mode: str = "edm"   # edm | none
    out_mode: str = "edm"    # edm | unit

    def __post_init__(self):
        if self.sigma_data <= 0:
            raise ConfigError("sigma_data must be positive")
        if self.skip_mode not in ("edm", "none") or \
                self.out_mode not in ("edm", "unit"):
            raise ConfigError("bad preconditioner mode")

    def c_skip(self, sigma):
        sd2 = self.sigma_data**2
        s = np.asarray(sigma, dtype=float)
        if self.skip_mode == "none":
            return np.zeros_like(s)
        return sd2 / (s * s + sd2)

    def c_out(self, sigma):
        s = np.asarray(sigma, dtype=float)
        if self.out_mode == "unit":
            return np.ones_like(s)
        return s * self.sigma_data / np.sqrt(s * s + self.sigma_data**2)

    def c_in(self, sigma):
        s = np.asarray(sigma, dtype=float)
        return 1.0 / np.sqrt(s * s + self.sigma_data**2)

    def c_noise(self, sigma):
        return np.log(np.asarray(sigma, dtype=float)) / 4.0

    def loss_weight(self, sigma):
        """EDM convention: 1 / c_out(sigma)^2 (unit weight in unit mode)."""
        s = np.asarray(sigma, dtype=float)
        if self.out_mode == "unit":
            return np.ones_like(s)
        return (s * s + self.sigma_data**2) / (s * self.sigma_data) ** 2

    def to_dict(self):
        return {"sigma_data": self.sigma_data, "skip_mode": self.skip_mode,
                "out_mode": self.out_mode}


@dataclass(eq=False)
class MlpParams:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "silu"
    init_seed: int = 0

    @staticmethod
    def init(sizes, activation: str = "silu", seed: int = 0) -> "MlpParams":
        if len(sizes) < 2:
            raise ConfigError("need at least input and output layer sizes")
        if activation not in ("relu", "silu"):
            raise ConfigError(f"unknown activation {activation!r}")
        rng = substream(seed, 101)
        weights, biases = [], []
        n_layers = len(sizes) - 1
        for i, (d_in, d_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if i == n_layers - 1:
                # zero output layer: the network starts at its skip path
                # (exact zero for residual denoisers), which keeps early
                # training from injecting large random outputs
                weights.append(np.zeros((d_out, d_in)))
            else:
                weights.append(rng.standard_normal((d_out, d_in))
                               * np.sqrt(2.0 / d_in))
            biases.append(np.zeros(d_out))
        return MlpParams(sizes=tuple(sizes), weights=weights, biases=biases,
                         activation=activation, init_seed=seed)

    def flat(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(sizes=self.sizes,
                         weights=[w.copy() for w in self.weights],
                         biases=[b.copy() for b in self.biases],
                         activation=self.activation, init_seed=self.init_seed)

    def n_params(self) -> int:
        return sum(a.size for a in self.flat())

    def check_finite(self):
        for a in self.flat():
            if not np.all(np.isfinite(a)):
                raise NumericError("non-finite network parameters")


def _act_fwd(name, z):
    return kernels.silu_fwd(z) if name == "silu" else kernels.relu_fwd(z)


def _act_bwd(name, z, da):
    return kernels.silu_bwd(z, da) if name == "silu" else \
        kernels.relu_bwd(z, da)


@dataclass(eq=False)
class Denoiser:
    """MLP denoiser: owns parameters, preconditioning, and the output bound."""

    params: MlpParams
    pre: Preconditioner
    U: float
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.params.sizes[-1]

    @staticmethod
    def create(dim: int, hidden: tuple[int, ...] = (256, 256), U: float = 1.0,
               sigma_data: float = 0.5, activation: str = "silu",
               seed: int = 0, skip_mode: str = "edm",
               out_mode: str = "edm") -> "Denoiser":
        sizes = (dim + EMBED_DIM, *hidden, dim)
        return Denoiser(params=MlpParams.init(sizes, activation, seed),
                        pre=Preconditioner(sigma_data=sigma_data,
                                           skip_mode=skip_mode,
                                           out_mode=out_mode),
                        U=U)

    # -- forward ---------------------------------------------------------

    def _stage(self, x_t: np.ndarray, sigma) -> tuple:
        x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        if x_t.shape[1] != self.dim:
            raise ShapeError(f"expected input dim {self.dim}, "
                             f"got {x_t.shape[1]}")
        sig = np.broadcast_to(np.asarray(sigma, dtype=float),
                              (x_t.shape[0],)).astype(float)
        emb = fourier_embed(self.pre.c_noise(sig))
        h = np.concatenate([self.pre.c_in(sig)[:, None] * x_t, emb], axis=1)
        return x_t, sig, h

    def _mlp_forward(self, h0: np.ndarray):
        p = self.params
        zs, hs = [], [h0]
        h = h0
        n_layers = len(p.weights)
        for i, (w, b) in enumerate(zip(p.weights, p.biases)):
            z = h @ w.T + b
            zs.append(z)
            h = _act_fwd(p.activation, z) if i < n_layers - 1 else z
            hs.append(h)
        return zs, hs

    def forward(self, x_t: np.ndarray, sigma) -> np.ndarray:
        """Denoised estimate, clamped elementwise to [-U, U]."""
        single = np.asarray(x_t).ndim == 1
        x, sig, h0 = self._stage(x_t, sigma)
        _, hs = self._mlp_forward(h0)
        y_raw = (self.pre.c_skip(sig)[:, None] * x
                 + self.pre.c_out(sig)[:, None] * hs[-1])
        y = kernels.clamp_fwd(y_raw, self.U)
        return y[0] if single else y

    def __call__(self, x_t, sigma):
        return self.forward(x_t, sigma)

    # -- backward ----------------------------------------------------------

    def backward(self, x_t: np.ndarray, sigma, target: np.ndarray,
                 loss_weight=None, l2_output: float = 0.0):
        """Gradients of the batch-mean weighted MSE.

        loss = mean_n w_n [ ||y_n - target_n||^2 + l2_output ||y_n||^2 ]

        Returns (grads, loss) where grads matches params.flat() layout.
        """
        x, sig, h0 = self._stage(x_t, sigma)
        target = np.atleast_2d(np.asarray(target, dtype=np.float64))
        if target.shape != x.shape and target.shape[1] != self.dim:
            raise ShapeError("target shape mismatch")
        n = x.shape[0]
        if n == 0:
            raise ConfigError("empty batch")
        w = np.ones(n) if loss_weight is None else \
            np.broadcast_to(np.asarray(loss_weight, dtype=float), (n,))

        zs, hs = self._mlp_forward(h0)
        c_skip = self.pre.c_skip(sig)[:, None]
        c_out = self.pre.c_out(sig)[:, None]
        y_raw = c_skip * x + c_out * hs[-1]
        y = kernels.clamp_fwd(y_raw, self.U)

        resid = y - target
        loss = float(np.mean(w * np.sum(resid * resid, axis=1)))
        if l2_output:
            loss += l2_output * float(np.mean(w * np.sum(y * y, axis=1)))
        if not np.isfinite(loss):
            bad = np.flatnonzero(~np.isfinite(
                np.sum(resid * resid, axis=1)))
            raise NumericError(
                f"non-finite loss (first bad batch index "
                f"{bad[0] if bad.size else '?'})")

        dy = (2.0 / n) * (w[:, None] * resid)
        if l2_output:
            dy = dy + (2.0 * l2_output / n) * (w[:, None] * y)
        dy_raw = kernels.clamp_bwd(y_raw, self.U, dy)
        dF = c_out * dy_raw

        p = self.params
        grads = [None] * (2 * len(p.weights))
        delta = dF
        for i in range(len(p.weights) - 1, -1, -1):
            if i < len(p.weights) - 1:
                delta = _act_bwd(p.activation, zs[i], delta)
            grads[2 * i] = delta.T @ hs[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ p.weights[i]
        return grads, loss

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Binary with JSON header + raw little-endian weights."""
        p = self.params
        header = json.dumps({
            "sizes": list(p.sizes), "activation": p.activation,
            "init_seed": p.init_seed, "U": self.U,
            "pre": self.pre.to_dict(), "meta": self.meta,
        }).encode()
        with open(path, "wb") as fh:
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            for a in p.flat():
                fh.write(a.astype("<f8").tobytes())

    @staticmethod
    def load(path: str | Path) -> "Denoiser":
        raw = Path(path).read_bytes()
        (hlen,) = struct.unpack("<I", raw[:4])
        head = json.loads(raw[4:4 + hlen].decode())
        sizes = tuple(head["sizes"])
        params = MlpParams.init(sizes, head["activation"], head["init_seed"])
        off = 4 + hlen
        for a in params.flat():
            nb = a.size * 8
            a[...] = np.frombuffer(raw[off:off + nb],
                                   dtype="<f8").reshape(a.shape)
            off += nb
        return Denoiser(params=params, pre=Preconditioner(**head["pre"]),
                        U=head["U"], meta=head.get("meta", {}))

    def param_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for a in self.params.flat():
            h.update(a.astype("<f8").tobytes())
        return h.hexdigest()
