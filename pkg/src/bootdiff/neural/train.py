"""Minibatch training loop for denoisers (stage 1 of the pipeline)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DivergenceError
from ..rng import spawn_seed, substream
from ..schedule import DiffusionSchedule
from ..synthdata import Dataset
from . import kernels
from .mlp import Denoiser

_DIVERGE_FACTOR = 1e3


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    optimizer: str = "adam"  # adam | sgd
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    hidden: tuple[int, ...] = (256, 256)
    activation: str = "silu"
    max_steps: int | None = None  # cap on optimizer steps (compute budget)
    shards: int = 1  # gradient-accumulation shards per batch

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.shards < 1:
            raise ConfigError("shards must be >= 1")


class Optimizer:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        if cfg.optimizer == "adam":
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        cfg = self.cfg
        if cfg.optimizer == "sgd":
            for p, g in zip(self.params, grads):
                p -= cfg.lr * g
            return
        b1, b2 = cfg.betas
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            kernels.adam_step(p, g, m, v, self.t, cfg.lr, b1, b2, cfg.eps)


def _tree_sum(grad_sets: list[list[np.ndarray]]) -> list[np.ndarray]:
    """Pairwise reduction in fixed order (parallel == serial up to
    float reassociation)."""
    while len(grad_sets) > 1:
        nxt = []
        for i in range(0, len(grad_sets) - 1, 2):
            nxt.append([a + b for a, b in zip(grad_sets[i], grad_sets[i + 1])])
        if len(grad_sets) % 2:
            nxt.append(grad_sets[-1])
        grad_sets = nxt
    return grad_sets[0]


def sharded_gradients(model: Denoiser, x_t, sigma, target, loss_weight,
                      shards: int, l2_output: float = 0.0):
    """Batch gradients via per-shard computation + deterministic tree sum."""
    n = x_t.shape[0]
    bounds = np.linspace(0, n, shards + 1).astype(int)
    grad_sets, losses, counts = [], [], []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi == lo:
            continue
        g, loss = model.backward(x_t[lo:hi], sigma[lo:hi], target[lo:hi],
                                 loss_weight[lo:hi], l2_output=l2_output)
        w = (hi - lo) / n
        grad_sets.append([gi * w for gi in g])
        losses.append(loss * w)
        counts.append(hi - lo)
    return _tree_sum(grad_sets), float(sum(losses))


@dataclass(eq=False)
class TrainingCurve:
    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    def record(self, step: int, loss: float) -> None:
        self.steps.append(step)
        self.losses.append(loss)

    def rows(self):
        return list(zip(self.steps, self.losses))


def train_denoiser(model: Denoiser, data: np.ndarray,
                   schedule: DiffusionSchedule, cfg: TrainConfig,
                   stream: int = 0) -> TrainingCurve:
    """Denoising-score-matching training of `model` on clean samples `data`.

    Per step: draw a minibatch, per-sample noise levels (log-uniform over
    the schedule), noise the batch, and take one optimizer step on the
    EDM-weighted MSE to the clean samples. Deterministic per (cfg.seed,
    stream) under serial execution.
    """
    n = data.shape[0]
    rng = substream(cfg.seed, 201, stream)
    opt = Optimizer(model.params.flat(), cfg)
    curve = TrainingCurve()
    steps_per_epoch = max(1, (n + cfg.batch_size - 1) // cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    if cfg.max_steps is not None:
        total = min(total, cfg.max_steps)
    initial_loss = None
    step = 0
    while step < total:
        order = rng.permutation(n)
        for b in range(steps_per_epoch):
            if step >= total:
                break
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if idx.size == 0:
                continue
            x0 = data[idx]
            sig = schedule.sample_sigma(rng, idx.size)
            x_t = x0 + sig[:, None] * rng.standard_normal(x0.shape)
            w = model.pre.loss_weight(sig)
            if cfg.shards > 1:
                grads, loss = sharded_gradients(model, x_t, sig, x0, w,
                                                cfg.shards)
            else:
                grads, loss = model.backward(x_t, sig, x0, w)
            opt.step(grads)
            if initial_loss is None:
                initial_loss = max(loss, 1e-12)
            if loss > _DIVERGE_FACTOR * initial_loss:
                raise DivergenceError(
                    f"training diverged at step {step} "
                    f"(loss {loss:.3e} vs initial {initial_loss:.3e})",
                    step=step)
            curve.record(step, loss)
            step += 1
    return curve


def train_view_denoiser(ds: Dataset, schedule: DiffusionSchedule,
                        cfg: TrainConfig, U: float,
                        sigma_data: float | None = None, stream: int = 0
                        ) -> tuple[Denoiser, TrainingCurve]:
    """Train a per-view denoiser on a projected dataset (no location id).

    `stream` keys both the parameter init and the data order, so distinct
    views trained from one base seed get independent randomness.
    """
    if ds.kind != "view":
        raise ConfigError("train_view_denoiser expects a view dataset")
    if sigma_data is None:
        sigma_data = max(float(ds.samples.std()), 1e-3)
    model = Denoiser.create(dim=ds.dim, hidden=cfg.hidden, U=U,
                            sigma_data=sigma_data, activation=cfg.activation,
                            seed=spawn_seed(cfg.seed, 7, stream))
    curve = train_denoiser(model, ds.samples, schedule, cfg, stream=stream)
    model.meta.update({"view_id": ds.view_id, "spec_id": ds.spec_id,
                       "sigma_data": sigma_data})
    return model, curve
