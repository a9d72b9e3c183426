"""Forward noising, Tweedie conversion, and the reverse-process sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError, NumericError
from .schedule import DiffusionSchedule


@dataclass(frozen=True, eq=False)
class NoisySample:
    x_t: np.ndarray
    t: float
    sigma: float
    x0_ref: np.ndarray | None = None


def add_noise(x0: np.ndarray, t: float, schedule: DiffusionSchedule,
              rng: np.random.Generator) -> NoisySample:
    """x_t = x_0 + sigma(t) * eps with standard normal eps."""
    if not (0 < t <= schedule.T):
        raise ConfigError(f"t={t} outside (0, {schedule.T}]")
    x0 = np.asarray(x0, dtype=np.float64)
    sigma = float(schedule.sigma(t))
    x_t = x0 + sigma * rng.standard_normal(x0.shape)
    return NoisySample(x_t=x_t, t=float(t), sigma=sigma, x0_ref=x0)


def score_from_denoiser(denoised: np.ndarray, x_t: np.ndarray,
                        sigma: float) -> np.ndarray:
    """Tweedie: score(x_t) = (E[x0|x_t] - x_t) / sigma^2."""
    if sigma <= 0:
        raise NumericError(f"sigma must be positive, got {sigma}")
    return (np.asarray(denoised) - np.asarray(x_t)) / (sigma * sigma)


def denoiser_to_score(denoise_fn):
    """Wrap a denoiser callable into a score callable."""
    return lambda x, sigma: score_from_denoiser(denoise_fn(x, sigma), x, sigma)


def sample_reverse(denoise_fn, schedule: DiffusionSchedule, steps: int,
                   rng: np.random.Generator, m: int, n: int = 1,
                   method: str = "heun", stochastic: bool = False,
                   trajectory: list | None = None) -> np.ndarray:
    """Integrate the probability-flow ODE from sigma_max down to sigma_min.

    The ODE in sigma-time is dx/dsigma = (x - D(x, sigma)) / sigma; "heun"
    uses a second-order trapezoidal corrector (two denoiser calls per step),
    "euler" a single call. With stochastic=True an Euler-Maruyama step of the
    reverse SDE is taken instead. If `trajectory` is a list, rows
    (step, t, sigma, mean ||x||) are appended.
    """
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    if method not in ("heun", "euler"):
        raise ConfigError(f"unknown method {method!r}")
    ladder = schedule.step_ladder(steps)
    x = schedule.sigma_max * rng.standard_normal((n, m))
    if trajectory is not None:
        trajectory.append((0, ladder[0], ladder[0],
                           float(np.mean(np.linalg.norm(x, axis=1)))))
    for i in range(steps):
        s_cur, s_next = ladder[i], ladder[i + 1]
        if stochastic:
            score = (denoise_fn(x, s_cur) - x) / (s_cur * s_cur)
            dv = s_cur * s_cur - s_next * s_next
            x = x + dv * score + np.sqrt(dv) * rng.standard_normal((n, m))
        else:
            d = (x - denoise_fn(x, s_cur)) / s_cur
            x_e = x + (s_next - s_cur) * d
            if method == "heun":
                d2 = (x_e - denoise_fn(x_e, s_next)) / s_next
                x = x + (s_next - s_cur) * 0.5 * (d + d2)
            else:
                x = x_e
        if not np.all(np.isfinite(x)):
            raise DivergenceError(
                f"non-finite state at step {i + 1} (sigma {s_next:g})",
                step=i + 1)
        if trajectory is not None:
            trajectory.append((i + 1, s_next, s_next,
                               float(np.mean(np.linalg.norm(x, axis=1)))))
    return x[0] if n == 1 else x
