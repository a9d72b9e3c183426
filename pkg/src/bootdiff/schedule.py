"""Variance-exploding noise schedule.

Time is identified with the noise level: sigma(t) = t on [sigma_min, T] with
T = sigma_max, so g(t)^2 = d(sigma^2)/dt = 2t exactly. Grid nodes are
log-spaced by default ("log") or follow the rho=7 power ladder ("karras").
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class DiffusionSchedule:
    sigma_min: float
    sigma_max: float
    Q: int = 100
    rule: str = "log"

    def __post_init__(self):
        if not (0 < self.sigma_min < self.sigma_max):
            raise ConfigError("need 0 < sigma_min < sigma_max")
        if self.Q < 2:
            raise ConfigError("need at least 2 grid nodes")
        if self.rule not in ("log", "karras"):
            raise ConfigError(f"unknown grid rule {self.rule!r}")

    @property
    def T(self) -> float:
        return self.sigma_max

    def sigma(self, t):
        return np.asarray(t, dtype=float)

    def g2(self, t):
        return 2.0 * np.asarray(t, dtype=float)

    @property
    def t_grid(self) -> np.ndarray:
        """Q increasing quadrature/sampling nodes on [sigma_min, sigma_max]."""
        if self.rule == "log":
            return np.geomspace(self.sigma_min, self.sigma_max, self.Q)
        rho = 7.0
        ramp = np.linspace(0, 1, self.Q)
        ladder = (self.sigma_max ** (1 / rho)
                  + ramp * (self.sigma_min ** (1 / rho)
                            - self.sigma_max ** (1 / rho))) ** rho
        return ladder[::-1].copy()

    def step_ladder(self, steps: int) -> np.ndarray:
        """Descending sigma values for reverse-process integration."""
        if self.rule == "log":
            return np.geomspace(self.sigma_max, self.sigma_min, steps + 1)
        return self.t_grid[::-1].copy() if steps + 1 == self.Q else \
            DiffusionSchedule(self.sigma_min, self.sigma_max, steps + 1,
                              "karras").t_grid[::-1].copy()

    def sample_sigma(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Noise levels for training draws: log-uniform over the range."""
        lo, hi = np.log(self.sigma_min), np.log(self.sigma_max)
        return np.exp(rng.uniform(lo, hi, size=n))

    def sigma_bins(self, nbins: int) -> np.ndarray:
        """Log-spaced bin edges covering [sigma_min, sigma_max]."""
        return np.geomspace(self.sigma_min, self.sigma_max, nbins + 1)

    def scaled(self, factor: float) -> "DiffusionSchedule":
        """Same grid rule over [factor*sigma_min, factor*sigma_max] (view
        spaces see full-space noise attenuated by the operator gain)."""
        return DiffusionSchedule(self.sigma_min * factor,
                                 self.sigma_max * factor, self.Q, self.rule)

    def to_json(self) -> str:
        return json.dumps({"sigma_min": self.sigma_min,
                           "sigma_max": self.sigma_max,
                           "Q": self.Q, "rule": self.rule})

    @staticmethod
    def from_json(text: str) -> "DiffusionSchedule":
        return DiffusionSchedule(**json.loads(text))


def default_schedule(U: float = 1.0, data_std: float = 1.0,
                     Q: int = 100) -> DiffusionSchedule:
    """sigma_min = 0.002 U, sigma_max = 80 scaled by the data std."""
    return DiffusionSchedule(sigma_min=0.002 * U, sigma_max=80.0 * data_std,
                             Q=Q)
