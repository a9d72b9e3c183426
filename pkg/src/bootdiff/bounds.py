"""Closed-form evaluation of the generalization-bound expressions, plus an
empirical Rademacher-complexity estimator over finite hypothesis grids.

The probability bounds:

    P(E1) <= exp(-2 dv^2 N K / ((64 + 16 K) m^2 U^4))
    P(E2) <= N_cover * exp(-2 rho^2 N K / ((64 + 16 K) m^2 U^4))
    P(E3) <= exp(-gamma^2 N / (32 m^2 U^4 (1 + 1/K)))

and the composite bound

    R_bound = (sqrt((sqrt(EV + db^2 + dv^2) + eps)^2 + rho + 2 Rad + gamma)
               + eps)^2 + 2 Rad + gamma - EV.

Probabilities clamp at 1 (the raw expressions are vacuous above it). The
same calculator serves the residual-denoiser case; only the inputs are
redefined by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import substream
from .synthdata import Dataset


@dataclass(frozen=True)
class CoveringParams:
    L_bar: float   # depth-driven constant
    W: float       # max per-layer parameter count
    C: float       # Lipschitz-driven constant
    epsilon: float
    N: int

    def __post_init__(self):
        if min(self.L_bar, self.W, self.epsilon) <= 0 or self.N < 1:
            raise ConfigError("covering parameters must be positive")
        if self.C < 0:
            raise ConfigError("C must be nonnegative")


@dataclass(frozen=True)
class BoundInputs:
    N: int
    K: int
    m: int
    U: float
    delta_b: float = 0.0
    delta_v: float = 1.0
    rho: float = 1.0
    gamma: float = 1.0
    epsilon: float = 0.0
    EV: float = 0.0          # estimate of E[V(S_0)]
    rademacher: float = 0.0  # empirical Rademacher estimate

    def __post_init__(self):
        if self.N < 1 or self.K < 1:
            raise ConfigError("N and K must be >= 1")
        if self.m < 1 or self.U <= 0:
            raise ConfigError("m must be >= 1 and U > 0")
        for name in ("delta_b", "delta_v", "rho", "gamma", "epsilon", "EV",
                     "rademacher"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")


def log_covering_bound(p: CoveringParams) -> float:
    """log N(F, eps, d) <= L_bar * W * log(1 + L_bar * C * N / eps)."""
    return p.L_bar * p.W * math.log1p(p.L_bar * p.C * p.N / p.epsilon)


def _epoch_denominator(b: BoundInputs) -> float:
    return (64.0 + 16.0 * b.K) * b.m**2 * b.U**4


def prob_event_e1(b: BoundInputs) -> float:
    """Azuma tail for the empirical loss of the best-in-class parameters."""
    exponent = -2.0 * b.delta_v**2 * b.N * b.K / _epoch_denominator(b)
    return min(1.0, math.exp(exponent))


def prob_event_e2(b: BoundInputs, cover: CoveringParams) -> float:
    """Union bound over the covering centers with bad true risk."""
    exponent = (log_covering_bound(cover)
                - 2.0 * b.rho**2 * b.N * b.K / _epoch_denominator(b))
    if exponent >= 0.0:
        return 1.0
    return math.exp(exponent)


def prob_event_e3(b: BoundInputs) -> float:
    """Uniform-deviation tail beyond twice the Rademacher complexity."""
    exponent = -b.gamma**2 * b.N / (32.0 * b.m**2 * b.U**4 * (1.0 + 1.0 / b.K))
    return min(1.0, math.exp(exponent))


def generalization_bound(b: BoundInputs,
                         cover: CoveringParams | None = None
                         ) -> tuple[float, float]:
    """(R_bound, failure probability). With all slack terms zero the bound
    collapses to delta_b^2 exactly."""
    inner = math.sqrt(b.EV + b.delta_b**2 + b.delta_v**2) + b.epsilon
    mid = inner**2 + b.rho + 2.0 * b.rademacher + b.gamma
    assert mid >= 0.0
    r_bound = (math.sqrt(mid) + b.epsilon)**2 \
        + 2.0 * b.rademacher + b.gamma - b.EV
    p_fail = prob_event_e1(b) + prob_event_e3(b)
    if cover is not None:
        p_fail += prob_event_e2(b, cover)
    return r_bound, min(1.0, p_fail)


# ---------------------------------------------------------------------------
# empirical Rademacher complexity over a finite hypothesis grid


@dataclass(eq=False)
class FiniteHypothesisGrid:
    """Denoiser snapshots standing in for the (uncomputable) sup over Theta.

    The resulting estimate is a lower bound on the true complexity and is
    reported as such.
    """

    denoisers: list
    provenance: str = ""

    def __post_init__(self):
        if not self.denoisers:
            raise ConfigError("hypothesis grid must be nonempty")


def _loss_matrix(grid: FiniteHypothesisGrid, x_t: np.ndarray,
                 sigma: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """(n_hyp, NK) matrix of per-draw losses ||f(x_t, sigma) - target||^2."""
    rows = []
    for f in grid.denoisers:
        pred = f(x_t, sigma)
        rows.append(np.sum((pred - targets) ** 2, axis=1))
    return np.stack(rows)


def empirical_rademacher(grid: FiniteHypothesisGrid, s0: Dataset,
                         schedule, K: int = 1, loss_kind: str = "L",
                         oracle=None, trials: int = 200, seed: int = 0
                         ) -> tuple[float, float]:
    """Monte-Carlo estimate of E[ sup_theta (1/NK) sum sigma_nk l_nk ].

    loss_kind "L" scores against the clean samples; "R" against the oracle
    posterior mean (oracle required). Returns (estimate, stderr).
    """
    if loss_kind not in ("L", "R"):
        raise ConfigError("loss_kind must be 'L' or 'R'")
    if loss_kind == "R" and oracle is None:
        raise ConfigError("loss_kind 'R' requires an oracle")
    rng = substream(seed, 41)
    x0 = np.repeat(s0.samples, K, axis=0)  # (NK, m)
    sig = schedule.sample_sigma(rng, x0.shape[0])
    x_t = x0 + sig[:, None] * rng.standard_normal(x0.shape)
    if loss_kind == "L":
        targets = x0
    else:
        targets = np.concatenate([
            oracle.posterior_mean(x_t[i:i + 1], float(sig[i]))
            for i in range(x_t.shape[0])])
    losses = _loss_matrix(grid, x_t, sig, targets)  # (H, NK)
    nk = losses.shape[1]
    draws = np.empty(trials)
    for t in range(trials):
        signs = rng.choice([-1.0, 1.0], size=nk)
        draws[t] = np.max(losses @ signs) / nk
    return float(draws.mean()), float(draws.std(ddof=1) / math.sqrt(trials))


def exhaustive_rademacher(grid: FiniteHypothesisGrid, losses: np.ndarray
                          ) -> float:
    """Exact sup-average over all 2^NK sign vectors (NK <= 20)."""
    nk = losses.shape[1]
    if nk > 20:
        raise ConfigError("exhaustive enumeration limited to NK <= 20")
    total = 0.0
    for bits in range(1 << nk):
        signs = np.array([1.0 if bits >> i & 1 else -1.0 for i in range(nk)])
        total += np.max(losses @ signs) / nk
    return total / (1 << nk)
