"""Measurement suite: empirical losses against data (L) and against the
posterior-mean oracle (R), prediction variance V, KL estimation from the
score-difference integral, and the MMSE decomposition check for linear
statistics.

All estimators are pure functions of (inputs, seed); Monte-Carlo draws are
stratified over log-spaced sigma bins, with shards merged by pairwise
summation.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .gmm import LinearStatisticOracle, PosteriorOracle
from .rng import substream
from .schedule import DiffusionSchedule
from .synthdata import DataSpec, sample_mixture

_STREAM_EVAL_R = 51
_STREAM_EVAL_V = 52
_STREAM_EVAL_L = 53
_STREAM_EVAL_KL = 54
_STREAM_IDENTITY = 55
_STREAM_SHARED = 56


@dataclass(eq=False)
class BinnedEstimate:
    """Per-sigma-bin means with standard errors plus the pooled total."""

    edges: np.ndarray         # (n_bins+1,)
    means: np.ndarray         # (n_bins,)
    stderrs: np.ndarray       # (n_bins,)
    counts: np.ndarray        # (n_bins,)

    @property
    def total(self) -> float:
        return float(np.average(self.means, weights=self.counts))

    @property
    def total_stderr(self) -> float:
        w = self.counts / self.counts.sum()
        return float(np.sqrt(np.sum((w * self.stderrs) ** 2)))

    def rows(self):
        out = []
        for b in range(len(self.means)):
            out.append((float(self.edges[b]), float(self.edges[b + 1]),
                        float(self.means[b]), float(self.stderrs[b]),
                        int(self.counts[b])))
        return out


def _binned_mc(value_fn, spec: DataSpec, schedule: DiffusionSchedule,
               n_mc: int, n_bins: int, seed: int, stream: int,
               reps_per_bin: int = 4) -> BinnedEstimate:
    """Stratified MC: for each bin, `reps_per_bin` scalar noise levels each
    applied to an equal batch of fresh draws. value_fn(x0, x_t, sigma) must
    return one nonnegative scalar per row."""
    edges = schedule.sigma_bins(n_bins)
    per_bin = max(1, n_mc // n_bins)
    batch = max(1, per_bin // reps_per_bin)
    means = np.empty(n_bins)
    stderrs = np.empty(n_bins)
    counts = np.empty(n_bins, dtype=int)
    for b in range(n_bins):
        rng = substream(seed, stream, b)
        vals = []
        for _ in range(reps_per_bin):
            sig = float(np.exp(rng.uniform(np.log(edges[b]),
                                           np.log(edges[b + 1]))))
            x0 = sample_mixture(spec, batch, rng)
            x_t = x0 + sig * rng.standard_normal(x0.shape)
            vals.append(np.asarray(value_fn(x0, x_t, sig), dtype=float))
        v = np.concatenate(vals)
        means[b] = v.mean()
        stderrs[b] = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
        counts[b] = v.size
    return BinnedEstimate(edges=edges, means=means, stderrs=stderrs,
                          counts=counts)


def eval_R(denoise_fn, oracle: PosteriorOracle, spec: DataSpec,
           schedule: DiffusionSchedule, n_mc: int = 4000, n_bins: int = 10,
           seed: int = 0) -> BinnedEstimate:
    """MC estimate of E || f(x_t, sigma) - E[X0 | x_t, sigma] ||^2."""

    def value(x0, x_t, sig):
        diff = np.asarray(denoise_fn(x_t, sig)) - oracle.posterior_mean(x_t, sig)
        return np.sum(diff * diff, axis=1)

    return _binned_mc(value, spec, schedule, n_mc, n_bins, seed,
                      _STREAM_EVAL_R)


def eval_L(denoise_fn, spec: DataSpec, schedule: DiffusionSchedule,
           n_mc: int = 4000, n_bins: int = 10, seed: int = 0
           ) -> BinnedEstimate:
    """MC estimate of E || f(x_t, sigma) - x0 ||^2."""

    def value(x0, x_t, sig):
        diff = np.asarray(denoise_fn(x_t, sig)) - x0
        return np.sum(diff * diff, axis=1)

    return _binned_mc(value, spec, schedule, n_mc, n_bins, seed,
                      _STREAM_EVAL_L)


def eval_V(oracle: PosteriorOracle, spec: DataSpec,
           schedule: DiffusionSchedule, n_mc: int = 4000, n_bins: int = 10,
           seed: int = 0, sigma: float | None = None):
    """MC estimate of the prediction variance E||E[X0|x_t] - x0||^2.

    With `sigma` given, evaluates at that single noise level and returns
    (mean, stderr) instead of a binned estimate.
    """

    def value(x0, x_t, sig):
        diff = oracle.posterior_mean(x_t, sig) - x0
        return np.sum(diff * diff, axis=1)

    if sigma is not None:
        rng = substream(seed, _STREAM_EVAL_V)
        x0 = sample_mixture(spec, n_mc, rng)
        x_t = x0 + sigma * rng.standard_normal(x0.shape)
        v = value(x0, x_t, float(sigma))
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
    return _binned_mc(value, spec, schedule, n_mc, n_bins, seed,
                      _STREAM_EVAL_V)


@dataclass(eq=False)
class KlEstimate:
    value: float
    stderr: float
    coarse_value: float
    grid_warning: bool  # halving the grid moved the estimate by > 5%
    nodes: np.ndarray
    node_means: np.ndarray

    def __post_init__(self):
        self.value = float(self.value)
        self.stderr = float(self.stderr)


def eval_kl(score_a, score_b, spec_a: DataSpec, schedule: DiffusionSchedule,
            n_mc: int = 256, seed: int = 0, t_nodes: np.ndarray | None = None
            ) -> KlEstimate:
    """KL[A || B] ~= integral over t of g(t)^2/2 * E_{x_t ~ p_t^A}
    ||s_A(x_t, t) - s_B(x_t, t)||^2, trapezoidal on the schedule grid.

    The expectation under the path measure reduces to the marginal x_t ~
    p_t^A because the integrand depends on x_t alone; draws are exact
    (x0 from the spec plus Gaussian noise). The terminal term at sigma_max
    is taken as zero.
    """
    nodes = schedule.t_grid if t_nodes is None else np.asarray(t_nodes, float)
    node_means = np.empty(nodes.size)
    node_vars = np.empty(nodes.size)
    for i, t in enumerate(nodes):
        rng = substream(seed, _STREAM_EVAL_KL, i)
        x0 = sample_mixture(spec_a, n_mc, rng)
        x_t = x0 + t * rng.standard_normal(x0.shape)
        d = np.asarray(score_a(x_t, t)) - np.asarray(score_b(x_t, t))
        sq = np.sum(d * d, axis=1)
        node_means[i] = sq.mean()
        node_vars[i] = sq.var(ddof=1) / sq.size if sq.size > 1 else 0.0

    def _trap(idx):
        w = np.zeros(idx.size)
        dt = np.diff(nodes[idx])
        w[:-1] += dt / 2
        w[1:] += dt / 2
        integrand_w = w * schedule.g2(nodes[idx]) / 2.0
        val = float(np.sum(integrand_w * node_means[idx]))
        var = float(np.sum(integrand_w**2 * node_vars[idx]))
        return val, var

    full_idx = np.arange(nodes.size)
    value, var = _trap(full_idx)
    coarse, _ = _trap(full_idx[::2] if full_idx[-1] % 2 == 0
                      else np.append(full_idx[::2], full_idx[-1]))
    denom = max(abs(value), 1e-300)
    warning = abs(value - coarse) / denom > 0.05
    return KlEstimate(value=value, stderr=math.sqrt(var), coarse_value=coarse,
                      grid_warning=warning, nodes=nodes,
                      node_means=node_means)


@dataclass(eq=False)
class IdentityReport:
    """MMSE decomposition for a linear statistic y = L x_t:

    E||X0 - E[X0|y]||^2 = E||X0 - E[X0|x_t]||^2
                          + E||E[X0|x_t] - E[X0|y]||^2
    """

    lhs: float
    rhs_mmse: float
    rhs_gap: float
    gap: float
    stderr: float
    sigma: float
    n_mc: int

    @property
    def passed(self) -> bool:
        return abs(self.gap) <= 3.0 * self.stderr + 1e-12


def check_residual_identity(spec: DataSpec, L: np.ndarray,
                            schedule: DiffusionSchedule, sigma: float,
                            n_mc: int = 2000, seed: int = 0
                            ) -> IdentityReport:
    """Verify the decomposition above by shared-draw Monte Carlo."""
    if not (schedule.sigma_min <= sigma <= schedule.sigma_max):
        raise ConfigError("sigma outside the schedule range")
    full = PosteriorOracle(spec)
    stat = LinearStatisticOracle(spec, L)
    rng = substream(seed, _STREAM_IDENTITY)
    x0 = sample_mixture(spec, n_mc, rng)
    x_t = x0 + sigma * rng.standard_normal(x0.shape)
    cond_full = full.posterior_mean(x_t, sigma)
    cond_stat = stat.posterior_mean(x_t, sigma)
    a = np.sum((x0 - cond_stat) ** 2, axis=1)
    b = np.sum((x0 - cond_full) ** 2, axis=1)
    c = np.sum((cond_full - cond_stat) ** 2, axis=1)
    g = a - b - c
    return IdentityReport(
        lhs=float(a.mean()), rhs_mmse=float(b.mean()),
        rhs_gap=float(c.mean()), gap=float(g.mean()),
        stderr=float(g.std(ddof=1) / math.sqrt(n_mc)), sigma=float(sigma),
        n_mc=n_mc)


# ---------------------------------------------------------------------------
# combined reports


@dataclass(eq=False)
class EvalReport:
    denoiser_id: str
    R: BinnedEstimate
    L: BinnedEstimate
    V: BinnedEstimate
    cross: float                 # shared-draw L - (R + V) residual
    cross_stderr: float
    n_mc: int
    config_hash: str
    kl: KlEstimate | None = None
    extra: dict = field(default_factory=dict)

    @property
    def decomposition_ok(self) -> bool:
        return abs(self.cross) <= 3.0 * self.cross_stderr + 1e-12

    def to_json(self) -> str:
        doc = {
            "denoiser_id": self.denoiser_id, "n_mc": self.n_mc,
            "config_hash": self.config_hash,
            "R": {"total": self.R.total, "stderr": self.R.total_stderr,
                  "bins": self.R.rows()},
            "L": {"total": self.L.total, "stderr": self.L.total_stderr,
                  "bins": self.L.rows()},
            "V": {"total": self.V.total, "stderr": self.V.total_stderr,
                  "bins": self.V.rows()},
            "cross": self.cross, "cross_stderr": self.cross_stderr,
            "decomposition_ok": self.decomposition_ok,
            "extra": self.extra,
        }
        if self.kl is not None:
            doc["kl"] = {"value": self.kl.value, "stderr": self.kl.stderr,
                         "grid_warning": self.kl.grid_warning}
        return json.dumps(doc, indent=1, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"denoiser: {self.denoiser_id}   draws: {self.n_mc}   "
                 f"config: {self.config_hash[:12]}",
                 f"{'sigma_lo':>10} {'sigma_hi':>10} {'R_hat':>12} "
                 f"{'L_hat':>12} {'V_hat':>12}"]
        for rR, rL, rV in zip(self.R.rows(), self.L.rows(), self.V.rows()):
            lines.append(f"{rR[0]:>10.4g} {rR[1]:>10.4g} {rR[2]:>12.5g} "
                         f"{rL[2]:>12.5g} {rV[2]:>12.5g}")
        lines.append(f"{'total':>21} {self.R.total:>12.5g} "
                     f"{self.L.total:>12.5g} {self.V.total:>12.5g}")
        lines.append(f"L - (R + V) = {self.cross:.3e} "
                     f"(+/- {self.cross_stderr:.3e})"
                     f"{'' if self.decomposition_ok else '  ** MISMATCH'}")
        if self.kl is not None:
            flag = "  ** COARSE GRID" if self.kl.grid_warning else ""
            lines.append(f"KL = {self.kl.value:.6g} "
                         f"(+/- {self.kl.stderr:.2e}){flag}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["sigma_lo,sigma_hi,R_hat,R_stderr,L_hat,L_stderr,"
                 "V_hat,V_stderr,count"]
        for rR, rL, rV in zip(self.R.rows(), self.L.rows(), self.V.rows()):
            lines.append(f"{rR[0]:.8g},{rR[1]:.8g},{rR[2]:.8g},{rR[3]:.8g},"
                         f"{rL[2]:.8g},{rL[3]:.8g},{rV[2]:.8g},{rV[3]:.8g},"
                         f"{rR[4]}")
        return "\n".join(lines) + "\n"


def _config_hash(parts: dict) -> str:
    return hashlib.sha256(
        json.dumps(parts, sort_keys=True).encode()).hexdigest()


def evaluate_denoiser(denoise_fn, oracle: PosteriorOracle, spec: DataSpec,
                      schedule: DiffusionSchedule, denoiser_id: str = "",
                      n_mc: int = 4000, n_bins: int = 10, seed: int = 0,
                      score_b=None, kl_n_mc: int = 128) -> EvalReport:
    """Shared-draw evaluation: R, L, V on the same noisy batches so the
    decomposition L = R + V + cross holds exactly in expectation."""
    edges = schedule.sigma_bins(n_bins)
    per_bin = max(1, n_mc // n_bins)
    reps = 4
    batch = max(1, per_bin // reps)
    shape = (n_bins,)
    mR = np.empty(shape); sR = np.empty(shape)
    mL = np.empty(shape); sL = np.empty(shape)
    mV = np.empty(shape); sV = np.empty(shape)
    counts = np.empty(shape, dtype=int)
    cross_vals = []
    for b in range(n_bins):
        rng = substream(seed, _STREAM_SHARED, b)
        vR, vL, vV = [], [], []
        for _ in range(reps):
            sig = float(np.exp(rng.uniform(np.log(edges[b]),
                                           np.log(edges[b + 1]))))
            x0 = sample_mixture(spec, batch, rng)
            x_t = x0 + sig * rng.standard_normal(x0.shape)
            pred = np.asarray(denoise_fn(x_t, sig))
            post = oracle.posterior_mean(x_t, sig)
            vR.append(np.sum((pred - post) ** 2, axis=1))
            vL.append(np.sum((pred - x0) ** 2, axis=1))
            vV.append(np.sum((post - x0) ** 2, axis=1))
        vR = np.concatenate(vR); vL = np.concatenate(vL)
        vV = np.concatenate(vV)
        cross_vals.append(vL - vR - vV)
        n = vR.size
        for arr, mm, ss in ((vR, mR, sR), (vL, mL, sL), (vV, mV, sV)):
            mm[b] = arr.mean()
            ss[b] = arr.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
        counts[b] = n
    cross = np.concatenate(cross_vals)
    kl = None
    if score_b is not None:
        full_oracle_score = oracle.score

        def score_a(x, t):
            return full_oracle_score(x, float(t))

        kl = eval_kl(score_a, score_b, spec, schedule, n_mc=kl_n_mc,
                     seed=seed)
    cfg_hash = _config_hash({"spec_id": spec.spec_id, "n_mc": n_mc,
                             "n_bins": n_bins, "seed": seed,
                             "schedule": json.loads(schedule.to_json())})
    mk = lambda m, s: BinnedEstimate(edges=edges, means=m, stderrs=s,
                                     counts=counts)
    return EvalReport(
        denoiser_id=denoiser_id, R=mk(mR, sR), L=mk(mL, sL), V=mk(mV, sV),
        cross=float(cross.mean()),
        cross_stderr=float(cross.std(ddof=1) / math.sqrt(cross.size)),
        n_mc=int(counts.sum()), config_hash=cfg_hash, kl=kl)
