"""Exact Gaussian-mixture posterior oracles.

For a mixture with component covariances Sigma_k and isotropic noise
x_t = x_0 + sigma * eps, all posterior quantities are closed-form:

    responsibilities  w_k(x) ~ pi_k N(x; mu_k, Sigma_k + sigma^2 I)
    E[x_0 | x_t]      = x_t + sigma^2 * score(x_t)
    score(x_t)        = -sum_k w_k (Sigma_k + sigma^2 I)^{-1} (x_t - mu_k)

Full-resolution specs use the diagonal + low-rank structure via the
Woodbury identity (m can be large); view pushforward specs use dense
Cholesky factorizations. Factorizations are cached per quantized sigma.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericError, ShapeError
from .synthdata import DataSpec, ViewSpec

_LOG2PI = math.log(2.0 * math.pi)


def _quantize(sigma: float) -> float:
    # cache key; off-grid sigmas collide only below float display precision
    return float(f"{float(sigma):.12e}")


class _StructuredComponent:
    """Woodbury solve for C = diag(d + sigma^2) + rho G G^T."""

    def __init__(self, mean, diag, factors, rho):
        self.mean = mean
        self.diag = diag
        self.factors = factors if (factors is not None and rho > 0) else None
        self.rho = rho

    def prepare(self, sigma: float):
        d = self.diag + sigma * sigma
        dinv = 1.0 / d
        logdet = float(np.sum(np.log(d)))
        if self.factors is None:
            return (dinv, logdet, None, None)
        G = self.factors
        S = np.eye(G.shape[1]) + self.rho * (G.T * dinv) @ G
        chol = cho_factor(S)
        logdet += 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
        return (dinv, logdet, G, chol)


class PosteriorOracle:
    """Mixture posterior oracle over a DataSpec or a ViewSpec."""

    def __init__(self, spec: DataSpec | ViewSpec):
        self.spec = spec
        self.U = spec.U
        if isinstance(spec, DataSpec):
            self.m = spec.m
            self.weights = spec.weights
            self.means = np.stack([c.mean for c in spec.components])
            self._structured = [
                _StructuredComponent(c.mean, c.diag, c.factors,
                                     spec.global_strength)
                for c in spec.components
            ]
            self._covs = None
        else:
            self.m = spec.m
            self.weights = np.asarray(spec.weights)
            self.means = np.asarray(spec.means)
            self._structured = None
            self._covs = np.asarray(spec.covs)
        self._log_w = np.log(self.weights)
        self._cache: dict[float, list] = {}

    # -- per-sigma factorizations -------------------------------------------

    def _prep(self, sigma: float) -> list:
        key = _quantize(sigma)
        prep = self._cache.get(key)
        if prep is not None:
            return prep
        if self._structured is not None:
            prep = [c.prepare(sigma) for c in self._structured]
        else:
            prep = []
            for cov in self._covs:
                C = cov + sigma * sigma * np.eye(self.m)
                chol = cho_factor(C)
                logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
                prep.append((chol, logdet))
        if len(self._cache) < 4096:
            self._cache[key] = prep
        return prep

    def _solve(self, k: int, prep, rhs: np.ndarray) -> np.ndarray:
        """(Sigma_k + sigma^2 I)^{-1} rhs, rhs of shape (n, m)."""
        if self._structured is not None:
            dinv, _, G, chol = prep[k]
            out = rhs * dinv
            if G is not None:
                rho = self._structured[k].rho
                t = cho_solve(chol, (out @ G).T).T
                out = out - rho * ((t @ G.T) * dinv)
            return out
        chol, _ = prep[k]
        return cho_solve(chol, rhs.T).T

    def _logdet(self, k: int, prep) -> float:
        return prep[k][1]

    # -- public queries -------------------------------------------------------

    def _check(self, x: np.ndarray, sigma: float) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[-1] != self.m:
            raise ShapeError(f"expected dimension {self.m}, got {x.shape[-1]}")
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite query point")
        if sigma <= 0:
            raise NumericError(f"sigma must be positive, got {sigma}")
        return x

    def _solves_and_resp(self, x: np.ndarray, sigma: float):
        prep = self._prep(sigma)
        n, K = x.shape[0], len(self.weights)
        sols = np.empty((K, n, self.m))
        logp = np.empty((K, n))
        for k in range(K):
            diff = x - self.means[k]
            sols[k] = self._solve(k, prep, diff)
            quad = np.einsum("ij,ij->i", diff, sols[k])
            logp[k] = (self._log_w[k]
                       - 0.5 * (self.m * _LOG2PI + self._logdet(k, prep) + quad))
        shift = logp.max(axis=0)
        resp = np.exp(logp - shift)
        resp /= resp.sum(axis=0)
        return sols, resp, logp

    def responsibilities(self, x, sigma: float) -> np.ndarray:
        x = self._check(x, sigma)
        _, resp, _ = self._solves_and_resp(x, sigma)
        return resp.T

    def score(self, x, sigma: float) -> np.ndarray:
        """Gradient of log p_sigma at x."""
        x = self._check(x, sigma)
        sols, resp, _ = self._solves_and_resp(x, sigma)
        return -np.einsum("kn,knm->nm", resp, sols)

    def posterior_mean(self, x, sigma: float) -> np.ndarray:
        """E[x_0 | x_t = x] under the mixture plus isotropic noise."""
        x = self._check(x, sigma)
        sols, resp, _ = self._solves_and_resp(x, sigma)
        return x - sigma * sigma * np.einsum("kn,knm->nm", resp, sols)

    def logpdf(self, x, sigma: float) -> np.ndarray:
        x = self._check(x, sigma)
        _, _, logp = self._solves_and_resp(x, sigma)
        shift = logp.max(axis=0)
        return shift + np.log(np.exp(logp - shift).sum(axis=0))

    def denoiser(self):
        """The oracle as a (x_t, sigma) -> E[x0|x_t] callable.

        Accepts per-sample sigma arrays (grouped by unique value) so it is
        interchangeable with a network denoiser in training loops.
        """

        def fn(x, sigma):
            sig = np.asarray(sigma, dtype=float)
            if sig.ndim == 0:
                return self.posterior_mean(x, float(sig))
            x = np.atleast_2d(np.asarray(x, dtype=np.float64))
            out = np.empty_like(x)
            for s in np.unique(sig):
                mask = sig == s
                out[mask] = self.posterior_mean(x[mask], float(s))
            return out

        return fn


class LinearStatisticOracle:
    """E[x_0 | L x_t] for a linear (possibly rank-deficient) statistic L.

    Conditioning on y = L x_t is equivalent to conditioning on w = V_r^T x_t
    where L = U S V^T restricted to its numerical rank, which keeps every
    covariance full-rank. Dense construction; intended for small m.
    """

    def __init__(self, spec: DataSpec | ViewSpec, L: np.ndarray,
                 jitter: float = 1e-10):
        if isinstance(spec, DataSpec):
            self.means = np.stack([c.mean for c in spec.components])
            self.covs = spec.component_covariances()
            self.weights = spec.weights
        else:
            self.means = np.asarray(spec.means)
            self.covs = np.asarray(spec.covs)
            self.weights = np.asarray(spec.weights)
        self.m = self.means.shape[1]
        L = np.asarray(L, dtype=np.float64)
        if L.shape[1] != self.m:
            raise ShapeError(f"statistic has {L.shape[1]} columns, expected {self.m}")
        _, s, vt = np.linalg.svd(L, full_matrices=False)
        rank = int(np.sum(s > max(s[0] if s.size else 0.0, 1.0) * 1e-12))
        self.W = vt[:rank]  # (r, m); w = W x_t carries all information in L x_t
        self.rank = rank
        self.jitter = jitter
        self._log_w = np.log(self.weights)

    def posterior_mean(self, x_t: np.ndarray, sigma: float) -> np.ndarray:
        """E[x_0 | W x_t] evaluated at the given x_t batch."""
        x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        if self.rank == 0:
            # conditioning on nothing: prior mean
            prior = np.einsum("k,km->m", self.weights, self.means)
            return np.broadcast_to(prior, x_t.shape).copy()
        w = x_t @ self.W.T  # (n, r)
        K, r = len(self.weights), self.rank
        n = x_t.shape[0]
        means_c = np.empty((K, n, self.m))
        logp = np.empty((K, n))
        for k in range(K):
            C = self.covs[k] + sigma * sigma * np.eye(self.m)
            cov_w = self.W @ C @ self.W.T
            cov_w[np.diag_indices_from(cov_w)] += self.jitter
            cross = self.covs[k] @ self.W.T  # cov(x_0, w) = Sigma_k W^T
            chol = cho_factor(cov_w)
            diff = w - self.means[k] @ self.W.T
            sol = cho_solve(chol, diff.T).T  # (n, r)
            means_c[k] = self.means[k] + sol @ cross.T
            logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
            quad = np.einsum("ij,ij->i", diff, sol)
            logp[k] = self._log_w[k] - 0.5 * (r * _LOG2PI + logdet + quad)
        shift = logp.max(axis=0)
        resp = np.exp(logp - shift)
        resp /= resp.sum(axis=0)
        return np.einsum("kn,knm->nm", resp, means_c)
