"""Chain quality diagnostics: ESS, Gelman-Rubin, principal-component traces."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EssSummary:
    per_parameter_ess: np.ndarray
    degenerate: np.ndarray  # True where the parameter had zero variance
    n: int

    @property
    def per_step(self):
        return self.per_parameter_ess / self.n

    @property
    def mean_per_step(self):
        return float(self.per_step.mean())

    @property
    def min_per_step(self):
        return float(self.per_step.min())

    @property
    def max_per_step(self):
        return float(self.per_step.max())


@dataclass(frozen=True)
class GelmanRubin:
    r_hat: np.ndarray
    within: np.ndarray
    between: np.ndarray
    n_chains: int
    chain_length: int
    undefined: np.ndarray  # True where all chains are constant (W = 0)

    @property
    def mean(self):
        vals = self.r_hat[~self.undefined]
        return float(vals.mean()) if vals.size else float("nan")

    @property
    def sd(self):
        vals = self.r_hat[~self.undefined]
        return float(vals.std()) if vals.size else float("nan")


@dataclass(frozen=True)
class PCTraces:
    projections: np.ndarray
    explained_variance: np.ndarray  # variance ratio per returned component
    truncated: bool  # True when rank < requested components


def _autocorr_biased(x):
    """Autocorrelations with 1/N normalization, computed by FFT."""
    n = x.shape[0]
    x = x - x.mean(axis=0)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, n=size, axis=0)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=0)[:n].real / n
    return acov


def ess(samples):
    """Effective sample size per parameter.

    ESS = N / (1 + 2 sum_i (1 - i/N) R_i), with the sum truncated before
    the first negative autocorrelation. Zero-variance parameters are
    reported as ESS = N and flagged degenerate.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if x.ndim != 2:
        raise ValueError("samples must be an N x D matrix")
    n, d = x.shape
    if n < 4:
        raise ValueError("need at least 4 samples")

    acov = _autocorr_biased(x)
    var0 = acov[0]
    degenerate = var0 <= 0
    out = np.full(d, float(n))

    live = np.nonzero(~degenerate)[0]
    if live.size:
        rho = acov[1:, live] / var0[live]
        weights = 1.0 - np.arange(1, n)[:, None] / n
        negative = rho < 0
        # index of the first negative autocorrelation, n-1 when none
        first_neg = np.where(negative.any(axis=0), negative.argmax(axis=0), n - 1)
        keep = np.arange(n - 1)[:, None] < first_neg[None, :]
        s = np.sum(weights * rho * keep, axis=0)
        vals = n / (1.0 + 2.0 * s)
        out[live] = np.clip(vals, np.finfo(float).tiny, n)
    return EssSummary(out, degenerate, n)


def gelman_rubin(chains):
    """Potential scale reduction per parameter from M >= 2 equal-length chains."""
    arrs = [np.atleast_2d(np.asarray(c, dtype=np.float64)) for c in chains]
    m = len(arrs)
    if m < 2:
        raise ValueError("need at least 2 chains")
    n = arrs[0].shape[0]
    if n < 2 or any(a.shape != arrs[0].shape for a in arrs):
        raise ValueError("chains must share one shape with N >= 2")

    stacked = np.stack(arrs)  # M x N x D
    means = stacked.mean(axis=1)
    w = stacked.var(axis=1, ddof=1).mean(axis=0)
    b = n * means.var(axis=0, ddof=1)
    undefined = w == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        r_hat = ((n - 1) / n * w + b / n) / w
    r_hat = np.where(undefined, np.nan, r_hat)
    return GelmanRubin(r_hat, w, b, m, n, undefined)


def pc_traces(samples, n_components=2, rank_tol=1e-12):
    """Project iterates onto their top principal directions.

    Sign convention: the largest-magnitude loading of each direction is
    made positive, so traces are deterministic.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.shape[0]
    if n <= n_components:
        raise ValueError("need more samples than components")
    centered = x - x.mean(axis=0)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
    n_keep = min(n_components, rank)
    vt = vt[:n_keep]
    flip = np.sign(vt[np.arange(n_keep), np.abs(vt).argmax(axis=1)]) if n_keep else []
    vt = vt * np.asarray(flip)[:, None] if n_keep else vt
    projections = centered @ vt.T
    total = float(np.sum(s * s))
    ratio = (s[:n_keep] ** 2 / total) if total > 0 else np.zeros(n_keep)
    return PCTraces(projections, ratio, truncated=n_keep < n_components)
