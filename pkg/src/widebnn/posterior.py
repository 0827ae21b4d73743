"""Sampling target: kernel-form log-likelihood, gradient, and log-posterior.

Marginalizing the readout weights under their standard normal prior gives
each target column an exact Gaussian marginal with covariance

    Khat = s2 * I_n + Psi Psi^T,

the empirical NNGP kernel. The whitened-coordinate likelihood is therefore
the Gaussian-process log marginal likelihood

    l = sum_c [ -y_c^T Khat^{-1} y_c / 2 - log det(Khat) / 2 - n log(2 pi) / 2 ]

and depends on the inner weights only. The full-state log-posterior is
-||x||^2 / 2 + l(x) up to a data-only constant.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import NumericsError
from .network import FlatWeights, compute_psi, psi_vjp

LOG_2PI = float(np.log(2.0 * np.pi))

FULL_PHI = "full_phi"
INNER_ONLY = "inner_only"


@dataclass(frozen=True)
class KernelMatrix:
    khat: np.ndarray
    factor: np.ndarray  # lower Cholesky factor
    half_logdet: float

    def solve(self, rhs):
        return cho_solve((self.factor, True), rhs)

    def quad(self, y):
        """y^T Khat^{-1} y, column-wise, via the cached factor."""
        z = solve_triangular(self.factor, y, lower=True)
        return np.sum(z * z, axis=0)


@dataclass(frozen=True)
class PosteriorTarget:
    config: object
    dataset: object
    noise_var: float
    mode: str = FULL_PHI
    gradient_mode: str = "analytic"
    fd_step: float = 1e-5
    linalg_path: str = "auto"  # "auto" | "kernel" | "woodbury"
    layout: object = field(init=False, repr=False)

    def __post_init__(self):
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")
        if self.mode not in (FULL_PHI, INNER_ONLY):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.dataset.m != self.config.input_dim or self.dataset.k != self.config.output_dim:
            raise ValueError("dataset dimensions do not match the network")
        object.__setattr__(self, "layout", self.config.layout())

    @property
    def dim(self):
        return self.layout.inner_dim if self.mode == INNER_ONLY else self.layout.dim

    @property
    def readout_size(self):
        return self.layout.dim - self.layout.inner_dim

    def _values(self, x):
        v = x.values if isinstance(x, FlatWeights) else np.asarray(x, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"state length {v.shape} does not match dim {self.dim}")
        return v

    def _inner(self, x):
        v = self._values(x)
        return v if self.mode == INNER_ONLY else v[: self.layout.inner_dim]

    def psi(self, inner):
        psi, pre, post = compute_psi(self.config, inner, self.dataset.inputs, self.layout)
        return psi, (pre, post)

    def nngp_kernel(self, inner):
        """Empirical NNGP kernel with a cached Cholesky factorization."""
        psi, _ = self.psi(np.asarray(inner, dtype=np.float64))
        return self._kernel_from_psi(psi)

    def _kernel_from_psi(self, psi):
        n = psi.shape[0]
        khat = self.noise_var * np.eye(n) + psi @ psi.T
        try:
            factor = cholesky(khat, lower=True)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - s2 > 0 floor
            raise NumericsError("kernel factorization failed") from exc
        return KernelMatrix(khat, factor, float(np.sum(np.log(np.diag(factor)))))

    def _loglik_terms(self, psi):
        """(quad_total, half_logdet) by the configured linear-algebra path."""
        n, d = psi.shape
        Y = self.dataset.targets
        path = self.linalg_path
        if path == "auto":
            path = "kernel" if n <= d else "woodbury"
        if path == "kernel":
            kern = self._kernel_from_psi(psi)
            return float(np.sum(kern.quad(Y))), kern.half_logdet
        # Woodbury / determinant-lemma form on the d x d matrix.
        M = np.eye(d) + (psi.T @ psi) / self.noise_var
        try:
            Lm = cholesky(M, lower=True)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericsError("kernel factorization failed") from exc
        half_logdet = 0.5 * n * np.log(self.noise_var) + float(
            np.sum(np.log(np.diag(Lm)))
        )
        pty = psi.T @ Y
        z = solve_triangular(Lm, pty, lower=True)
        quad = (np.sum(Y * Y) - np.sum(z * z) / self.noise_var) / self.noise_var
        return float(quad), half_logdet

    def log_likelihood(self, x):
        """Kernel-form log marginal likelihood; readout block has no effect."""
        psi, _ = self.psi(self._inner(x))
        quad, half_logdet = self._loglik_terms(psi)
        n, k = self.dataset.n, self.dataset.k
        value = -0.5 * quad - k * half_logdet - 0.5 * n * k * LOG_2PI
        if not np.isfinite(value):
            raise NumericsError("non-finite log-likelihood")
        return float(value)

    def log_posterior(self, x):
        """Unnormalized log density of the sampled state under N(0, I) prior."""
        v = self._values(x)
        return -0.5 * float(v @ v) + self.log_likelihood(x)

    def loglik_and_grad(self, x):
        """Log-likelihood and its gradient sharing one forward pass."""
        if self.gradient_mode != "analytic":
            return self.log_likelihood(x), self.grad_log_likelihood(x)
        v = self._values(x)
        inner = v if self.mode == INNER_ONLY else v[: self.layout.inner_dim]
        psi, trace = self.psi(inner)
        kern = self._kernel_from_psi(psi)
        Y = self.dataset.targets
        alpha = kern.solve(Y)
        n, k = Y.shape
        value = (
            -0.5 * float(np.sum(Y * alpha))
            - k * kern.half_logdet
            - 0.5 * n * k * LOG_2PI
        )
        # d l = <A Psi, d Psi> with A = alpha alpha^T - k Khat^{-1}
        A = alpha @ alpha.T - k * kern.solve(np.eye(n))
        gbar = A @ psi
        g_inner = psi_vjp(
            self.config, inner, self.dataset.inputs, gbar, trace=trace, layout=self.layout
        )
        grad = np.zeros(self.dim)
        grad[: g_inner.size] = g_inner
        if not np.isfinite(value) or not np.isfinite(grad).all():
            raise NumericsError("non-finite likelihood gradient")
        return float(value), grad

    def grad_log_likelihood(self, x):
        """Gradient of l; exactly zero on the readout block in full mode."""
        if self.gradient_mode == "analytic":
            return self.loglik_and_grad(x)[1]
        v = self._values(x).copy()
        h = self.fd_step
        grad = np.zeros(self.dim)
        for i in range(self.layout.inner_dim if self.mode == FULL_PHI else self.dim):
            orig = v[i]
            v[i] = orig + h
            up = self.log_likelihood(v)
            v[i] = orig - h
            down = self.log_likelihood(v)
            v[i] = orig
            grad[i] = (up - down) / (2.0 * h)
        return grad

    def grad_log_posterior(self, x):
        return -self._values(x) + self.grad_log_likelihood(x)

    def logpost_and_grad(self, x):
        v = self._values(x)
        ll, g = self.loglik_and_grad(x)
        return -0.5 * float(v @ v) + ll, -v + g

    def complete_sample(self, x, rng):
        """In inner-only mode, append an exact readout draw from N(0, I)."""
        if self.mode == FULL_PHI:
            return np.asarray(x, dtype=np.float64)
        readout = sample_readout_conditional(
            rng, self.config.output_dim, self.config.readout_dim
        )
        return np.concatenate([np.asarray(x, dtype=np.float64), readout.ravel()])

    @property
    def sample_dim(self):
        """Length of stored samples (full vector in both modes)."""
        return self.layout.dim

    def descriptor(self):
        c = self.config
        return {
            "input_dim": c.input_dim,
            "hidden_widths": list(c.hidden_widths),
            "output_dim": c.output_dim,
            "activation": c.activation,
            "sigma_w": list(c.sigma_w),
            "sigma_b": list(c.sigma_b),
            "include_bias": c.include_bias,
            "noise_var": self.noise_var,
            "mode": self.mode,
            "dataset": self.dataset.provenance,
            "dataset_checksum": self.dataset.checksum(),
        }

    def descriptor_hash(self):
        blob = json.dumps(self.descriptor(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def sample_readout_conditional(rng, k, d_readout):
    """Exact readout draw in whitened coordinates: iid standard normal."""
    return rng.standard_normal((d_readout, k))
