"""Data-dependent whitening of the readout block and its inverse.

With scaled features Psi (n x d') and noise variance s2, the readout
posterior given the inner weights is Gaussian with

    Sigma = (I + Psi^T Psi / s2)^{-1},    mu = Sigma Psi^T Y / s2,

one mu column per output. The map to whitened coordinates is
phi_readout = Sigma^{-1/2} (theta_readout - mu), inner blocks untouched.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError


@dataclass(frozen=True)
class ReparamState:
    sigma: np.ndarray
    mu: np.ndarray
    sigma_sqrt: np.ndarray
    sigma_inv_sqrt: np.ndarray
    half_logdet: float  # (1/2) log det Sigma, always <= 0
    noise_var: float


def build_reparam(psi, targets, noise_var):
    """Readout-posterior moments from scaled features and targets.

    Uses a symmetric eigendecomposition of I + Psi^T Psi / s2; its
    eigenvalues are >= 1 analytically and are clamped there to absorb
    round-off, so Sigma's eigenvalues lie in (0, 1].
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    psi = np.asarray(psi, dtype=np.float64)
    if not np.isfinite(psi).all():
        raise NumericsError("non-finite Psi")
    Y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if Y.shape[0] != psi.shape[0]:
        Y = Y.T  # accept a 1-D / row-shaped target for k = 1

    M = np.eye(psi.shape[1]) + (psi.T @ psi) / noise_var
    lam, V = np.linalg.eigh(M)
    lam = np.maximum(lam, 1.0)
    sigma = (V / lam) @ V.T
    sigma_sqrt = (V / np.sqrt(lam)) @ V.T
    sigma_inv_sqrt = (V * np.sqrt(lam)) @ V.T
    mu = sigma @ (psi.T @ Y) / noise_var
    half_logdet = -0.5 * float(np.sum(np.log(lam)))
    return ReparamState(sigma, mu, sigma_sqrt, sigma_inv_sqrt, half_logdet, noise_var)


def _split(weights):
    return weights.values, weights.layout


def to_phi(theta, state):
    """Whiten the readout block; inner blocks pass through unchanged."""
    from .network import FlatWeights

    values, layout = _split(theta)
    d = state.sigma.shape[0]
    k = state.mu.shape[1]
    readout = values[layout.inner_dim :].reshape(d, k)
    phi_readout = state.sigma_inv_sqrt @ (readout - state.mu)
    out = values.copy()
    out[layout.inner_dim :] = phi_readout.ravel()
    return FlatWeights(out, layout)


def to_theta(phi, state):
    """Inverse of to_phi: theta_readout = Sigma^{1/2} phi_readout + mu."""
    from .network import FlatWeights

    values, layout = _split(phi)
    d = state.sigma.shape[0]
    k = state.mu.shape[1]
    readout = values[layout.inner_dim :].reshape(d, k)
    theta_readout = state.sigma_sqrt @ readout + state.mu
    out = values.copy()
    out[layout.inner_dim :] = theta_readout.ravel()
    return FlatWeights(out, layout)
