"""Fully connected network under NTK scaling with flat weight layout.

Hidden layers are indexed 1..L; layer l has width d_l and weight scale
sigma_w[l-1] / sqrt(fan_in). The readout feature matrix Psi collects the
scaled last hidden activations plus (when biases are on) a constant column
scaled by the readout bias scale, so the readout weights and bias are one
block of shape (d_L + 1) x k.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erf as _erf, ndtr as _ndtr

from .errors import LayoutError, NumericsError

_SQRT_2_OVER_PI = 2.0 / np.sqrt(np.pi)


def gelu(x):
    """Exact GELU, x * Phi(x) with the standard normal CDF."""
    x = np.asarray(x, dtype=np.float64)
    return x * _ndtr(x)


def gelu_deriv(x):
    x = np.asarray(x, dtype=np.float64)
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return _ndtr(x) + x * pdf


ACTIVATIONS = {
    "gelu": (gelu, gelu_deriv),
    "relu": (lambda x: np.maximum(x, 0.0), lambda x: (x > 0).astype(np.float64)),
    "identity": (lambda x: np.asarray(x, dtype=np.float64), lambda x: np.ones_like(x)),
    "erf": (_erf, lambda x: _SQRT_2_OVER_PI * np.exp(-np.square(x))),
}


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_widths: tuple
    output_dim: int
    activation: str = "gelu"
    sigma_w: tuple = None
    sigma_b: tuple = None
    include_bias: bool = True

    def __post_init__(self):
        widths = tuple(int(d) for d in self.hidden_widths)
        object.__setattr__(self, "hidden_widths", widths)
        L = len(widths)
        if L < 1:
            raise ValueError("at least one hidden layer is required")
        if self.input_dim < 1 or self.output_dim < 1 or min(widths) < 1:
            raise ValueError("all dimensions must be positive")
        sw = self.sigma_w if self.sigma_w is not None else (1.0,) * (L + 1)
        sb = self.sigma_b if self.sigma_b is not None else (0.0,) * (L + 1)
        sw = tuple(float(s) for s in sw)
        sb = tuple(float(s) for s in sb)
        if len(sw) != L + 1 or len(sb) != L + 1:
            raise ValueError("sigma_w and sigma_b must have length L + 1")
        if min(sw) <= 0 or min(sb) < 0:
            raise ValueError("sigma_w entries must be > 0, sigma_b entries >= 0")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "sigma_w", sw)
        object.__setattr__(self, "sigma_b", sb)

    @property
    def n_hidden(self):
        return len(self.hidden_widths)

    @property
    def readout_dim(self):
        """Rows of the readout block: d_L plus the bias column when present."""
        return self.hidden_widths[-1] + (1 if self.include_bias else 0)

    def layout(self):
        return WeightLayout.for_config(self)


@dataclass(frozen=True)
class WeightLayout:
    """Partition of the flat vector into named (offset, shape) blocks.

    Order: W1, b1, ..., W_{L+1}, b_{L+1} (bias blocks only when enabled).
    The readout blocks are always last, so the inner weights occupy a
    contiguous prefix of the vector.
    """

    blocks: tuple  # of (name, offset, shape)
    dim: int
    inner_dim: int

    @staticmethod
    def for_config(config):
        fan_ins = (config.input_dim,) + config.hidden_widths
        fan_outs = config.hidden_widths + (config.output_dim,)
        blocks = []
        offset = 0
        for l, (fi, fo) in enumerate(zip(fan_ins, fan_outs), start=1):
            blocks.append((f"W{l}", offset, (fi, fo)))
            offset += fi * fo
            if config.include_bias:
                blocks.append((f"b{l}", offset, (fo,)))
                offset += fo
        readout_size = config.readout_dim * config.output_dim
        return WeightLayout(tuple(blocks), offset, offset - readout_size)

    def block(self, values, name):
        """View of one named block, reshaped."""
        for bname, off, shape in self.blocks:
            if bname == name:
                return values[off : off + int(np.prod(shape))].reshape(shape)
        raise LayoutError(f"no block named {name!r}")

    def flatten(self, matrices):
        """Concatenate blocks given as {name: array} back into a flat vector."""
        out = np.empty(self.dim)
        for name, off, shape in self.blocks:
            arr = np.asarray(matrices[name], dtype=np.float64)
            if arr.shape != shape:
                raise LayoutError(f"block {name} has shape {arr.shape}, expected {shape}")
            out[off : off + arr.size] = arr.ravel()
        return out

    def unflatten(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.dim,):
            raise LayoutError(f"vector length {values.shape} does not match D={self.dim}")
        return {name: self.block(values, name) for name, _, _ in self.blocks}


@dataclass(frozen=True)
class FlatWeights:
    values: np.ndarray
    layout: WeightLayout

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.layout.dim,):
            raise LayoutError(
                f"vector length {v.shape[0] if v.ndim == 1 else v.shape} "
                f"does not match layout D={self.layout.dim}"
            )
        object.__setattr__(self, "values", v)

    @property
    def inner(self):
        return self.values[: self.layout.inner_dim]

    @property
    def readout(self):
        return self.values[self.layout.inner_dim :]


@dataclass(frozen=True)
class ForwardTrace:
    """Per-layer evaluation record of one forward pass.

    preactivations holds the L hidden preactivation matrices followed by
    the network output; postactivations the L activated matrices.
    """

    preactivations: tuple
    postactivations: tuple
    psi: np.ndarray

    @property
    def output(self):
        return self.preactivations[-1]


def prior_draw(config, rng):
    """Standard normal flat weights (the NTK-scaled prior)."""
    layout = config.layout()
    return FlatWeights(rng.standard_normal(layout.dim), layout)


def readout_matrix(config, values, layout):
    """Readout weights (and bias row, when present) as a (d', k) matrix."""
    k = config.output_dim
    return values[layout.inner_dim :].reshape(config.readout_dim, k)


def _hidden_pass(config, blocks, X):
    """Shared forward recursion over the hidden layers."""
    act, _ = ACTIVATIONS[config.activation]
    pre, post = [], []
    g = X
    fan_in = config.input_dim
    for l, d in enumerate(config.hidden_widths, start=1):
        h = (config.sigma_w[l - 1] / np.sqrt(fan_in)) * (g @ blocks[f"W{l}"])
        if config.include_bias:
            h = h + config.sigma_b[l - 1] * blocks[f"b{l}"]
        g = act(h)
        pre.append(h)
        post.append(g)
        fan_in = d
    return pre, post


def compute_psi(config, inner_values, X, layout=None):
    """Scaled readout features for inner weights alone (readout not needed).

    Returns (psi, pre, post) so gradient code can reuse the trace.
    """
    layout = layout or config.layout()
    inner_values = np.asarray(inner_values, dtype=np.float64)
    if inner_values.shape != (layout.inner_dim,):
        raise LayoutError(
            f"inner vector length {inner_values.shape} != {layout.inner_dim}"
        )
    if not np.isfinite(inner_values).all():
        raise NumericsError("non-finite inner weights")
    full = np.zeros(layout.dim)
    full[: layout.inner_dim] = inner_values
    blocks = layout.unflatten(full)
    pre, post = _hidden_pass(config, blocks, X)
    L = config.n_hidden
    scale = config.sigma_w[L] / np.sqrt(config.hidden_widths[-1])
    psi = scale * post[-1]
    if config.include_bias:
        ones = np.full((X.shape[0], 1), config.sigma_b[L])
        psi = np.concatenate([psi, ones], axis=1)
    return psi, pre, post


def forward(config, theta, inputs):
    """Evaluate the full network, returning the layer trace and Psi."""
    if isinstance(theta, FlatWeights):
        values, layout = theta.values, theta.layout
    else:
        layout = config.layout()
        values = np.asarray(theta, dtype=np.float64)
        if values.shape != (layout.dim,):
            raise LayoutError(f"weight vector length mismatch for D={layout.dim}")
    if not np.isfinite(values).all():
        raise NumericsError("non-finite weights")
    X = np.asarray(inputs, dtype=np.float64)
    psi, pre, post = compute_psi(config, values[: layout.inner_dim], X, layout)
    out = psi @ readout_matrix(config, values, layout)
    return ForwardTrace(tuple(pre) + (out,), tuple(post), psi)


def psi_jvp(config, theta, inputs, d_inner):
    """Directional derivative of Psi along an inner-weight perturbation.

    This is the action of the Jacobian dW -> dPsi, exact to first order.
    """
    if isinstance(theta, FlatWeights):
        values, layout = theta.values, theta.layout
    else:
        layout = config.layout()
        values = np.asarray(theta, dtype=np.float64)
    _, deriv = ACTIVATIONS[config.activation]
    d_inner = np.asarray(d_inner, dtype=np.float64)
    if d_inner.shape != (layout.inner_dim,):
        raise LayoutError("perturbation length does not match inner dimension")

    full = np.zeros(layout.dim)
    full[: layout.inner_dim] = values[: layout.inner_dim]
    blocks = layout.unflatten(full)
    dfull = np.zeros(layout.dim)
    dfull[: layout.inner_dim] = d_inner
    dblocks = layout.unflatten(dfull)

    X = np.asarray(inputs, dtype=np.float64)
    pre, post = _hidden_pass(config, blocks, X)

    g, dg = X, np.zeros_like(X)
    fan_in = config.input_dim
    for l, d in enumerate(config.hidden_widths, start=1):
        s = config.sigma_w[l - 1] / np.sqrt(fan_in)
        dh = s * (dg @ blocks[f"W{l}"] + g @ dblocks[f"W{l}"])
        if config.include_bias:
            dh = dh + config.sigma_b[l - 1] * dblocks[f"b{l}"]
        dg = deriv(pre[l - 1]) * dh
        g = post[l - 1]
        fan_in = d

    L = config.n_hidden
    scale = config.sigma_w[L] / np.sqrt(config.hidden_widths[-1])
    dpsi = scale * dg
    if config.include_bias:
        dpsi = np.concatenate([dpsi, np.zeros((X.shape[0], 1))], axis=1)
    return dpsi


def psi_vjp(config, inner_values, inputs, psi_cotangent, trace=None, layout=None):
    """Adjoint of the Psi Jacobian: pull a Psi cotangent back to inner weights.

    trace may carry (pre, post) from a matching compute_psi call to avoid
    recomputing the forward pass.
    """
    layout = layout or config.layout()
    _, deriv = ACTIVATIONS[config.activation]
    X = np.asarray(inputs, dtype=np.float64)
    if trace is None:
        _, pre, post = compute_psi(config, inner_values, X, layout)
    else:
        pre, post = trace

    full = np.zeros(layout.dim)
    full[: layout.inner_dim] = inner_values
    blocks = layout.unflatten(full)

    L = config.n_hidden
    gbar = np.asarray(psi_cotangent, dtype=np.float64)
    if config.include_bias:
        gbar = gbar[:, :-1]  # constant column carries no inner-weight dependence
    gbar = (config.sigma_w[L] / np.sqrt(config.hidden_widths[-1])) * gbar

    grads = {}
    for l in range(L, 0, -1):
        hbar = deriv(pre[l - 1]) * gbar
        fan_in = config.input_dim if l == 1 else config.hidden_widths[l - 2]
        s = config.sigma_w[l - 1] / np.sqrt(fan_in)
        g_prev = X if l == 1 else post[l - 2]
        grads[f"W{l}"] = s * (g_prev.T @ hbar)
        if config.include_bias:
            grads[f"b{l}"] = config.sigma_b[l - 1] * hbar.sum(axis=0)
        gbar = s * (hbar @ blocks[f"W{l}"].T)

    out = np.zeros(layout.inner_dim)
    for name, off, shape in layout.blocks:
        if name in grads:
            out[off : off + int(np.prod(shape))] = grads[name].ravel()
    return out
