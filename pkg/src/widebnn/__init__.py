"""Posterior sampling for wide Bayesian neural networks.

Samples the whitened-readout posterior of fully connected networks under
NTK scaling with pCN, pCN-Langevin and MALA proposals, and provides the
diagnostics (ESS, Gelman-Rubin, PC traces) used to compare them across
network widths.
"""

from .data import Dataset, load_cifar10, synthetic_regression
from .diagnostics import ess, gelman_rubin, pc_traces
from .network import (
    FlatWeights,
    ForwardTrace,
    NetworkConfig,
    WeightLayout,
    forward,
    gelu,
    prior_draw,
    psi_jvp,
)
from .posterior import (
    FULL_PHI,
    INNER_ONLY,
    KernelMatrix,
    PosteriorTarget,
    sample_readout_conditional,
)
from .reparam import ReparamState, build_reparam, to_phi, to_theta
from .samplers import (
    Chain,
    ProposalRecord,
    SamplerConfig,
    beta_to_delta,
    lmc_accept,
    lmc_propose,
    pcn_accept,
    pcn_propose,
    pcnl_accept,
    pcnl_propose,
    run_chain,
)

__version__ = "0.1.0"
