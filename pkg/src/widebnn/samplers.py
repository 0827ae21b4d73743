"""Metropolis-Hastings driver with pCN, pCNL and Langevin (MALA) proposals.

All samplers assume a standard normal reference/prior on the sampled state,
so the pCN acceptance ratio reduces to a log-likelihood difference and the
pCNL ratio to the antisymmetrized drift functional rho(u, v) - rho(v, u).
"""

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, NumericsError

PCN = "pcn"
PCNL = "pcnl"
LMC = "lmc"

ACCEPTANCE_WINDOW = 1000  # proposals per acceptance-rate reporting window

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SamplerConfig:
    kind: str
    beta: float
    steps: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.kind not in (PCN, PCNL, LMC):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("beta must lie in (0, 1]")
        if self.kind == PCNL and self.beta >= 1.0:
            raise ValueError("pcnl requires beta < 1 so that delta < 2")
        if self.steps < 1 or self.burn_in < 0 or self.burn_in >= self.steps:
            raise ValueError("need 0 <= burn_in < steps")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_samples(self):
        return (self.steps - self.burn_in) // self.thin

    def hash(self, target_hash=""):
        blob = json.dumps(
            {
                "kind": self.kind,
                "beta": self.beta,
                "steps": self.steps,
                "burn_in": self.burn_in,
                "thin": self.thin,
                "seed": self.seed,
                "target": target_hash,
            },
            sort_keys=True,
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ProposalRecord:
    proposed: np.ndarray
    log_accept_ratio: float
    accepted: bool
    nonfinite: bool = False


@dataclass
class Chain:
    samples: np.ndarray
    acceptance_count: int
    proposal_count: int
    acceptance_series: np.ndarray
    seed: int
    target_desc: str
    config: SamplerConfig
    wall_time: float

    @property
    def acceptance_rate(self):
        return self.acceptance_count / max(self.proposal_count, 1)


def beta_to_delta(beta):
    """Root delta in (0, 2] of beta^2 = 8 delta / (2 + delta)^2."""
    if not (0.0 < beta <= 1.0):
        raise ValueError("beta must lie in (0, 1]")
    b2 = beta * beta
    # beta^2 delta^2 + (4 beta^2 - 8) delta + 4 beta^2 = 0, lower root
    disc = (8.0 - 4.0 * b2) ** 2 - 16.0 * b2 * b2
    delta = ((8.0 - 4.0 * b2) - np.sqrt(max(disc, 0.0))) / (2.0 * b2)
    return float(delta)


def pcn_propose(current, beta, rng):
    u = np.asarray(current, dtype=np.float64)
    w = rng.standard_normal(u.shape)
    return np.sqrt(1.0 - beta * beta) * u + beta * w


def pcnl_propose(target, current, delta, rng, grad=None):
    u = np.asarray(current, dtype=np.float64)
    if grad is None:
        grad = target.grad_log_likelihood(u)
    if not np.isfinite(grad).all():
        raise NumericsError("non-finite likelihood gradient in proposal")
    w = rng.standard_normal(u.shape)
    return ((2.0 - delta) * u + 2.0 * delta * grad + np.sqrt(8.0 * delta) * w) / (
        2.0 + delta
    )


def lmc_propose(target, current, eps, rng, grad_post=None):
    u = np.asarray(current, dtype=np.float64)
    if grad_post is None:
        grad_post = target.grad_log_posterior(u)
    if not np.isfinite(grad_post).all():
        raise NumericsError("non-finite posterior gradient in proposal")
    w = rng.standard_normal(u.shape)
    return u + 0.5 * eps * eps * grad_post + eps * w


def _pcnl_rho(ll_u, u, v, grad_u, delta):
    return (
        -ll_u
        - 0.5 * float((v - u) @ grad_u)
        - 0.25 * delta * float((u + v) @ grad_u)
        + 0.25 * delta * float(grad_u @ grad_u)
    )


def _lmc_log_q(x_from, x_to, grad_from, eps):
    """log N(x_to; x_from + eps^2/2 grad_from, eps^2 I), constants dropped."""
    resid = x_to - x_from - 0.5 * eps * eps * grad_from
    return -float(resid @ resid) / (2.0 * eps * eps)


def _decide(log_ratio, rng):
    if not np.isfinite(log_ratio):
        return False, float("-inf"), True
    accepted = bool(np.log(rng.uniform()) < log_ratio) if log_ratio < 0 else True
    return accepted, float(log_ratio), False


def pcn_accept(target, u, v, rng):
    """Accept/reject for the pCN proposal: ratio is l(v) - l(u)."""
    try:
        log_ratio = target.log_likelihood(v) - target.log_likelihood(u)
    except NumericsError:
        log_ratio = float("-inf")
    accepted, log_ratio, nonfinite = _decide(log_ratio, rng)
    return ProposalRecord(np.asarray(v), log_ratio, accepted, nonfinite)


def pcnl_accept(target, u, v, delta, rng):
    try:
        ll_u, g_u = target.loglik_and_grad(u)
        ll_v, g_v = target.loglik_and_grad(v)
        log_ratio = _pcnl_rho(ll_u, u, v, g_u, delta) - _pcnl_rho(
            ll_v, v, u, g_v, delta
        )
    except NumericsError:
        log_ratio = float("-inf")
    accepted, log_ratio, nonfinite = _decide(log_ratio, rng)
    return ProposalRecord(np.asarray(v), log_ratio, accepted, nonfinite)


def lmc_accept(target, u, v, eps, rng):
    try:
        lp_u, gp_u = target.logpost_and_grad(u)
        lp_v, gp_v = target.logpost_and_grad(v)
        log_ratio = (
            lp_v - lp_u + _lmc_log_q(v, u, gp_v, eps) - _lmc_log_q(u, v, gp_u, eps)
        )
    except NumericsError:
        log_ratio = float("-inf")
    accepted, log_ratio, nonfinite = _decide(log_ratio, rng)
    return ProposalRecord(np.asarray(v), log_ratio, accepted, nonfinite)


class _WindowTally:
    """Acceptance counts bucketed into fixed windows of proposals."""

    def __init__(self, window=ACCEPTANCE_WINDOW):
        self.window = window
        self.rates = []
        self.count = 0
        self.accepted = 0

    def add(self, accepted):
        self.count += 1
        self.accepted += int(accepted)
        if self.count == self.window:
            self.rates.append(self.accepted / self.window)
            self.count = 0
            self.accepted = 0

    def series(self):
        out = list(self.rates)
        if self.count:
            out.append(self.accepted / self.count)
        return np.asarray(out)

    def state(self):
        return {"rates": list(self.rates), "count": self.count, "accepted": self.accepted}

    @staticmethod
    def from_state(d):
        t = _WindowTally()
        t.rates = list(d["rates"])
        t.count = int(d["count"])
        t.accepted = int(d["accepted"])
        return t


def _atomic_savez(path, **arrays):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def save_checkpoint(path, config_hash, step, state, rng, tally, n_accept, samples):
    meta = {
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "step": step,
        "acceptance_count": n_accept,
        "rng_state": rng.bit_generator.state,
        "tally": tally.state(),
    }
    _atomic_savez(
        path,
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        state=np.asarray(state, dtype="<f8"),
        samples=np.asarray(samples, dtype="<f8"),
    )


def load_checkpoint(path, config_hash):
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        state = data["state"].astype(np.float64)
        samples = data["samples"].astype(np.float64)
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")
    if meta["config_hash"] != config_hash:
        raise CheckpointError(
            "checkpoint config hash mismatch: "
            f"{meta['config_hash']} != {config_hash}"
        )
    return meta, state, samples


def run_chain(target, config, init=None, rng=None, checkpoint_path=None, resume=False):
    """Drive one MH chain, storing thinned post-burn-in samples.

    The chain state is the vector sampled by `target` (all of phi, or the
    inner weights only); stored samples are always completed to the full
    vector via target.complete_sample.
    """
    t0 = time.perf_counter()
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    kind = config.kind
    cfg_hash = config.hash(getattr(target, "descriptor_hash", lambda: "")())

    sample_dim = getattr(target, "sample_dim", target.dim)
    samples = np.empty((config.n_samples, sample_dim))
    tally = _WindowTally()
    n_accept = 0
    start_step = 0

    if resume:
        if checkpoint_path is None or not os.path.exists(checkpoint_path):
            raise CheckpointError("no checkpoint to resume from")
        meta, u, stored = load_checkpoint(checkpoint_path, cfg_hash)
        start_step = meta["step"]
        n_accept = meta["acceptance_count"]
        tally = _WindowTally.from_state(meta["tally"])
        rng.bit_generator.state = meta["rng_state"]
        n_stored = max(0, (start_step - config.burn_in) // config.thin)
        samples[:n_stored] = stored[:n_stored]
    elif init is not None:
        u = np.array(getattr(init, "values", init), dtype=np.float64)
        if u.shape != (target.dim,):
            raise ValueError("init length does not match target dimension")
    else:
        u = rng.standard_normal(target.dim)

    if kind == PCN:
        ll_u = target.log_likelihood(u)
    elif kind == PCNL:
        delta = beta_to_delta(config.beta)
        ll_u, g_u = target.loglik_and_grad(u)
    else:
        eps = config.beta
        lp_u, gp_u = target.logpost_and_grad(u)

    for step in range(start_step, config.steps):
        if kind == PCN:
            v = pcn_propose(u, config.beta, rng)
            try:
                ll_v = target.log_likelihood(v)
                log_ratio = ll_v - ll_u
            except NumericsError:
                log_ratio = float("-inf")
        elif kind == PCNL:
            v = pcnl_propose(target, u, delta, rng, grad=g_u)
            try:
                ll_v, g_v = target.loglik_and_grad(v)
                log_ratio = _pcnl_rho(ll_u, u, v, g_u, delta) - _pcnl_rho(
                    ll_v, v, u, g_v, delta
                )
            except NumericsError:
                log_ratio = float("-inf")
        else:
            v = lmc_propose(target, u, eps, rng, grad_post=gp_u)
            try:
                lp_v, gp_v = target.logpost_and_grad(v)
                log_ratio = (
                    lp_v
                    - lp_u
                    + _lmc_log_q(v, u, gp_v, eps)
                    - _lmc_log_q(u, v, gp_u, eps)
                )
            except NumericsError:
                log_ratio = float("-inf")

        accepted, _, _ = _decide(log_ratio, rng)
        if accepted:
            u = v
            if kind == PCN:
                ll_u = ll_v
            elif kind == PCNL:
                ll_u, g_u = ll_v, g_v
            else:
                lp_u, gp_u = lp_v, gp_v
        n_accept += int(accepted)
        tally.add(accepted)

        done = step + 1
        if done > config.burn_in and (done - config.burn_in) % config.thin == 0:
            idx = (done - config.burn_in) // config.thin - 1
            if idx < samples.shape[0]:
                complete = getattr(target, "complete_sample", None)
                samples[idx] = complete(u, rng) if complete else u

        if (
            checkpoint_path
            and config.checkpoint_every
            and done % config.checkpoint_every == 0
            and done < config.steps
        ):
            save_checkpoint(
                checkpoint_path, cfg_hash, done, u, rng, tally, n_accept, samples
            )

    return Chain(
        samples=samples,
        acceptance_count=n_accept,
        proposal_count=config.steps,
        acceptance_series=tally.series(),
        seed=config.seed,
        target_desc=getattr(target, "descriptor_hash", lambda: "")(),
        config=config,
        wall_time=time.perf_counter() - t0,
    )
