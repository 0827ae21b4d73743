import numpy as np
import pytest
from scipy import stats

from widebnn.errors import CheckpointError, NumericsError
from widebnn.samplers import (
    ACCEPTANCE_WINDOW,
    SamplerConfig,
    beta_to_delta,
    lmc_accept,
    lmc_propose,
    load_checkpoint,
    pcn_accept,
    pcn_propose,
    pcnl_accept,
    pcnl_propose,
    run_chain,
    save_checkpoint,
)


class GaussianTarget:
    """N(mean, diag(var)) posterior expressed against the N(0, I) reference.

    log_likelihood is log p(x) - log N(x; 0, I), so the MCMC reference
    measure times exp(log_likelihood) is exactly the stated Gaussian.
    """

    def __init__(self, mean, var):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.var = np.asarray(var, dtype=np.float64)
        self.dim = self.mean.size

    def log_posterior(self, x):
        r = x - self.mean
        return -0.5 * float(r @ (r / self.var)) - 0.5 * float(np.log(self.var).sum())

    def log_likelihood(self, x):
        return self.log_posterior(x) + 0.5 * float(x @ x)

    def grad_log_posterior(self, x):
        return -(x - self.mean) / self.var

    def grad_log_likelihood(self, x):
        return self.grad_log_posterior(x) + x

    def loglik_and_grad(self, x):
        return self.log_likelihood(x), self.grad_log_likelihood(x)

    def logpost_and_grad(self, x):
        return self.log_posterior(x), self.grad_log_posterior(x)

    def descriptor_hash(self):
        return "gauss"


class FlatTarget:
    """Zero likelihood: the posterior is exactly the N(0, I) reference."""

    def __init__(self, dim):
        self.dim = dim

    def log_likelihood(self, x):
        return 0.0

    def grad_log_likelihood(self, x):
        return np.zeros_like(x)

    def loglik_and_grad(self, x):
        return 0.0, np.zeros_like(x)

    def log_posterior(self, x):
        return -0.5 * float(x @ x)

    def logpost_and_grad(self, x):
        return self.log_posterior(x), -x

    def descriptor_hash(self):
        return "flat"


# -------------------------------------------------------------- beta <-> delta


def test_beta_delta_endpoints():
    # beta = 1 corresponds to delta = 2 (independence limit of the map)
    assert beta_to_delta(1.0) == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("beta", [0.05, 0.1, 0.3, 0.6, 0.8, 0.99])
def test_beta_delta_inverts_forward_map(beta):
    d = beta_to_delta(beta)
    assert 0 < d <= 2
    assert 8 * d / (2 + d) ** 2 == pytest.approx(beta**2, rel=1e-12)


def test_beta_delta_rejects_out_of_range():
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            beta_to_delta(bad)


# ------------------------------------------------------------------- proposals


def test_pcn_proposal_moments():
    # v = sqrt(1 - beta^2) u + beta w: conditional mean and variance
    rng = np.random.default_rng(0)
    u = np.full(5, 2.0)
    beta = 0.1
    draws = np.array([pcn_propose(u, beta, np.random.default_rng(i)) for i in range(4000)])
    assert np.allclose(draws.mean(axis=0), np.sqrt(1 - beta**2) * u, atol=0.01)
    assert draws.var() == pytest.approx(beta**2, rel=0.1)


def test_pcn_preserves_standard_normal_mc():
    # if u ~ N(0, I) then the pCN proposal is again N(0, I)
    rng = np.random.default_rng(1)
    u = rng.standard_normal(200_000)
    v = pcn_propose(u, 0.4, rng)
    assert abs(v.mean()) < 0.01
    assert v.var() == pytest.approx(1.0, rel=0.02)
    assert stats.kstest(v[:5000], "norm").pvalue > 0.01


def test_pcnl_zero_grad_mean_matches_closed_form():
    # with zero gradient the pcnl mean is (2 - delta)/(2 + delta) u
    # = sqrt(1 - beta^2) u, i.e. the pCN mean
    target = FlatTarget(4)
    beta = 0.3
    delta = beta_to_delta(beta)
    u = np.full(4, 1.5)
    draws = np.array(
        [pcnl_propose(target, u, delta, np.random.default_rng(i)) for i in range(4000)]
    )
    assert np.allclose(draws.mean(axis=0), np.sqrt(1 - beta**2) * u, atol=0.02)
    # variance 8 delta / (2 + delta)^2 = beta^2
    assert draws.var() == pytest.approx(beta**2, rel=0.1)


def test_lmc_proposal_moments():
    target = GaussianTarget(np.zeros(3), np.ones(3))
    u = np.full(3, 1.0)
    eps = 0.2
    drift = u + 0.5 * eps**2 * target.grad_log_posterior(u)
    draws = np.array(
        [lmc_propose(target, u, eps, np.random.default_rng(i)) for i in range(4000)]
    )
    assert np.allclose(draws.mean(axis=0), drift, atol=0.02)
    assert draws.var() == pytest.approx(eps**2, rel=0.1)


def test_accept_helpers_flag_nonfinite():
    class BadTarget(FlatTarget):
        def log_likelihood(self, x):
            raise NumericsError("boom")

        def loglik_and_grad(self, x):
            raise NumericsError("boom")

        def logpost_and_grad(self, x):
            raise NumericsError("boom")

    rng = np.random.default_rng(0)
    bad = BadTarget(2)
    u, v = np.zeros(2), np.ones(2)
    for rec in (
        pcn_accept(bad, u, v, rng),
        pcnl_accept(bad, u, v, 0.1, rng),
        lmc_accept(bad, u, v, 0.1, rng),
    ):
        assert not rec.accepted
        assert rec.nonfinite
        assert rec.log_accept_ratio == float("-inf")


def test_pcn_flat_target_always_accepts():
    rng = np.random.default_rng(2)
    target = FlatTarget(3)
    for _ in range(20):
        v = pcn_propose(np.zeros(3), 0.5, rng)
        assert pcn_accept(target, np.zeros(3), v, rng).accepted


def test_acceptance_ratio_symmetric_under_swap():
    # detailed-balance sanity: r(u -> v) = -r(v -> u) for pCN
    rng = np.random.default_rng(3)
    target = GaussianTarget(np.array([1.0, -1.0]), np.array([0.5, 2.0]))
    u = rng.standard_normal(2)
    v = rng.standard_normal(2)
    fwd = pcn_accept(target, u, v, rng).log_accept_ratio
    rev = pcn_accept(target, v, u, rng).log_accept_ratio
    assert fwd == pytest.approx(-rev, rel=1e-12)


# ------------------------------------------------------------------ run_chain


def chain_config(**kw):
    kw.setdefault("kind", "pcn")
    kw.setdefault("beta", 0.5)
    kw.setdefault("steps", 200)
    return SamplerConfig(**kw)


def test_sample_counting_contract():
    cfg = chain_config(steps=100, burn_in=0, thin=25)
    assert cfg.n_samples == 4
    target = FlatTarget(2)
    chain = run_chain(target, cfg)
    assert chain.samples.shape == (4, 2)
    assert chain.proposal_count == 100
    cfg2 = chain_config(steps=103, burn_in=3, thin=25)
    assert cfg2.n_samples == 4


def test_acceptance_series_windows():
    cfg = chain_config(steps=2500)
    chain = run_chain(FlatTarget(2), cfg)
    # 2 full windows of ACCEPTANCE_WINDOW plus a partial of 500
    assert len(chain.acceptance_series) == 3
    assert chain.acceptance_rate == 1.0  # flat target accepts everything
    assert np.all(chain.acceptance_series == 1.0)
    assert ACCEPTANCE_WINDOW == 1000


def test_same_seed_bitwise_identical():
    cfg = chain_config(steps=300, thin=10, kind="pcnl", beta=0.3)
    target = GaussianTarget(np.array([0.5, -0.5]), np.array([1.0, 2.0]))
    a = run_chain(target, cfg)
    b = run_chain(target, cfg)
    assert np.array_equal(a.samples, b.samples)
    assert a.acceptance_count == b.acceptance_count


def test_different_seeds_differ():
    target = FlatTarget(2)
    a = run_chain(target, chain_config(seed=0, thin=10))
    b = run_chain(target, chain_config(seed=1, thin=10))
    assert not np.array_equal(a.samples, b.samples)


@pytest.mark.parametrize("kind,param", [("pcn", 0.6), ("pcnl", 0.6), ("lmc", 0.5)])
def test_chain_recovers_gaussian_mean(kind, param):
    # all three kernels target the same shifted Gaussian
    target = GaussianTarget(np.array([1.0, -2.0]), np.array([1.0, 1.0]))
    cfg = SamplerConfig(kind, param, steps=20_000, burn_in=2000, thin=5, seed=3)
    chain = run_chain(target, cfg)
    est = chain.samples.mean(axis=0)
    assert np.allclose(est, target.mean, atol=0.1)
    assert 0.05 < chain.acceptance_rate <= 1.0


def test_init_vector_respected():
    target = GaussianTarget(np.zeros(2), np.ones(2))
    init = np.array([5.0, 5.0])
    cfg = SamplerConfig("pcn", 0.0001, steps=2, burn_in=0, thin=1, seed=0)
    chain = run_chain(target, cfg, init=init)
    # with beta ~ 0 the state barely moves from the init
    assert np.allclose(chain.samples[-1], init, atol=0.1)
    with pytest.raises(ValueError):
        run_chain(target, cfg, init=np.zeros(3))


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig("nuts", 0.1, 10)
    with pytest.raises(ValueError):
        SamplerConfig("pcn", 0.0, 10)
    with pytest.raises(ValueError):
        SamplerConfig("pcn", 1.5, 10)
    with pytest.raises(ValueError):
        SamplerConfig("pcnl", 1.0, 10)
    with pytest.raises(ValueError):
        SamplerConfig("pcn", 0.5, 10, burn_in=10)
    with pytest.raises(ValueError):
        SamplerConfig("pcn", 0.5, 10, thin=0)


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_roundtrip(tmp_path):
    path = str(tmp_path / "ck.npz")
    rng = np.random.default_rng(0)
    from widebnn.samplers import _WindowTally

    tally = _WindowTally()
    for i in range(1500):
        tally.add(i % 2 == 0)
    state = rng.standard_normal(4)
    samples = rng.standard_normal((3, 4))
    save_checkpoint(path, "abc", 1500, state, rng, tally, 750, samples)
    meta, state2, samples2 = load_checkpoint(path, "abc")
    assert meta["step"] == 1500 and meta["acceptance_count"] == 750
    assert np.array_equal(state2, state)
    assert np.array_equal(samples2, samples)
    assert meta["rng_state"] == rng.bit_generator.state


def test_checkpoint_hash_mismatch_refused(tmp_path):
    path = str(tmp_path / "ck.npz")
    rng = np.random.default_rng(0)
    from widebnn.samplers import _WindowTally

    save_checkpoint(path, "abc", 10, np.zeros(2), rng, _WindowTally(), 5, np.zeros((1, 2)))
    with pytest.raises(CheckpointError):
        load_checkpoint(path, "other")


def test_resume_reproduces_uninterrupted_chain(tmp_path):
    target = GaussianTarget(np.array([1.0, 0.0]), np.array([1.0, 1.0]))
    cfg = SamplerConfig(
        "pcn", 0.5, steps=400, burn_in=100, thin=10, seed=7, checkpoint_every=150
    )
    full = run_chain(target, cfg)

    path = str(tmp_path / "ck.npz")
    # simulate an interruption by stopping at the checkpoint boundary
    cfg_short = SamplerConfig(
        "pcn", 0.5, steps=400, burn_in=100, thin=10, seed=7, checkpoint_every=150
    )

    class Stopper(GaussianTarget):
        calls = 0

        def log_likelihood(self, x):
            Stopper.calls += 1
            if Stopper.calls > 151:  # initial eval + 150 proposals
                raise KeyboardInterrupt
            return super().log_likelihood(x)

    stopper = Stopper(np.array([1.0, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(KeyboardInterrupt):
        run_chain(stopper, cfg_short, checkpoint_path=path)
    assert (tmp_path / "ck.npz").exists()

    resumed = run_chain(target, cfg, checkpoint_path=path, resume=True)
    assert np.array_equal(resumed.samples, full.samples)
    assert resumed.acceptance_count == full.acceptance_count
    assert resumed.proposal_count == full.proposal_count


def test_resume_without_checkpoint_raises():
    with pytest.raises(CheckpointError):
        run_chain(FlatTarget(2), chain_config(), checkpoint_path=None, resume=True)
