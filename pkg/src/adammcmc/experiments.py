"""Wiring from a RunConfig to targets, step closures and finished chains.

One SeedSequence per run spawns three independent streams (proposals,
minibatch shuffling, initialization), so a full-batch chain and a minibatch
chain with the same seed see identical proposal noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainRecord, ChainSchedule, EnsembleSummary, run_chain
from .config import RunConfig
from .losses import (
    BatchStream,
    GibbsTarget,
    banana_target,
    mlp_target,
    noisy_quadratic_target,
    quadratic_target,
)
from .mlp import MicroMlp, load_dataset_csv, two_moons
from .samplers import (
    AdamParams,
    ChainState,
    CorrectionParams,
    ProposalParams,
    SghmcParams,
    adam_step,
    adammcmc_step,
    mala_step,
    sgd_step,
    sghmc_step,
)


class NumericalAbort(RuntimeError):
    """The chain reached a state no step can recover from."""


@dataclass
class Experiment:
    """Everything a run needs, assembled from one config."""

    config: RunConfig
    target: GibbsTarget
    schedule: ChainSchedule
    sigma_dir: float
    net: MicroMlp | None = None
    test_inputs: np.ndarray | None = None
    test_labels: np.ndarray | None = None


@dataclass
class ExperimentResult:
    experiment: Experiment
    summary: EnsembleSummary
    record: ChainRecord


def resolve_sigma_dir(config: RunConfig, dim: int) -> float:
    """Directional noise default: dim / 100 when the config leaves it unset."""
    if config.sigma_dir is not None:
        return float(config.sigma_dir)
    return dim / 100.0


def correction_params(config: RunConfig, ap: AdamParams) -> CorrectionParams:
    if config.correction == "unit":
        return CorrectionParams.unit()
    if config.rho1 is not None and config.rho2 is not None:
        return CorrectionParams(mode="full", rho1=config.rho1, rho2=config.rho2)
    return CorrectionParams.full_from_s2(config.s_sq, ap)


def build_experiment(config: RunConfig) -> Experiment:
    """Instantiate the target (and dataset, for the classifier) of a config."""
    config.validate()
    if config.target == "quadratic":
        target = quadratic_target(config.dim, config.lam, config.prior_half_width)
        net = test_x = test_y = None
    elif config.target == "noisy_quadratic":
        target = noisy_quadratic_target(config.dim, config.lam, config.prior_half_width)
        net = test_x = test_y = None
    elif config.target == "banana":
        target = banana_target(config.dim, config.lam, config.prior_half_width)
        net = test_x = test_y = None
    else:
        net = MicroMlp()
        if config.dataset:
            train_x, train_y = load_dataset_csv(config.dataset)
            test_x, test_y = train_x, train_y
        else:
            train_x, train_y, test_x, test_y = two_moons()
        target = mlp_target(net, train_x, train_y, config.lam, config.prior_half_width)
    schedule = ChainSchedule(config.steps, config.burn_in, config.gap, config.n_samples)
    return Experiment(
        config=config,
        target=target,
        schedule=schedule,
        sigma_dir=resolve_sigma_dir(config, target.dim),
        net=net,
        test_inputs=test_x,
        test_labels=test_y,
    )


def initial_state(experiment: Experiment, init_rng, chain_rng) -> ChainState:
    """Starting point: He-initialized classifier weights or a small random
    vector for the analytic targets."""
    cfg = experiment.config
    if cfg.target == "mlp":
        theta0 = experiment.net.init_params(init_rng)
    else:
        theta0 = 0.1 * init_rng.standard_normal(cfg.dim)
    state = ChainState.init(theta0, chain_rng)
    loss0 = experiment.target.oracle.eval(theta0)
    if not np.isfinite(loss0):
        raise NumericalAbort(f"initial loss is not finite: {loss0}")
    return state


def make_step_fn(experiment: Experiment, batches: BatchStream):
    """Bind the configured sampler into a ChainState -> (state, info) closure.

    Within one step the same minibatch feeds the proposal gradient and both
    loss evaluations of the accept test; batches are resampled across steps.
    """
    cfg = experiment.config
    target = experiment.target
    oracle = target.oracle
    ap = AdamParams(cfg.gamma, cfg.beta1, cfg.beta2, cfg.delta)
    pp = ProposalParams(cfg.sigma, experiment.sigma_dir)
    cp = correction_params(cfg, ap)

    if cfg.sampler == "adammcmc":

        def step(state):
            return adammcmc_step(state, target, ap, pp, cp, batch=batches.next())

    elif cfg.sampler == "mala":

        def step(state):
            return mala_step(state, target, cfg.gamma, cfg.sigma, batch=batches.next())

    elif cfg.sampler == "adam":

        def step(state):
            return adam_step(state, oracle, ap, batch=batches.next())

    elif cfg.sampler == "sgd":

        def step(state):
            return sgd_step(state, oracle, cfg.gamma, batch=batches.next())

    else:  # sghmc
        sp = SghmcParams(cfg.gamma, cfg.friction, cfg.noise_scale)

        def step(state):
            return sghmc_step(state, oracle, sp, batch=batches.next())

    return step


def run_experiment(config: RunConfig) -> ExperimentResult:
    """Build, initialize and run one chain as described by the config."""
    experiment = build_experiment(config)
    chain_seq, batch_seq, init_seq = np.random.SeedSequence(config.seed).spawn(3)
    chain_rng = np.random.default_rng(chain_seq)
    batch_rng = np.random.default_rng(batch_seq)
    init_rng = np.random.default_rng(init_seq)

    state0 = initial_state(experiment, init_rng, chain_rng)
    batches = BatchStream(experiment.target.oracle.n_points, config.batch_size, batch_rng)
    step_fn = make_step_fn(experiment, batches)
    summary, record = run_chain(step_fn, state0, experiment.schedule)
    return ExperimentResult(experiment, summary, record)


def ensemble_test_accuracy(result: ExperimentResult) -> float:
    """Accuracy of the posterior-mean prediction on the held-out inputs."""
    from .chain import ensemble_predict

    exp = result.experiment
    if exp.net is None:
        raise ValueError("test accuracy is only defined for the classifier target")
    mean_probs, _ = ensemble_predict(result.summary.samples, exp.net, exp.test_inputs)
    predicted = mean_probs.argmax(axis=1)
    return float((predicted == exp.test_labels).mean())
