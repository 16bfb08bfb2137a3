"""Markov-chain step functions: Metropolis-adjusted Langevin, the
Adam-driven Metropolis chain with prolate proposals, and plain optimizer
baselines (Adam, SGD, friction-leapfrog sgHMC).

Every step consumes a ChainState and returns (new_state, StepInfo).  Steps
are pure transformations given the caller-owned RNG inside the state, so
independent chains can run concurrently.  Proposal RNG draw order is fixed:
one standard-normal P-vector, one directional scalar only when sigma_dir > 0,
then one uniform for the accept test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import GibbsTarget, LossOracle
from .prolate import LOG_2PI, ProlateCovariance


@dataclass(frozen=True)
class AdamParams:
    """Learning rate, momentum decays and the denominator offset."""

    gamma: float = 1e-3
    beta1: float = 0.99
    beta2: float = 0.99
    delta: float = 1e-8

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1, beta2 must lie in [0, 1)")
        if not self.delta > 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class ProposalParams:
    """Isotropic and directional noise levels of the proposal."""

    sigma: float
    sigma_dir: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.sigma_dir < 0.0:
            raise ValueError(f"sigma_dir must be non-negative, got {self.sigma_dir}")


@dataclass(frozen=True)
class CorrectionParams:
    """Momentum-density correction of the acceptance ratio.

    mode "unit" sets the correction factor to 1 (the practical algorithm);
    mode "full" evaluates the momentum-density ratio with noise levels rho1,
    rho2.  The reference parameterization rho_l^2 = (1 - beta_l^2) * s^2 is
    available through full_from_s2.
    """

    mode: str = "unit"
    rho1: float = 0.0
    rho2: float = 0.0

    def __post_init__(self):
        if self.mode not in ("unit", "full"):
            raise ValueError(f"mode must be 'unit' or 'full', got {self.mode!r}")
        if self.mode == "full" and not (self.rho1 > 0.0 and self.rho2 > 0.0):
            raise ValueError("full mode needs positive rho1, rho2")

    @classmethod
    def unit(cls) -> "CorrectionParams":
        return cls(mode="unit")

    @classmethod
    def full_from_s2(cls, s_sq: float, ap: AdamParams) -> "CorrectionParams":
        if not s_sq > 0.0:
            raise ValueError(f"s_sq must be positive, got {s_sq}")
        return cls(
            mode="full",
            rho1=float(np.sqrt((1.0 - ap.beta1**2) * s_sq)),
            rho2=float(np.sqrt((1.0 - ap.beta2**2) * s_sq)),
        )

    def s_sq(self, which: int, ap: AdamParams) -> float:
        """Variance rho_l^2 / (1 - beta_l^2) of the momentum density, l in {1, 2}."""
        if which == 1:
            return self.rho1**2 / (1.0 - ap.beta1**2)
        if which == 2:
            return self.rho2**2 / (1.0 - ap.beta2**2)
        raise ValueError(f"which must be 1 or 2, got {which}")


@dataclass(frozen=True)
class Momenta:
    """First and second Adam moment vectors."""

    m1: np.ndarray
    m2: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "Momenta":
        return cls(np.zeros(dim), np.zeros(dim))


@dataclass
class ChainState:
    """One chain's position, momenta, step counter, caches and RNG."""

    theta: np.ndarray
    momenta: Momenta
    step: int
    cached_loss: float | None
    cached_grad: np.ndarray | None
    rng: np.random.Generator

    @classmethod
    def init(cls, theta0: np.ndarray, rng) -> "ChainState":
        theta0 = np.asarray(theta0, dtype=float)
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        return cls(theta0.copy(), Momenta.zeros(theta0.size), 0, None, None, rng)


@dataclass(frozen=True)
class StepInfo:
    """Per-step log payload: what happened and at what acceptance level."""

    accepted: bool
    alpha: float
    log_alpha: float
    loss: float
    u_norm: float
    proposal_in_prior: bool = True


def adam_momentum_update(m: Momenta, grad: np.ndarray, p: AdamParams) -> Momenta:
    """Exponential moving averages of the gradient and its elementwise square."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != m.m1.shape:
        raise ValueError("gradient and momenta dimensions differ")
    return Momenta(
        p.beta1 * m.m1 + (1.0 - p.beta1) * grad,
        p.beta2 * m.m2 + (1.0 - p.beta2) * grad * grad,
    )


def adam_update_vector(m: Momenta, k: int, p: AdamParams) -> np.ndarray:
    """Bias-corrected Adam step for chain step k (correction exponent k + 1).

    The second moment enters through its entrywise absolute value, so the
    formula stays defined for randomized momenta with negative entries.
    """
    t = k + 1
    m1_hat = m.m1 / (1.0 - p.beta1**t)
    m2_hat = np.abs(m.m2) / (1.0 - p.beta2**t)
    return p.gamma * m1_hat / (np.sqrt(m2_hat) + p.delta)


def log_correction(
    m_next: Momenta,
    grad_theta: np.ndarray,
    grad_tau: np.ndarray,
    cp: CorrectionParams,
    ap: AdamParams,
) -> float:
    """Log of the momentum-density acceptance correction.

    sum over l of (|m_l - g(theta)^l|^2 - |m_l - g(tau)^l|^2) / (2 s_l^2)
    with g^1 the gradient, g^2 its elementwise square, and
    s_l^2 = rho_l^2 / (1 - beta_l^2).  Zero in unit mode.
    """
    if cp.mode == "unit":
        return 0.0
    total = 0.0
    for which, m_l, power in ((1, m_next.m1, 1), (2, m_next.m2, 2)):
        s_sq = cp.s_sq(which, ap)
        d_tau = m_l - grad_tau**power
        d_theta = m_l - grad_theta**power
        total += (float(d_theta @ d_theta) - float(d_tau @ d_tau)) / (2.0 * s_sq)
    return total


def correction_term_C(
    m_next: Momenta,
    grad_theta: np.ndarray,
    grad_tau: np.ndarray,
    cp: CorrectionParams,
    ap: AdamParams,
) -> float:
    with np.errstate(over="ignore"):
        return float(np.exp(log_correction(m_next, grad_theta, grad_tau, cp, ap)))


def _finish_log_alpha(
    lam: float,
    loss_cur: float,
    loss_prop: float,
    in_cur: bool,
    in_prop: bool,
    log_fwd: float,
    log_bwd: float,
    log_c: float,
) -> float:
    """Assemble log acceptance in log space; never returns NaN.

    Proposals outside the prior box or with non-finite loss are hard rejects.
    A zero-density current state with an in-box proposal is always accepted
    (the only consistent escape); both densities zero rejects (0/0 = 0).
    """
    if not in_prop or not np.isfinite(loss_prop):
        return -np.inf
    if not in_cur:
        return 0.0
    delta = -lam * (loss_prop - loss_cur) + (log_bwd - log_fwd) + log_c
    if np.isnan(delta):
        return -np.inf
    return min(0.0, delta)


def _iso_log_density(mean: np.ndarray, sigma: float, x: np.ndarray) -> float:
    """Log pdf of N(mean, sigma^2 I); the plain-MALA proposal density."""
    diff = x - mean
    dim = diff.shape[0]
    return -0.5 * (dim * (LOG_2PI + 2.0 * np.log(sigma)) + float(diff @ diff) / sigma**2)


def _loss_grad_at(oracle: LossOracle, theta, batch, state: ChainState):
    """Loss and gradient at the current position, reusing full-batch caches."""
    if batch is None:
        loss = (
            state.cached_loss
            if state.cached_loss is not None
            else oracle.eval_batch(theta, None)
        )
        grad = (
            state.cached_grad
            if state.cached_grad is not None
            else oracle.grad_batch(theta, None)
        )
        return loss, grad
    return oracle.eval_batch(theta, batch), oracle.grad_batch(theta, batch)


def mala_step(
    state: ChainState,
    target: GibbsTarget,
    gamma: float,
    sigma: float,
    batch=None,
):
    """One Metropolis-adjusted Langevin step with isotropic noise.

    Proposes around the gradient-descent point theta - gamma * grad, accepts
    with the tempered loss ratio times the reverse/forward density ratio and
    the prior-box indicator.  Loss and gradient are evaluated at both the
    current point and the proposal.
    """
    oracle = target.oracle
    theta = state.theta
    loss_theta, grad_theta = _loss_grad_at(oracle, theta, batch, state)

    mean_fwd = theta - gamma * grad_theta
    z = state.rng.standard_normal(theta.size)
    tau = mean_fwd + sigma * z

    loss_tau = oracle.eval_batch(tau, batch)
    grad_tau = oracle.grad_batch(tau, batch)

    log_fwd = _iso_log_density(mean_fwd, sigma, tau)
    with np.errstate(invalid="ignore", over="ignore"):
        mean_bwd = tau - gamma * grad_tau
        log_bwd = _iso_log_density(mean_bwd, sigma, theta)

    in_theta = target.prior.contains(theta)
    in_tau = target.prior.contains(tau)
    log_alpha = _finish_log_alpha(
        target.lam, loss_theta, loss_tau, in_theta, in_tau, log_fwd, log_bwd, 0.0
    )
    u = state.rng.uniform()
    accepted = np.log(u) <= log_alpha

    if accepted:
        new_theta, new_loss, new_grad = tau, loss_tau, grad_tau
    else:
        new_theta, new_loss, new_grad = theta, loss_theta, grad_theta
    cache_ok = batch is None
    new_state = ChainState(
        new_theta,
        state.momenta,
        state.step + 1,
        new_loss if cache_ok else None,
        new_grad if cache_ok else None,
        state.rng,
    )
    info = StepInfo(
        accepted=bool(accepted),
        alpha=float(np.exp(log_alpha)),
        log_alpha=float(log_alpha),
        loss=float(new_loss),
        u_norm=float(np.linalg.norm(gamma * grad_theta)),
        proposal_in_prior=in_tau,
    )
    return new_state, info


def adammcmc_step(
    state: ChainState,
    target: GibbsTarget,
    ap: AdamParams,
    pp: ProposalParams,
    cp: CorrectionParams = CorrectionParams(),
    batch=None,
    drift: str = "adam",
):
    """One Metropolis step around an Adam update with a prolate proposal.

    drift "adam" (the full algorithm): momenta are refreshed from the current
    gradient, the update vector u centers the proposal at theta - u and
    stretches its covariance along u, and the backward density reuses the
    same u and covariance.  Momenta advance whether or not the proposal is
    accepted.

    drift "gradient" drops the momenta from the geometry: the offset and
    stretch direction are gamma * grad, recomputed at each density's own
    center, which reduces the step to Langevin sampling with directional
    noise (and to plain MALA when sigma_dir = 0).
    """
    if drift not in ("adam", "gradient"):
        raise ValueError(f"drift must be 'adam' or 'gradient', got {drift!r}")
    oracle = target.oracle
    theta = state.theta
    loss_theta, grad_theta = _loss_grad_at(oracle, theta, batch, state)

    m_next = adam_momentum_update(state.momenta, grad_theta, ap)
    if drift == "adam":
        u = adam_update_vector(m_next, state.step, ap)
    else:
        u = ap.gamma * grad_theta

    cov_fwd = ProlateCovariance(pp.sigma, pp.sigma_dir, u)
    mean_fwd = theta - u
    tau = cov_fwd.sample(mean_fwd, state.rng)
    log_fwd = cov_fwd.log_density(mean_fwd, tau)

    loss_tau = oracle.eval_batch(tau, batch)
    grad_tau = None
    log_c = 0.0
    with np.errstate(invalid="ignore", over="ignore"):
        if drift == "adam":
            log_bwd = cov_fwd.log_density(tau - u, theta)
            if cp.mode == "full":
                grad_tau = oracle.grad_batch(tau, batch)
                log_c = log_correction(m_next, grad_theta, grad_tau, cp, ap)
        else:
            grad_tau = oracle.grad_batch(tau, batch)
            u_bwd = ap.gamma * grad_tau
            cov_bwd = ProlateCovariance(pp.sigma, pp.sigma_dir, u_bwd)
            log_bwd = cov_bwd.log_density(tau - u_bwd, theta)

    in_theta = target.prior.contains(theta)
    in_tau = target.prior.contains(tau)
    log_alpha = _finish_log_alpha(
        target.lam, loss_theta, loss_tau, in_theta, in_tau, log_fwd, log_bwd, log_c
    )
    a = state.rng.uniform()
    accepted = np.log(a) <= log_alpha

    if accepted:
        new_theta, new_loss = tau, loss_tau
        new_grad = grad_tau  # may be None: recomputed lazily next step
    else:
        new_theta, new_loss, new_grad = theta, loss_theta, grad_theta
    cache_ok = batch is None
    new_state = ChainState(
        new_theta,
        m_next,
        state.step + 1,
        new_loss if cache_ok else None,
        new_grad if cache_ok else None,
        state.rng,
    )
    info = StepInfo(
        accepted=bool(accepted),
        alpha=float(np.exp(log_alpha)),
        log_alpha=float(log_alpha),
        loss=float(new_loss),
        u_norm=float(np.linalg.norm(u)),
        proposal_in_prior=in_tau,
    )
    return new_state, info


def adammcmc_log_alpha(
    target: GibbsTarget,
    theta: np.ndarray,
    tau: np.ndarray,
    m_next: Momenta,
    k: int,
    ap: AdamParams,
    pp: ProposalParams,
    cp: CorrectionParams,
) -> float:
    """Log acceptance for proposing tau from (theta, m_next) at step k.

    Full-batch evaluation of the same formula adammcmc_step uses; this is the
    hook the detailed-balance diagnostics drive in both directions.
    """
    theta = np.asarray(theta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    oracle = target.oracle
    u = adam_update_vector(m_next, k, ap)
    cov = ProlateCovariance(pp.sigma, pp.sigma_dir, u)
    log_fwd = cov.log_density(theta - u, tau)
    log_bwd = cov.log_density(tau - u, theta)
    loss_theta = oracle.eval(theta)
    loss_tau = oracle.eval(tau)
    log_c = 0.0
    if cp.mode == "full":
        log_c = log_correction(m_next, oracle.grad(theta), oracle.grad(tau), cp, ap)
    return _finish_log_alpha(
        target.lam,
        loss_theta,
        loss_tau,
        target.prior.contains(theta),
        target.prior.contains(tau),
        log_fwd,
        log_bwd,
        log_c,
    )


def adam_step(state: ChainState, oracle: LossOracle, ap: AdamParams, batch=None):
    """Deterministic Adam: theta - u with refreshed momenta.

    The logged loss is the value at the pre-update position, where the
    gradient was taken (the usual training-curve convention).
    """
    loss, grad = _loss_grad_at(oracle, state.theta, batch, state)
    m_next = adam_momentum_update(state.momenta, grad, ap)
    u = adam_update_vector(m_next, state.step, ap)
    new_theta = state.theta - u
    new_state = ChainState(new_theta, m_next, state.step + 1, None, None, state.rng)
    info = StepInfo(True, 1.0, 0.0, float(loss), float(np.linalg.norm(u)))
    return new_state, info


def sgd_step(state: ChainState, oracle: LossOracle, gamma: float, batch=None):
    """Plain gradient descent: theta - gamma * grad."""
    loss, grad = _loss_grad_at(oracle, state.theta, batch, state)
    step_vec = gamma * grad
    new_theta = state.theta - step_vec
    new_state = ChainState(
        new_theta, state.momenta, state.step + 1, None, None, state.rng
    )
    info = StepInfo(True, 1.0, 0.0, float(loss), float(np.linalg.norm(step_vec)))
    return new_state, info


@dataclass(frozen=True)
class SghmcParams:
    """Friction-leapfrog baseline knobs."""

    gamma: float = 1e-3
    friction: float = 0.05
    noise_scale: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError("gamma must be positive")
        if not 0.0 <= self.friction <= 1.0:
            raise ValueError("friction must lie in [0, 1]")
        if self.noise_scale < 0.0:
            raise ValueError("noise_scale must be non-negative")


def sghmc_step(state: ChainState, oracle: LossOracle, sp: SghmcParams, batch=None):
    """One friction-leapfrog update with injected noise.

    The auxiliary velocity lives in the first momentum slot of the state:
    v' = (1 - friction) v - gamma * grad + noise_scale * sqrt(2 friction gamma) * zeta,
    theta' = theta + v'.
    """
    loss, grad = _loss_grad_at(oracle, state.theta, batch, state)
    v = state.momenta.m1
    zeta = state.rng.standard_normal(v.size)
    noise = sp.noise_scale * np.sqrt(2.0 * sp.friction * sp.gamma) * zeta
    v_next = (1.0 - sp.friction) * v - sp.gamma * grad + noise
    new_theta = state.theta + v_next
    new_state = ChainState(
        new_theta,
        Momenta(v_next, state.momenta.m2),
        state.step + 1,
        None,
        None,
        state.rng,
    )
    info = StepInfo(True, 1.0, 0.0, float(loss), float(np.linalg.norm(v_next)))
    return new_state, info
