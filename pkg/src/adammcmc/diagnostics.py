"""Verification instruments: gridded target densities and TV distance,
a detailed-balance checker driven against dense linear algebra, acceptance
scans over hyperparameter grids, and the full-vs-stochastic accept-test
comparison."""

from __future__ import annotations

import copy
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .chain import ChainSchedule, run_chain
from .config import RunConfig
from .experiments import (
    build_experiment,
    ensemble_test_accuracy,
    initial_state,
    make_step_fn,
    run_experiment,
)
from .losses import BatchStream, GibbsTarget
from .samplers import (
    AdamParams,
    CorrectionParams,
    Momenta,
    ProposalParams,
    adam_update_vector,
    adammcmc_log_alpha,
)

# ---------------------------------------------------------------------------
# Gridded densities and total variation distance
# ---------------------------------------------------------------------------


@dataclass
class GridDensity:
    """Normalized cell masses of a density on a regular 1D or 2D grid."""

    edges: tuple[np.ndarray, ...]
    log_mass: np.ndarray

    def __post_init__(self):
        if len(self.edges) not in (1, 2):
            raise ValueError("grids support 1 or 2 dimensions only")

    @classmethod
    def from_target(cls, target: GibbsTarget, bounds, resolution) -> "GridDensity":
        """Evaluate exp(-lam * L) at cell centers and normalize via
        log-sum-exp; bounds is a (lo, hi) pair per dimension."""
        bounds = [tuple(b) for b in bounds]
        dims = len(bounds)
        if dims not in (1, 2):
            raise ValueError("grids support 1 or 2 dimensions only")
        if np.isscalar(resolution):
            resolution = [int(resolution)] * dims
        edges = tuple(
            np.linspace(lo, hi, res + 1) for (lo, hi), res in zip(bounds, resolution)
        )
        centers = [0.5 * (e[:-1] + e[1:]) for e in edges]
        if dims == 1:
            logs = np.array(
                [target.log_unnorm(np.array([c])) for c in centers[0]]
            )
        else:
            logs = np.array(
                [
                    [
                        target.log_unnorm(np.array([cx, cy]))
                        for cy in centers[1]
                    ]
                    for cx in centers[0]
                ]
            )
        log_mass = logs - logsumexp(logs)
        return cls(edges=edges, log_mass=log_mass)

    @property
    def masses(self) -> np.ndarray:
        return np.exp(self.log_mass)

    def histogram_masses(self, samples: np.ndarray) -> np.ndarray:
        """Empirical cell masses of samples on this grid, normalized by the
        total sample count (out-of-range samples lose their mass)."""
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.shape[1] != len(self.edges):
            raise ValueError("sample dimension does not match the grid")
        counts, _ = np.histogramdd(samples, bins=self.edges)
        return counts / samples.shape[0]


def tv_distance(empirical: np.ndarray, target: GridDensity) -> float:
    """Half the L1 distance between empirical cell masses and the target."""
    empirical = np.asarray(empirical, dtype=float)
    if empirical.shape != target.log_mass.shape:
        raise ValueError(
            f"grid mismatch: empirical {empirical.shape} vs target {target.log_mass.shape}"
        )
    return 0.5 * float(np.abs(empirical - target.masses).sum())


def tv_to_target(samples: np.ndarray, target: GridDensity, min_samples: int = 1000) -> float:
    """Bin samples on the target's grid and return the TV distance."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if n < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {n}")
    return tv_distance(target.histogram_masses(samples), target)


def truncated_gaussian_variance(lam: float, half_width: float) -> float:
    """Per-coordinate variance of exp(-lam x^2 / 2) on [-R, R], by quadrature."""

    def density(x):
        return np.exp(-0.5 * lam * x * x)

    z, _ = integrate.quad(density, -half_width, half_width)
    second, _ = integrate.quad(lambda x: x * x * density(x), -half_width, half_width)
    return second / z


def grid_moments(grid: GridDensity):
    """Mean and per-coordinate variance of a gridded density (cell centers)."""
    masses = grid.masses
    centers = [0.5 * (e[:-1] + e[1:]) for e in grid.edges]
    if len(centers) == 1:
        mean = float(np.sum(masses * centers[0]))
        var = float(np.sum(masses * (centers[0] - mean) ** 2))
        return np.array([mean]), np.array([var])
    cx, cy = np.meshgrid(centers[0], centers[1], indexing="ij")
    mean = np.array([float(np.sum(masses * cx)), float(np.sum(masses * cy))])
    var = np.array(
        [
            float(np.sum(masses * (cx - mean[0]) ** 2)),
            float(np.sum(masses * (cy - mean[1]) ** 2)),
        ]
    )
    return mean, var


def tv_trace(samples: np.ndarray, target: GridDensity, checkpoints) -> list[tuple[int, float]]:
    """TV distance of the empirical distribution up to each checkpoint step."""
    samples = np.asarray(samples, dtype=float)
    rows = []
    for k in checkpoints:
        rows.append((int(k), tv_to_target(samples[: int(k)], target, min_samples=2)))
    return rows


def tv_trace_to_csv(rows, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "tv"])
        for step, tv in rows:
            writer.writerow([step, repr(float(tv))])


# ---------------------------------------------------------------------------
# Detailed balance
# ---------------------------------------------------------------------------


def _dense_gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Dense multivariate normal log pdf via slogdet and solve (oracle path)."""
    diff = x - mean
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise ValueError("covariance is not positive definite")
    quad = float(diff @ np.linalg.solve(cov, diff))
    return -0.5 * (diff.size * np.log(2.0 * np.pi) + logdet + quad)


def _iso_gaussian_logpdf(x: np.ndarray, mean: np.ndarray, var: float) -> float:
    diff = x - mean
    return -0.5 * (
        diff.size * np.log(2.0 * np.pi * var) + float(diff @ diff) / var
    )


def _log_invariant_density(
    target: GibbsTarget,
    theta: np.ndarray,
    m: Momenta,
    ap: AdamParams,
    cp: CorrectionParams,
) -> float:
    """Stationary density of the augmented (theta, momenta) chain:
    tempered target times Gaussian momentum factors centered at the gradient
    and its square, with variances s_l^2 = rho_l^2 / (1 - beta_l^2)."""
    grad = target.oracle.grad(theta)
    value = target.log_unnorm(theta)
    value += _iso_gaussian_logpdf(m.m1, grad, cp.s_sq(1, ap))
    value += _iso_gaussian_logpdf(m.m2, grad**2, cp.s_sq(2, ap))
    return value


def detailed_balance_violations(
    target: GibbsTarget,
    ap: AdamParams,
    pp: ProposalParams,
    cp: CorrectionParams,
    n_trials: int,
    rng: np.random.Generator,
    k: int = 5,
    point_scale: float = 1.5,
    density_cp: CorrectionParams | None = None,
) -> np.ndarray:
    """Relative gap of alpha * q1 * f between both transition directions.

    The acceptance alpha comes from the samplers' O(P) log-acceptance path,
    while q1 and f are evaluated with dense linear algebra, so a bug in the
    rank-one determinant/inverse shows up instead of cancelling.  density_cp
    pins the momentum variances of the invariant density f (and of the trial
    draws) independently of the acceptance mode, which makes unit-vs-full
    comparisons on identical trials possible; it defaults to cp in full mode.
    """
    if density_cp is not None:
        cp_density = density_cp
    elif cp.mode == "full":
        cp_density = cp
    else:
        cp_density = CorrectionParams.full_from_s2(1e-4, ap)  # f needs variances
    dim = target.dim
    out = np.empty(n_trials)
    for trial in range(n_trials):
        theta = point_scale * rng.standard_normal(dim)
        tau = point_scale * rng.standard_normal(dim)
        grad = target.oracle.grad(theta)
        m_tilde = Momenta(
            grad + np.sqrt(cp_density.s_sq(1, ap)) * rng.standard_normal(dim),
            grad**2 + np.sqrt(cp_density.s_sq(2, ap)) * rng.standard_normal(dim),
        )
        u = adam_update_vector(m_tilde, k, ap)
        cov = pp.sigma**2 * np.eye(dim) + pp.sigma_dir**2 * np.outer(u, u)

        log_alpha_fwd = adammcmc_log_alpha(target, theta, tau, m_tilde, k, ap, pp, cp)
        log_alpha_bwd = adammcmc_log_alpha(target, tau, theta, m_tilde, k, ap, pp, cp)
        log_q_fwd = _dense_gaussian_logpdf(tau, theta - u, cov)
        log_q_bwd = _dense_gaussian_logpdf(theta, tau - u, cov)
        log_f_theta = _log_invariant_density(target, theta, m_tilde, ap, cp_density)
        log_f_tau = _log_invariant_density(target, tau, m_tilde, ap, cp_density)

        lhs = log_alpha_fwd + log_q_fwd + log_f_theta
        rhs = log_alpha_bwd + log_q_bwd + log_f_tau
        with np.errstate(over="ignore"):  # gross violations may overflow expm1
            out[trial] = abs(np.expm1(lhs - rhs))
    return out


def check_detailed_balance(
    target: GibbsTarget,
    ap: AdamParams,
    pp: ProposalParams,
    cp: CorrectionParams,
    n_trials: int,
    rng: np.random.Generator,
    k: int = 5,
) -> float:
    """Maximum relative detailed-balance violation over random triples."""
    return float(
        detailed_balance_violations(target, ap, pp, cp, n_trials, rng, k).max()
    )


# ---------------------------------------------------------------------------
# Acceptance scans
# ---------------------------------------------------------------------------

SCAN_PARAMS = ("sigma", "sigma_dir", "beta", "lambda")


@dataclass
class ScanRow:
    param: str
    value: float
    seed: int
    mean_acceptance: float
    metric: float
    metric_name: str


def apply_scan_value(config: RunConfig, param: str, value: float) -> RunConfig:
    """Override one scanned hyperparameter; 'beta' sets both momenta decays."""
    if param == "sigma":
        return config.replace(sigma=float(value))
    if param == "sigma_dir":
        return config.replace(sigma_dir=float(value))
    if param == "beta":
        return config.replace(beta1=float(value), beta2=float(value))
    if param == "lambda":
        return config.replace(lam=float(value))
    raise ValueError(f"unknown scan parameter {param!r}; choose from {SCAN_PARAMS}")


def _scan_metric(result) -> tuple[float, str]:
    cfg = result.experiment.config
    if cfg.target == "mlp":
        return ensemble_test_accuracy(result), "test_accuracy"
    if cfg.target in ("quadratic", "noisy_quadratic"):
        # center shifts leave the per-coordinate truncated variance unchanged
        truth = truncated_gaussian_variance(cfg.lam, cfg.prior_half_width)
        sample_var = result.summary.samples.var(axis=0, ddof=1)
        return float(np.abs(sample_var - truth).mean()), "variance_error"
    if cfg.target == "banana" and cfg.dim == 2:
        grid = GridDensity.from_target(
            result.experiment.target, bounds=[(-3.0, 4.0), (-2.0, 12.0)], resolution=160
        )
        _, grid_var = grid_moments(grid)
        sample_var = result.summary.samples.var(axis=0, ddof=1)
        return float(np.abs(sample_var - grid_var).mean()), "variance_error"
    return float("nan"), "none"


def _scan_one(args) -> ScanRow:
    config_json, param, value, seed = args
    config = RunConfig.from_json(config_json)
    config = apply_scan_value(config, param, value).replace(seed=seed)
    result = run_experiment(config)
    metric, metric_name = _scan_metric(result)
    return ScanRow(
        param=param,
        value=float(value),
        seed=seed,
        mean_acceptance=result.record.acceptance_rate,
        metric=metric,
        metric_name=metric_name,
    )


def scan_acceptance(
    config: RunConfig,
    param: str,
    grid,
    n_replicates: int = 3,
    jobs: int = 1,
) -> list[ScanRow]:
    """One desk-scale chain per (grid value, seed): mean acceptance plus a
    quality metric.  Seeds are the config seed and n_replicates follow-ups."""
    grid = list(grid)
    if not grid:
        raise ValueError("scan grid must be non-empty")
    if param not in SCAN_PARAMS:
        raise ValueError(f"unknown scan parameter {param!r}; choose from {SCAN_PARAMS}")
    seeds = [config.seed + r for r in range(1 + n_replicates)]
    tasks = [
        (config.to_json(), param, value, seed) for value in grid for seed in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_scan_one, tasks))
    else:
        rows = [_scan_one(task) for task in tasks]
    return rows


def scan_rows_to_csv(rows: list[ScanRow], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "value", "seed", "mean_acceptance", "metric", "metric_name"])
        for row in rows:
            writer.writerow(
                [
                    row.param,
                    repr(row.value),
                    row.seed,
                    repr(row.mean_acceptance),
                    repr(row.metric),
                    row.metric_name,
                ]
            )


def scan_rows_to_long_csv(rows: list[ScanRow], path) -> None:
    """Plot-ready long format: one (param, value, seed, quantity, value) row
    per recorded quantity."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "value", "seed", "quantity", "quantity_value"])
        for row in rows:
            writer.writerow(
                [row.param, repr(row.value), row.seed, "mean_acceptance", repr(row.mean_acceptance)]
            )
            writer.writerow(
                [row.param, repr(row.value), row.seed, row.metric_name, repr(row.metric)]
            )


# ---------------------------------------------------------------------------
# Full vs stochastic accept test
# ---------------------------------------------------------------------------


@dataclass
class MhComparison:
    full_record: object
    stochastic_record: object
    full_acceptance: float
    stochastic_acceptance: float
    full_loss_mean: float
    stochastic_loss_mean: float
    full_loss_var: float
    stochastic_loss_var: float

    def summary_dict(self) -> dict:
        return {
            "full_acceptance": self.full_acceptance,
            "stochastic_acceptance": self.stochastic_acceptance,
            "full_loss_mean": self.full_loss_mean,
            "stochastic_loss_mean": self.stochastic_loss_mean,
            "full_loss_var": self.full_loss_var,
            "stochastic_loss_var": self.stochastic_loss_var,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary_dict(), indent=2, sort_keys=True) + "\n"


def compare_full_vs_stochastic_mh(config: RunConfig, batch_size: int | None = None) -> MhComparison:
    """Run matched chains with the full accept test and the batch-based one.

    The stochastic chain burns in first; both variants then start from its
    end state with identical fresh RNG streams, so the comparison happens in
    the same region of parameter space (cold-started pairs drift into
    different basins and the acceptance comparison becomes meaningless).
    Mean acceptance and the loss mean/variance over the comparison phase are
    reported for each.
    """
    if batch_size is None:
        batch_size = config.batch_size
    if batch_size <= 0:
        raise ValueError("comparison needs a positive minibatch size")

    stoch_cfg = config.replace(batch_size=batch_size)
    experiment = build_experiment(stoch_cfg)
    n_points = experiment.target.oracle.n_points
    chain_seq, batch_seq, init_seq = np.random.SeedSequence(config.seed).spawn(3)
    warm_state = initial_state(
        experiment, np.random.default_rng(init_seq), np.random.default_rng(chain_seq)
    )
    if config.burn_in > 0:
        warm_batches = BatchStream(n_points, batch_size, np.random.default_rng(batch_seq))
        warm_fn = make_step_fn(experiment, warm_batches)
        warm_schedule = ChainSchedule(config.burn_in, 0, 1, 1)
        for _ in range(config.burn_in):
            warm_state, _ = warm_fn(warm_state)

    compare_steps = config.steps - config.burn_in
    schedule = ChainSchedule(compare_steps, 0, max(1, compare_steps // 2), 1)
    results = {}
    for label, bsize in (("full", 0), ("stochastic", batch_size)):
        cmp_seq = np.random.SeedSequence(config.seed + 1).spawn(2)
        state = copy.deepcopy(warm_state)
        state.rng = np.random.default_rng(cmp_seq[0])
        exp_variant = build_experiment(config.replace(batch_size=bsize))
        batches = BatchStream(n_points, bsize, np.random.default_rng(cmp_seq[1]))
        step_fn = make_step_fn(exp_variant, batches)
        results[label] = run_chain(step_fn, state, schedule)

    full_record = results["full"][1]
    stoch_record = results["stochastic"][1]
    return MhComparison(
        full_record=full_record,
        stochastic_record=stoch_record,
        full_acceptance=full_record.acceptance_rate,
        stochastic_acceptance=stoch_record.acceptance_rate,
        full_loss_mean=float(full_record.loss.mean()),
        stochastic_loss_mean=float(stoch_record.loss.mean()),
        full_loss_var=float(full_record.loss.var(ddof=1)),
        stochastic_loss_var=float(stoch_record.loss.var(ddof=1)),
    )
