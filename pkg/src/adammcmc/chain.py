"""Chain orchestration: burn-in, thinning, sample retention, per-step records
and ensemble prediction with quantile spread."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .mlp import MicroMlp
from .samplers import ChainState, StepInfo


@dataclass(frozen=True)
class ChainSchedule:
    """Total step budget plus burn-in b, gap c and sample count N.

    Samples are retained at steps b + i*c for i = 1..N, so the budget must
    satisfy b + N*c <= total_steps.
    """

    total_steps: int
    burn_in: int
    gap: int
    n_samples: int

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.gap < 1:
            raise ValueError(f"gap must be >= 1, got {self.gap}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.burn_in + self.n_samples * self.gap > self.total_steps:
            raise ValueError(
                f"schedule does not fit: burn_in + n_samples * gap = "
                f"{self.burn_in + self.n_samples * self.gap} > total_steps = "
                f"{self.total_steps}"
            )

    @property
    def sample_steps(self) -> list[int]:
        return [self.burn_in + i * self.gap for i in range(1, self.n_samples + 1)]


CSV_COLUMNS = ("step", "loss", "log_alpha", "accepted", "theta_norm", "u_norm")


@dataclass
class ChainRecord:
    """Per-step log of a chain run.

    The CSV serialization has the fixed columns (step, loss, log_alpha,
    accepted, theta_norm, u_norm); wall-clock timings stay in memory only so
    records are byte-stable across reruns.
    """

    step: np.ndarray
    loss: np.ndarray
    log_alpha: np.ndarray
    accepted: np.ndarray
    theta_norm: np.ndarray
    u_norm: np.ndarray
    step_seconds: np.ndarray | None = None
    n_boundary_rejects: int = 0

    @property
    def acceptance_rate(self) -> float:
        if self.accepted.size == 0:
            return 0.0
        return float(self.accepted.mean())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for i in range(self.step.size):
                writer.writerow(
                    [
                        int(self.step[i]),
                        repr(float(self.loss[i])),
                        repr(float(self.log_alpha[i])),
                        int(self.accepted[i]),
                        repr(float(self.theta_norm[i])),
                        repr(float(self.u_norm[i])),
                    ]
                )

    @classmethod
    def from_csv(cls, path) -> "ChainRecord":
        cols = {name: [] for name in CSV_COLUMNS}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != CSV_COLUMNS:
                raise ValueError(f"unexpected record header: {header}")
            for row in reader:
                for name, value in zip(CSV_COLUMNS, row):
                    cols[name].append(value)
        return cls(
            step=np.array(cols["step"], dtype=int),
            loss=np.array(cols["loss"], dtype=float),
            log_alpha=np.array(cols["log_alpha"], dtype=float),
            accepted=np.array(cols["accepted"], dtype=int).astype(bool),
            theta_norm=np.array(cols["theta_norm"], dtype=float),
            u_norm=np.array(cols["u_norm"], dtype=float),
        )


@dataclass
class EnsembleSummary:
    """Thinned parameter samples plus optional prediction statistics."""

    samples: np.ndarray  # (N, P)
    sample_steps: list[int]
    mean_probs: np.ndarray | None = None  # (n_inputs, n_classes)
    spread: np.ndarray | None = None  # (n_inputs,), q75 - q25 of class-1 prob

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


def run_chain(step_fn, state0: ChainState, schedule: ChainSchedule):
    """Drive a step function for total_steps steps, retaining thinned samples.

    step_fn maps ChainState -> (ChainState, StepInfo).  Returns
    (EnsembleSummary, ChainRecord); oracle hard errors propagate, soft
    numerical rejects are already folded into the infos by the samplers.
    """
    n = schedule.total_steps
    record = ChainRecord(
        step=np.arange(1, n + 1),
        loss=np.empty(n),
        log_alpha=np.empty(n),
        accepted=np.zeros(n, dtype=bool),
        theta_norm=np.empty(n),
        u_norm=np.empty(n),
        step_seconds=np.empty(n),
    )
    wanted = set(schedule.sample_steps)
    samples = np.empty((schedule.n_samples, state0.theta.size))
    state = state0
    kept = 0
    boundary = 0
    for k in range(1, n + 1):
        t0 = time.perf_counter()
        state, info = step_fn(state)
        record.step_seconds[k - 1] = time.perf_counter() - t0
        i = k - 1
        record.loss[i] = info.loss
        record.log_alpha[i] = info.log_alpha
        record.accepted[i] = info.accepted
        record.theta_norm[i] = np.linalg.norm(state.theta)
        record.u_norm[i] = info.u_norm
        if not info.proposal_in_prior:
            boundary += 1
        if k in wanted:
            samples[kept] = state.theta
            kept += 1
    record.n_boundary_rejects = boundary
    summary = EnsembleSummary(samples=samples, sample_steps=schedule.sample_steps)
    return summary, record


def ensemble_predict(samples: np.ndarray, net: MicroMlp, inputs: np.ndarray):
    """Posterior-mean class probabilities and per-input quantile spread.

    Returns (mean_probs, spread): mean_probs is the arithmetic mean of the
    member probability rows; spread is the 75%-25% interquartile distance of
    the class-1 probability across ensemble members (linear-interpolation
    quantiles).  With fewer than two samples the spread is undefined and
    returned as None.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    member_probs = np.stack([net.forward(theta, inputs) for theta in samples])
    mean_probs = member_probs.mean(axis=0)
    if samples.shape[0] < 2:
        return mean_probs, None
    class1 = member_probs[:, :, 1]
    q75, q25 = np.percentile(class1, [75.0, 25.0], axis=0)
    return mean_probs, q75 - q25


def summarize_ensemble(summary: EnsembleSummary, net: MicroMlp, inputs: np.ndarray) -> EnsembleSummary:
    """Fill the prediction fields of a summary in place and return it."""
    mean_probs, spread = ensemble_predict(summary.samples, net, inputs)
    summary.mean_probs = mean_probs
    summary.spread = spread
    return summary


def save_samples_csv(path, samples: np.ndarray) -> None:
    """One row of P full-precision floats per retained sample."""
    samples = np.atleast_2d(samples)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in samples:
            writer.writerow([repr(float(v)) for v in row])


def load_samples_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)])
