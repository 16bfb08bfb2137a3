"""Schedules, sample retention, records and ensemble quantile spread."""

import numpy as np
import pytest

from adammcmc.chain import (
    ChainRecord,
    ChainSchedule,
    EnsembleSummary,
    ensemble_predict,
    load_samples_csv,
    run_chain,
    save_samples_csv,
)
from adammcmc.mlp import MicroMlp
from adammcmc.samplers import ChainState, StepInfo


def make_stub_step(thetas=None, accept=True):
    """Step function stub: walks through given thetas (or stays put)."""

    def step(state):
        k = state.step  # 0-based before the step; the step lands on k + 1
        if thetas is not None:
            theta = np.asarray(thetas[min(k + 1, len(thetas) - 1)], dtype=float)
        else:
            theta = state.theta
        new = ChainState(theta, state.momenta, k + 1, None, None, state.rng)
        info = StepInfo(accept, 1.0, 0.0, float(k), 0.0)
        return new, info

    return step


class TestSchedule:
    def test_sample_indices(self):
        sched = ChainSchedule(total_steps=100, burn_in=20, gap=10, n_samples=8)
        assert sched.sample_steps == [30, 40, 50, 60, 70, 80, 90, 100]

    def test_overfull_schedule_rejected(self):
        # b + N*c = 98 > 97: the last sample index overruns the budget
        with pytest.raises(ValueError):
            ChainSchedule(total_steps=97, burn_in=48, gap=5, n_samples=10)

    def test_exact_fit_allowed(self):
        sched = ChainSchedule(total_steps=98, burn_in=48, gap=5, n_samples=10)
        assert sched.sample_steps[-1] == 98

    def test_zero_burn_in_full_trajectory(self):
        sched = ChainSchedule(total_steps=5, burn_in=0, gap=1, n_samples=5)
        assert sched.sample_steps == [1, 2, 3, 4, 5]

    def test_invalid_fields(self):
        with pytest.raises(ValueError):
            ChainSchedule(10, -1, 1, 1)
        with pytest.raises(ValueError):
            ChainSchedule(10, 0, 0, 1)
        with pytest.raises(ValueError):
            ChainSchedule(10, 0, 1, 0)


class TestRunChain:
    def test_full_trajectory_retention(self):
        # burn_in=0, gap=1, N=total with an always-accept stub
        path = [np.array([float(i), -float(i)]) for i in range(11)]
        sched = ChainSchedule(10, 0, 1, 10)
        state0 = ChainState.init(path[0], 0)
        summary, record = run_chain(make_stub_step(path), state0, sched)
        assert summary.n_samples == 10
        for i, step in enumerate(range(1, 11)):
            np.testing.assert_array_equal(summary.samples[i], path[step])
        assert record.acceptance_rate == 1.0

    def test_constant_sampler_zero_spread(self):
        theta_star = np.array([1.0, 2.0, 3.0])
        sched = ChainSchedule(50, 10, 5, 8)
        state0 = ChainState.init(theta_star, 0)
        summary, _ = run_chain(make_stub_step(), state0, sched)
        assert np.all(summary.samples == theta_star)
        assert np.ptp(summary.samples, axis=0).max() == 0.0

    def test_acceptance_rate_in_unit_interval(self):
        sched = ChainSchedule(20, 0, 1, 20)
        state0 = ChainState.init(np.zeros(2), 0)
        _, record = run_chain(make_stub_step(accept=False), state0, sched)
        assert record.acceptance_rate == 0.0
        assert 0.0 <= record.acceptance_rate <= 1.0

    def test_record_lengths_match_budget(self):
        sched = ChainSchedule(33, 3, 10, 3)
        state0 = ChainState.init(np.zeros(1), 0)
        _, record = run_chain(make_stub_step(), state0, sched)
        assert record.step.size == 33
        assert record.step[0] == 1 and record.step[-1] == 33


class TestRecordCsv:
    def test_roundtrip(self, tmp_path):
        record = ChainRecord(
            step=np.array([1, 2, 3]),
            loss=np.array([0.5, 0.25, 1.0 / 3.0]),
            log_alpha=np.array([0.0, -np.inf, -1.2345678901234e-5]),
            accepted=np.array([True, False, True]),
            theta_norm=np.array([1.0, 1.0, 2.0]),
            u_norm=np.array([0.1, 0.2, 0.3]),
        )
        path = tmp_path / "record.csv"
        record.to_csv(path)
        back = ChainRecord.from_csv(path)
        np.testing.assert_array_equal(back.step, record.step)
        np.testing.assert_array_equal(back.loss, record.loss)
        np.testing.assert_array_equal(back.log_alpha, record.log_alpha)
        np.testing.assert_array_equal(back.accepted, record.accepted)

    def test_fixed_header(self, tmp_path):
        record = ChainRecord(
            step=np.array([1]),
            loss=np.array([0.0]),
            log_alpha=np.array([0.0]),
            accepted=np.array([True]),
            theta_norm=np.array([0.0]),
            u_norm=np.array([0.0]),
        )
        path = tmp_path / "r.csv"
        record.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "step,loss,log_alpha,accepted,theta_norm,u_norm"


class TestEnsemblePredict:
    def test_identical_samples_zero_spread(self):
        net = MicroMlp((2, 4, 2))
        theta = net.init_params(np.random.default_rng(0))
        samples = np.tile(theta, (6, 1))
        x = np.random.default_rng(1).standard_normal((10, 2))
        mean_probs, spread = ensemble_predict(samples, net, x)
        np.testing.assert_allclose(spread, 0.0, atol=1e-15)
        np.testing.assert_allclose(mean_probs.sum(axis=1), 1.0, atol=1e-12)

    def test_hand_quantile_arithmetic(self):
        # class-1 probs {0.1, 0.2, 0.3, 0.4}: mean 0.25, q75 - q25 = 0.15

        class FixedNet:
            def forward(self, theta, inputs):
                p = float(theta[0])
                return np.array([[1.0 - p, p]])

        samples = np.array([[0.1], [0.2], [0.3], [0.4]])
        mean_probs, spread = ensemble_predict(samples, FixedNet(), np.zeros((1, 2)))
        assert mean_probs[0, 1] == pytest.approx(0.25, rel=1e-15)
        assert spread[0] == pytest.approx(0.15, rel=1e-12)

    def test_single_sample_spread_flagged(self):
        net = MicroMlp((2, 4, 2))
        theta = net.init_params(np.random.default_rng(2))
        mean_probs, spread = ensemble_predict(theta[None, :], net, np.zeros((3, 2)))
        assert spread is None
        assert mean_probs.shape == (3, 2)

    def test_mean_equals_member_average(self):
        net = MicroMlp((2, 4, 2))
        rng = np.random.default_rng(5)
        samples = np.stack([net.init_params(rng) for _ in range(5)])
        x = rng.standard_normal((7, 2))
        mean_probs, _ = ensemble_predict(samples, net, x)
        manual = np.mean([net.forward(t, x) for t in samples], axis=0)
        np.testing.assert_allclose(mean_probs, manual, atol=1e-12)


class TestSamplesCsv:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        samples = rng.standard_normal((4, 6))
        path = tmp_path / "samples.csv"
        save_samples_csv(path, samples)
        np.testing.assert_array_equal(load_samples_csv(path), samples)
