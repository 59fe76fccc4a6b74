from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbqc.link import (
    BELL_STATE, RspTarget, Timeout, herald_timestamp, init_with_retry, prepare,
    round_latency, rsp_round, sample_attempts, steer, steered_branches,
)
from vbqc.noise import FidelityBudget, LinkConfig, NoiseModel, TimingModel
from vbqc.polarisation import DetectorPovm
from vbqc.protocol import COMPUTATION, Client, client_plan_round
from vbqc.qcore import QuantumState, equatorial_ket, fidelity

IDEAL = NoiseModel.ideal()


def ket_state(k):
    return QuantumState.from_ket(k)


class TestTarget:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            RspTarget("x", 0)

    def test_values_wrap(self):
        assert RspTarget.theta(11).value == 3
        assert RspTarget.z(3).value == 1


class TestSteering:
    def test_p_herald_plus(self, rng):
        for _ in range(20):
            res = rsp_round(RspTarget.theta(0), IDEAL, rng)
            expect = equatorial_ket(np.pi * res.c)
            assert fidelity(res.state, ket_state(expect)) == pytest.approx(1.0, abs=1e-12)

    def test_s_herald_flips_by_pi(self):
        br = steered_branches(RspTarget.theta(0), DetectorPovm())
        s = QuantumState(br["s"] / np.trace(br["s"]))
        assert fidelity(s, ket_state(equatorial_ket(np.pi))) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("target", [RspTarget.theta(k) for k in range(8)] + [RspTarget.z(0), RspTarget.z(1)])
    def test_state_depends_only_on_client_data(self, target):
        # joint-state projection equals the state built from (target, c)
        br = steered_branches(target, DetectorPovm())
        for c, det in enumerate(("p", "s")):
            w = np.real(np.trace(br[det]))
            assert w == pytest.approx(0.5, abs=1e-12)
            np.testing.assert_allclose(br[det] / w, ket_state(target.ion_ket(c)).matrix, atol=1e-9)

    @pytest.mark.parametrize("k", range(8))
    def test_equal_delays_give_orthogonal_branches(self, k):
        br = steered_branches(RspTarget.theta(k), DetectorPovm())
        p = QuantumState(br["p"] * 2)
        s = QuantumState(br["s"] * 2)
        assert fidelity(p, s) < 1e-9

    def test_lossy_detectors_still_herald_evenly(self, rng):
        povm = DetectorPovm(eta_s=0.4, eta_p=0.4)
        counts = [steer(RspTarget.theta(3), povm, rng)[0] for _ in range(4000)]
        assert abs(np.mean(counts) - 0.5) < 4 * np.sqrt(0.25 / 4000)

    def test_bell_pair_photon_first(self):
        np.testing.assert_allclose(np.diag(BELL_STATE.matrix).real, [0, 0.5, 0.5, 0])

    def _mean_fidelity(self, noise, targets, rng, n=400):
        fids = []
        for t in targets:
            for _ in range(n):
                res = rsp_round(t, noise, rng)
                fids.append(fidelity(res.state, ket_state(t.ion_ket(res.c))))
        return float(np.mean(fids))

    def test_calibrated_equatorial_fidelity(self, rng):
        noise = NoiseModel(timing_calibrated=True)
        f = self._mean_fidelity(noise, [RspTarget.theta(k) for k in range(8)], rng, 50)
        assert f == pytest.approx(0.973, abs=1e-9)

    def test_mismatched_timing_equatorial_fidelity(self, rng):
        f = self._mean_fidelity(NoiseModel(), [RspTarget.theta(k) for k in range(8)], rng)
        assert f == pytest.approx(0.924, abs=0.005)

    def test_z_target_fidelity(self, rng):
        f = self._mean_fidelity(NoiseModel(), [RspTarget.z(0), RspTarget.z(1)], rng, 50)
        assert f == pytest.approx(0.996, abs=1e-9)


class TestAttempts:
    def test_geometric_mean(self, rng):
        cfg = LinkConfig(p_herald_per_attempt=0.05)
        draws = np.array([sample_attempts(cfg, 1.0, rng) for _ in range(20_000)])
        sigma = np.sqrt((1 - 0.05) / 0.05**2 / len(draws))
        assert abs(draws.mean() - 20.0) < 3 * sigma
        assert draws.min() >= 1

    def test_timeout_rate_at_defaults(self, rng):
        cfg = LinkConfig()
        draws = rng.geometric(cfg.p_herald_per_attempt, size=100_000)
        assert np.mean(draws > cfg.timeout_attempts) < 2e-4
        assert (1 - cfg.p_herald_per_attempt) ** cfg.timeout_attempts < 1e-4

    def test_timeout_raised(self, rng):
        noise = replace(IDEAL, link=LinkConfig(p_herald_per_attempt=1e-6, timeout_attempts=1))
        with pytest.raises(Timeout):
            rsp_round(RspTarget.theta(0), noise, rng)

    def test_continue_on_loss(self, rng):
        link = LinkConfig(p_herald_per_attempt=1e-6, timeout_attempts=1, continue_on_loss=True)
        res = prepare(RspTarget.theta(0), replace(IDEAL, link=link), rng)
        np.testing.assert_allclose(res.state.matrix, np.eye(2) / 2)


class TestTimestamps:
    def test_same_delays_same_distribution(self, rng):
        tm = TimingModel(delay_s_ns=0.0, delay_p_ns=0.0, jitter_ns=0.0)
        s = [herald_timestamp("s", tm, rng) for _ in range(20_000)]
        p = [herald_timestamp("p", tm, rng) for _ in range(20_000)]
        assert abs(np.mean(s) - np.mean(p)) < 4 * 8.0 * np.sqrt(2 / 20_000)

    def test_mean_offset(self, rng):
        tm = TimingModel()
        n = 100_000
        s = np.array([herald_timestamp("s", tm, rng) for _ in range(n)])
        p = np.array([herald_timestamp("p", tm, rng) for _ in range(n)])
        # flooring to whole ns shifts both means equally on average
        assert abs(s.mean() - p.mean() - 6.57) < 0.1

    def test_offset_exponential_shape(self, rng):
        tm = TimingModel()
        t = np.array([herald_timestamp("p", tm, rng) for _ in range(50_000)])
        counts = np.bincount(t - t.min())
        peak = int(np.argmax(counts))
        tail = counts[peak:peak + 30]
        assert t.min() >= 18
        assert np.all(np.diff(tail) <= 4 * np.sqrt(tail[:-1] + 1))
        assert tail[-1] < tail[0] / 10

    @given(st.sampled_from(["s", "p"]), st.integers(0, 2**32))
    @settings(max_examples=30)
    def test_quantised(self, det, seed):
        tm = TimingModel(resolution_ns=2.0)
        assert herald_timestamp(det, tm, np.random.default_rng(seed)) % 2 == 0


class TestRetry:
    def _run(self, p, rng, n):
        # every attempt heralds, so only the transfer flag repeats the loop
        noise = NoiseModel.ideal(p_errdetect=p, link=LinkConfig(p_herald_per_attempt=1.0))
        plan = client_plan_round(1, [0], COMPUTATION, rng)
        totals = []
        for _ in range(n):
            client = Client(plan)
            _, _, retries = init_with_retry(client, noise, rng, rng)
            totals.append(retries + 1)
        return np.array(totals)

    def test_no_errors_single_attempt(self, rng):
        assert np.all(self._run(0.0, rng, 200) == 1)

    def test_half_error_rate(self, rng):
        assert abs(self._run(0.5, rng, 10_000).mean() - 2.0) < 0.1

    def test_default_overhead(self, rng):
        assert abs(self._run(0.1, rng, 10_000).mean() - 1 / 0.9) < 0.02

    def test_target_kept_across_retries(self, rng):
        noise = NoiseModel.ideal(p_errdetect=0.9)
        plan = client_plan_round(1, [0], COMPUTATION, rng)
        client = Client(plan)
        seen = []
        init_with_retry(client, noise, rng, rng, on_herald=lambda h: seen.append(client.target(1)))
        assert len(set(seen)) == 1

    def test_fresh_randomness_changes_target(self, rng):
        link = LinkConfig(fresh_randomness_on_retry=True)
        noise = NoiseModel.ideal(p_errdetect=0.9, link=link)
        plan = client_plan_round(1, [0], COMPUTATION, rng)
        client = Client(plan)
        seen = []
        init_with_retry(client, noise, rng, rng, rng, on_herald=lambda h: seen.append(client.target(1)))
        if len(seen) > 3:
            assert len(set(seen)) > 1


class TestLatency:
    def test_single_attempt_defaults(self):
        cfg = LinkConfig()
        assert round_latency(cfg, 1) == pytest.approx(1 + sum(cfg.durations_us.values()))
        assert round_latency(cfg, 1) == pytest.approx(1306.0)

    def test_rsp_term(self):
        zero = LinkConfig(durations_us={k: 0.0 for k in LinkConfig().durations_us})
        assert round_latency(zero, 100) == pytest.approx(100.0)

    def test_zero_durations(self):
        cfg = LinkConfig(attempt_us=0.0, durations_us={})
        assert round_latency(cfg, 57, 3) == 0.0

    def test_retries_repeat_steps(self):
        cfg = LinkConfig()
        assert round_latency(cfg, 1, 2) - round_latency(cfg, 1, 0) == pytest.approx(2 * 1305.0)


class TestNoiseModel:
    def test_budget_range(self):
        with pytest.raises(ValueError):
            FidelityBudget(iswap=0.4)

    def test_transfer_without_detection(self):
        assert NoiseModel(error_detection=False).transfer_fidelity() == pytest.approx(0.913)
        assert NoiseModel().transfer_fidelity() == pytest.approx(0.973)

    def test_timing_validation(self):
        with pytest.raises(ValueError):
            TimingModel(lifetime_ns=0)
        with pytest.raises(ValueError):
            LinkConfig(p_herald_per_attempt=0.0)
