import itertools
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from vbqc.noise import NoiseModel
from vbqc.protocol import (
    COMPUTATION, TEST, Client, Octant, RoundPlan, ServerState,
    client_decrypt, client_plan_round, cluster_oracle, encrypt_delta,
    feedforward_R, fringe_probability, server_init_step, server_interaction_step,
    test_delta as trap_delta, trap_verdicts,
)
from vbqc.qcore import S, QuantumState, apply_unitary, fidelity

from helpers import IDEAL, decoded_one_probability, exact_branches, octant_radians, random_heralds

octants = st.integers(0, 7)
bits = st.integers(0, 1)


class TestOctant:
    @given(octants, octants)
    def test_closed_under_addition(self, a, b):
        assert Octant(a) + Octant(b) == (a + b) % 8
        assert isinstance(Octant(a) + b, Octant)

    @given(st.integers(-100, 100))
    def test_negation_and_half_turn(self, k):
        o = Octant(k)
        assert -o == (-k) % 8
        assert o + 4 + 4 == o
        assert o.radians == pytest.approx(np.pi / 4 * (k % 8))


class TestFeedforward:
    def test_empty_ranges(self):
        assert feedforward_R([], 1) == 0
        assert feedforward_R([1], 2) == 0

    def test_literal_indexing(self):
        assert feedforward_R([1, 0, 1], 4) == 0
        assert feedforward_R([1, 0, 1], 3) == 1
        assert feedforward_R([1, 1, 1, 1], 5) == 0
        assert feedforward_R([1, 0, 1, 1], 6) == 1

    def test_missing_bit(self):
        with pytest.raises(IndexError):
            feedforward_R([1], 4)
        with pytest.raises(IndexError):
            feedforward_R([], 0)

    @given(st.lists(bits, min_size=8, max_size=8), st.integers(1, 9))
    def test_matches_set_definition(self, b, ell):
        expect = 0
        for j in range(1, ell):
            if j < ell / 2:
                expect ^= b[ell - 2 * j - 1]
        assert feedforward_R(b, ell) == expect


class TestEncryption:
    @pytest.mark.parametrize("alpha,theta,r,R,expect", [
        (2, 1, 0, 0, 3), (2, 0, 1, 0, 6), (2, 0, 0, 1, 6),
    ])
    def test_examples(self, alpha, theta, r, R, expect):
        assert encrypt_delta(alpha, theta, r, R) == expect

    @pytest.mark.parametrize("alpha,r,R", list(itertools.product(range(8), (0, 1), (0, 1))))
    def test_bijection_in_theta(self, alpha, r, R):
        assert sorted(encrypt_delta(alpha, t, r, R) for t in range(8)) == list(range(8))

    def test_trap_delta_table(self):
        for theta, r in itertools.product(range(8), (0, 1)):
            assert trap_delta(theta, r) == (theta + 4 * r) % 8
        assert trap_delta(1, 1) == 5

    def test_decrypt(self):
        assert [client_decrypt(m, r) for m, r in ((0, 0), (1, 1), (1, 0), (0, 1))] == [0, 0, 1, 1]


class TestPlan:
    def test_thetas_per_prepared_qubit(self, rng):
        plan = client_plan_round(1, [3], COMPUTATION, rng)
        assert len(plan.thetas) == 2 and len(plan.r_bits) == 1

    @pytest.mark.parametrize("parity", [0, 1])
    def test_test_masks_complementary(self, rng, parity):
        plan = client_plan_round(2, None, TEST, rng, parity=parity)
        traps = set(plan.trap_positions)
        dummies = {p for p in range(1, 4) if plan.is_dummy(p)}
        assert traps.isdisjoint(dummies) and traps | dummies == {1, 2, 3}
        assert all(plan.is_dummy(p) != plan.is_dummy(p + 1) for p in (1, 2))

    def test_both_alternations_used(self, rng):
        seen = {client_plan_round(2, None, TEST, rng).dummy_mask for _ in range(50)}
        assert seen == {(0, 1, 0), (1, 0, 1)}

    def test_theta_frequencies_multinomial(self):
        rng = np.random.default_rng(8000)
        counts = np.zeros(8)
        n = 8000
        for _ in range(n):
            counts[client_plan_round(1, [0], COMPUTATION, rng).thetas[0]] += 1
        sigma = np.sqrt(n * (1 / 8) * (7 / 8))
        assert np.all(np.abs(counts - n / 8) < 4 * sigma)

    def test_rejects_bad_lengths(self):
        with pytest.raises(ValueError):
            RoundPlan(COMPUTATION, 2, (Octant(1),), (Octant(0),) * 3, (0, 0))
        with pytest.raises(ValueError):
            RoundPlan(COMPUTATION, 0, (), (Octant(0),), ())
        with pytest.raises(ValueError):
            client_plan_round(1, [0], "other", np.random.default_rng(0))


class TestClusterOracle:
    def test_zero_angle_gives_zero(self):
        np.testing.assert_allclose(cluster_oracle([0.0], [0]).matrix, QuantumState.basis(0).matrix, atol=1e-12)

    def test_pi_gives_one(self):
        assert fidelity(cluster_oracle([np.pi], [0]), QuantumState.basis(1)) == pytest.approx(1.0)

    @given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
    def test_two_step_fringe(self, a1, a2):
        assert fringe_probability([a1, a2]) == pytest.approx((1 - np.sin(a1) * np.sin(a2)) / 2, abs=1e-12)


def _conditional_final(branches):
    """P(raw final = 1 | earlier outcomes) for each outcome prefix."""
    groups = defaultdict(lambda: [0.0, 0.0])
    clients = {}
    for p, c in branches:
        key = tuple(c.outcomes[:-1])
        groups[key][c.outcomes[-1]] += p
        clients[key] = c
    return {k: (v[1] / (v[0] + v[1]), clients[k]) for k, v in groups.items()}


class TestMasterOracle:
    """Noiseless protocol against the ideal cluster, by exact branch enumeration."""

    def _check_z_final(self, q, alphas, plan, heralds):
        branches = exact_branches(plan, heralds)
        assert sum(p for p, _ in branches) == pytest.approx(1.0, abs=1e-12)
        for p1, client in _conditional_final(branches).values():
            oracle = cluster_oracle(octant_radians(alphas), client.decrypted)
            assert abs(p1 - np.real(oracle.matrix[1, 1])) < 1e-9
        decoded = sum(p for p, c in branches if c.decoded_output() == 1)
        assert abs(decoded - fringe_probability(octant_radians(alphas))) < 1e-9

    @pytest.mark.parametrize("q", [1, 2, 3])
    def test_random_full_draws(self, rng, q):
        for _ in range(120):
            alphas = [int(a) for a in rng.integers(0, 8, q)]
            plan = client_plan_round(q, alphas, COMPUTATION, rng)
            self._check_z_final(q, alphas, plan, random_heralds(rng, q))

    @pytest.mark.parametrize("q", [1, 2, 3])
    def test_coarse_key_grid_exhaustive(self, rng, q):
        alphas = [int(a) for a in rng.integers(0, 8, q)]
        for th in itertools.product((0, 4), repeat=q + 1):
            for r in itertools.product((0, 1), repeat=q):
                heralds = random_heralds(rng, q)
                plan = RoundPlan(COMPUTATION, q, tuple(map(Octant, alphas)), tuple(map(Octant, th)), r)
                self._check_z_final(q, alphas, plan, heralds)

    @pytest.mark.parametrize("q", [1, 2])
    def test_equatorial_final_readout(self, rng, q):
        for _ in range(60):
            alphas = [int(a) for a in rng.integers(0, 8, q + 1)]
            plan = client_plan_round(q, alphas, COMPUTATION, rng, final_basis="B")
            p1 = decoded_one_probability(plan, random_heralds(rng, q))
            assert abs(p1 - fringe_probability(octant_radians(alphas))) < 1e-9

    def test_all_keys_zero_deterministic(self):
        plan = RoundPlan(COMPUTATION, 1, (Octant(0),), (Octant(0), Octant(0)), (0,))
        assert decoded_one_probability(plan, [0, 0]) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("alpha", range(8))
    def test_single_step_fringe(self, alpha):
        plan = RoundPlan(COMPUTATION, 1, (Octant(alpha),), (Octant(3), Octant(6)), (1,))
        assert decoded_one_probability(plan, [1, 0]) == pytest.approx(np.sin(np.pi / 8 * alpha) ** 2, abs=1e-9)


class TestTestRounds:
    @pytest.mark.parametrize("q,final", [(1, "Z"), (2, "Z"), (2, "B"), (3, "Z"), (3, "B")])
    def test_noiseless_never_fails(self, rng, q, final):
        for _ in range(20):
            plan = client_plan_round(q, None, TEST, rng, final_basis=final)
            for p, c in exact_branches(plan, random_heralds(rng, q)):
                assert all(v.passed for v in c.verdicts())

    def test_forced_flip_fails_one(self, rng):
        plan = client_plan_round(2, None, TEST, rng, parity=1)
        outcomes = list(plan.r_bits[:2]) + [0]
        ok = trap_verdicts(plan, outcomes)
        assert [v.passed for v in ok] == [True]
        outcomes[1] ^= 1
        assert [v.passed for v in trap_verdicts(plan, outcomes)] == [False]

    def test_final_dummy_checked_against_prepared_value(self, rng):
        plan = client_plan_round(2, None, TEST, rng, parity=1)  # D T D
        kinds = [v.kind for v in trap_verdicts(plan, [0, plan.r_bits[1], 1], dummy_values=[0, 0, 1])]
        assert kinds == ["trap", "dummy"]

    def test_verdicts_need_every_outcome(self, rng):
        plan = client_plan_round(2, None, TEST, rng)
        with pytest.raises(ValueError):
            trap_verdicts(plan, [0, 0])


class TestServer:
    def test_noiseless_init_keeps_state(self, rng):
        # the transfer gate leaves an S phase, which the client folds into theta
        target = QuantumState.from_ket(np.array([1, np.exp(0.7j)]) / np.sqrt(2))
        expect = apply_unitary(target, S, [0])
        for _ in range(20):
            m_err, st = server_init_step(target, IDEAL, rng)
            assert m_err == 0
            assert fidelity(st.memory, expect) == pytest.approx(1.0, abs=1e-12)

    def test_always_flagged(self, rng):
        noise = NoiseModel(p_errdetect=1.0)
        assert all(server_init_step(QuantumState.basis(0), noise, rng)[0] == 1 for _ in range(50))

    def test_default_retry_fraction(self, rng):
        flags = [server_init_step(QuantumState.basis(0), NoiseModel(), rng)[0] for _ in range(10_000)]
        assert abs(np.mean(flags) - 0.10) < 0.01

    def test_interaction_needs_memory(self, rng):
        with pytest.raises(ValueError):
            server_interaction_step(ServerState(), QuantumState.basis(0), 0, IDEAL, rng)

    def test_memory_count_bounded(self, rng):
        _, st = server_init_step(QuantumState.basis(0), IDEAL, rng)
        for _ in range(3):
            _, st = server_interaction_step(st, QuantumState.basis(0), 0, IDEAL, rng)
            assert st.memory.n_qubits == 1


class TestBlindness:
    def test_first_delta_uniform_exact(self):
        # fixed alpha, uniform theta and r: every octant equally likely
        for alpha in range(8):
            counts = np.zeros(8)
            for th, r, c in itertools.product(range(8), (0, 1), (0, 1)):
                plan = RoundPlan(COMPUTATION, 1, (Octant(alpha),), (Octant(th), Octant(0)), (r,))
                client = Client(plan)
                client.on_herald(1, c)
                counts[client.delta(1)] += 1
            assert np.all(counts == counts[0])

    def test_deltas_uniform_chi_square(self, rng):
        counts = np.zeros((2, 8))
        for _ in range(8000):
            plan = client_plan_round(2, [2, 5], COMPUTATION, rng)
            client = Client(plan)
            for pos in (1, 2, 3):
                client.on_herald(pos, int(rng.integers(2)))
            for pos in (1, 2):
                counts[pos - 1, client.delta(pos)] += 1
                client.on_outcome(pos, int(rng.integers(2)))
        for row in counts:
            assert stats.chisquare(row).pvalue > 0.01
