"""Client and server state machines for blind computation on a linear cluster.

Qubits are numbered 1..q+1 in preparation order. Qubit 1 is written into
memory during initialisation. Each interaction step ell entangles memory with
freshly steered qubit ell+1, swaps them and measures the old cluster head
(qubit ell). The memory then holds qubit q+1, which is read out at the end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .link import RspTarget
from .noise import NoiseModel
from .qcore import (
    ISWAP,
    Channel,
    H,
    MeasBasis,
    QuantumState,
    X,
    Z,
    apply_channel,
    apply_unitary,
    measure,
    partial_trace,
    post_measurement,
    zrot,
)

COMPUTATION = "computation"
TEST = "test"


class Octant(int):
    """Angle k*pi/4 with k taken mod 8."""

    def __new__(cls, k: int = 0):
        return super().__new__(cls, int(k) % 8)

    def __add__(self, other):
        return Octant(int(self) + int(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Octant(int(self) - int(other))

    def __rsub__(self, other):
        return Octant(int(other) - int(self))

    def __neg__(self):
        return Octant(-int(self))

    def __repr__(self):
        return f"Octant({int(self)})"

    @property
    def radians(self) -> float:
        return np.pi / 4 * int(self)


ALL_OCTANTS = tuple(Octant(k) for k in range(8))


def feedforward_R(decrypted_bits: Sequence[int], ell: int) -> int:
    """XOR of b[ell-2j] for 1 <= j < ell/2, with 1-based bit indices."""
    if ell < 1:
        raise IndexError("ell must be >= 1")
    acc = 0
    j = 1
    while 2 * j < ell:
        idx = ell - 2 * j
        if idx > len(decrypted_bits):
            raise IndexError(f"bit {idx} not yet available")
        acc ^= int(decrypted_bits[idx - 1]) & 1
        j += 1
    return acc


def x_byproduct(decrypted_bits: Sequence[int], pos: int) -> int:
    """X byproduct exponent carried by qubit ``pos`` when it is measured."""
    return feedforward_R(decrypted_bits, pos + 1)


def z_byproduct(decrypted_bits: Sequence[int], pos: int) -> int:
    return feedforward_R(decrypted_bits, pos)


def encrypt_delta(alpha: int, theta: int, r: int, R_prev: int) -> Octant:
    a = -Octant(alpha) if R_prev & 1 else Octant(alpha)
    return a + Octant(theta) + 4 * (r & 1)


def test_delta(theta: int, r: int) -> Octant:
    return Octant(theta) + 4 * (r & 1)


def client_decrypt(m: int, r: int) -> int:
    return (m ^ r) & 1


@dataclass(frozen=True)
class RoundPlan:
    round_type: str
    q: int
    alphas: tuple[Octant, ...]
    thetas: tuple[Octant, ...]  # analyser targets, one per prepared qubit
    r_bits: tuple[int, ...]
    dummy_mask: tuple[int, ...] = ()
    dummy_bits: tuple[int, ...] = ()  # analyser targets for dummies
    trap_positions: tuple[int, ...] = ()
    final_basis: str = "Z"

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.final_basis not in ("Z", "B"):
            raise ValueError("final_basis must be 'Z' or 'B'")
        if len(self.thetas) != self.q + 1:
            raise ValueError("need one theta per prepared qubit")
        if self.round_type == COMPUTATION:
            need = self.q + (self.final_basis == "B")
            if len(self.alphas) != need:
                raise ValueError(f"expected {need} alphas")
        elif self.round_type == TEST:
            if len(self.dummy_mask) != self.q + 1:
                raise ValueError("dummy mask must cover every prepared qubit")
        else:
            raise ValueError(f"unknown round type {self.round_type!r}")

    @property
    def measured(self) -> int:
        """Number of qubits measured in an equatorial basis."""
        return self.q + (self.final_basis == "B")

    def is_dummy(self, pos: int) -> bool:
        return self.round_type == TEST and bool(self.dummy_mask[pos - 1])


def client_plan_round(
    q: int,
    alphas: Sequence[int] | None,
    round_type: str,
    rng,
    final_basis: str = "Z",
    parity: int | None = None,
) -> RoundPlan:
    """Draw fresh secrets for one round.

    Test rounds prepare every second qubit as a Z eigenstate; ``parity``
    selects which alternation and is random when omitted.
    """
    n = q + 1
    thetas = tuple(Octant(k) for k in rng.integers(0, 8, size=n))
    r_len = q + (final_basis == "B")
    r_bits = tuple(int(b) for b in rng.integers(0, 2, size=r_len))
    if round_type == COMPUTATION:
        return RoundPlan(COMPUTATION, q, tuple(Octant(a) for a in alphas), thetas, r_bits, final_basis=final_basis)
    if round_type != TEST:
        raise ValueError(f"unknown round type {round_type!r}")
    if parity is None:
        parity = int(rng.integers(2))
    mask = tuple(int((pos + parity) % 2 == 0) for pos in range(1, n + 1))
    dummy_bits = tuple(int(b) for b in rng.integers(0, 2, size=n))
    traps = tuple(pos for pos in range(1, n + 1) if not mask[pos - 1])
    return RoundPlan(TEST, q, (), thetas, r_bits, mask, dummy_bits, traps, final_basis)


@dataclass(frozen=True)
class TrapVerdict:
    position: int
    kind: str  # "trap" or "dummy"
    passed: bool


def trap_verdicts(plan: RoundPlan, outcomes: Sequence[int], dummy_values: Sequence[int] | None = None) -> list[TrapVerdict]:
    """Checkable test positions and whether each passed.

    ``outcomes`` holds the raw server outcome for every prepared qubit (the
    last entry is the final readout). Traps measured in an equatorial basis
    pass iff m = r. A dummy read out in Z passes iff the outcome equals its
    prepared value; ``dummy_values`` gives those values after heralds.
    """
    if plan.round_type != TEST:
        return []
    if len(outcomes) != plan.q + 1:
        raise ValueError("need one outcome per prepared qubit")
    out = []
    for pos in range(1, plan.q + 2):
        m = int(outcomes[pos - 1])
        z_readout = pos == plan.q + 1 and plan.final_basis == "Z"
        if plan.is_dummy(pos):
            if z_readout and dummy_values is not None:
                out.append(TrapVerdict(pos, "dummy", m == dummy_values[pos - 1]))
        elif not z_readout:
            out.append(TrapVerdict(pos, "trap", m == plan.r_bits[pos - 1]))
    return out


class Client:
    """Client bookkeeping for one round, driven by the session runner."""

    def __init__(self, plan: RoundPlan):
        self.plan = plan
        n = plan.q + 1
        self._thetas = list(plan.thetas)
        self._dummy_bits = list(plan.dummy_bits)
        self.c: list[int | None] = [None] * n
        self.outcomes: list[int | None] = [None] * n
        self.decrypted: list[int] = []

    def refresh(self, pos: int, rng) -> None:
        """Fresh secrets for a repeated preparation."""
        self._thetas[pos - 1] = Octant(rng.integers(8))
        if self._dummy_bits:
            self._dummy_bits[pos - 1] = int(rng.integers(2))

    def target(self, pos: int) -> RspTarget:
        if self.plan.is_dummy(pos):
            return RspTarget.z(self._dummy_bits[pos - 1])
        return RspTarget.theta(self._thetas[pos - 1])

    def on_herald(self, pos: int, c: int) -> None:
        self.c[pos - 1] = int(c) & 1

    def prepared_theta(self, pos: int) -> Octant:
        return Octant(self._thetas[pos - 1]) + 4 * self._herald(pos)

    def dummy_value(self, pos: int) -> int:
        return self._dummy_bits[pos - 1] ^ self._herald(pos)

    def _herald(self, pos: int) -> int:
        c = self.c[pos - 1]
        if c is None:
            raise RuntimeError(f"qubit {pos} has no herald yet")
        return c

    def _effective_theta(self, pos: int) -> Octant:
        # each pass through the iSWAP leaves an S on the qubit; measured
        # qubits have seen two, the final memory qubit one
        extra = 2 if pos == self.plan.q + 1 else 4
        return self.prepared_theta(pos) + extra

    def delta(self, pos: int) -> Octant:
        plan = self.plan
        if pos > plan.measured:
            raise ValueError(f"qubit {pos} is not measured in an equatorial basis")
        theta = self._effective_theta(pos)
        r = plan.r_bits[pos - 1]
        if plan.round_type == COMPUTATION:
            return encrypt_delta(plan.alphas[pos - 1], theta, r, x_byproduct(self.decrypted, pos))
        if plan.is_dummy(pos):
            return test_delta(theta, r)
        flip = 0
        for nb in (pos - 1, pos + 1):
            if 1 <= nb <= plan.q + 1 and plan.is_dummy(nb):
                flip ^= self.dummy_value(nb)
        return test_delta(theta, r ^ flip)

    def on_outcome(self, pos: int, m: int) -> None:
        self.outcomes[pos - 1] = int(m) & 1
        if pos <= self.plan.measured:
            self.decrypted.append(client_decrypt(m, self.plan.r_bits[pos - 1]))

    def decoded_output(self) -> int:
        """Logical value of the final readout."""
        plan = self.plan
        last = plan.q + 1
        m = self.outcomes[last - 1]
        if m is None:
            raise RuntimeError("final outcome missing")
        if plan.final_basis == "Z":
            return m ^ x_byproduct(self.decrypted[: plan.q], last)
        return self.decrypted[last - 1] ^ z_byproduct(self.decrypted, last)

    def logical_outcomes(self) -> list[int]:
        """Byproduct-corrected outcomes of every equatorially measured qubit."""
        return [s ^ z_byproduct(self.decrypted, i + 1) for i, s in enumerate(self.decrypted)]

    def verdicts(self) -> list[TrapVerdict]:
        if self.plan.round_type != TEST:
            return []
        dv = [self.dummy_value(p) if self.plan.is_dummy(p) else 0 for p in range(1, self.plan.q + 2)]
        return trap_verdicts(self.plan, self.outcomes, dv)


@dataclass(frozen=True)
class ServerState:
    memory: QuantumState | None = None
    step: int = 0
    # gate error owed by the memory qubit, charged when it is read out
    deferred_fidelity: float = 1.0


def _depolarize(state: QuantumState, fidelity: float, target: int) -> QuantumState:
    lam = 2 * (1 - fidelity)
    if lam <= 0:
        return state
    return apply_channel(state, Channel("depolarize", lam, target))


def transfer_to_memory(steered: QuantumState, noise: NoiseModel) -> QuantumState:
    joint = QuantumState.basis(0).tensor(steered)
    joint = apply_unitary(joint, ISWAP, [0, 1])
    return _depolarize(partial_trace(joint, [0]), noise.transfer_fidelity(), 0)


def server_init_step(theta_state: QuantumState, noise: NoiseModel, rng) -> tuple[int, ServerState]:
    if noise.error_detection and noise.p_errdetect > 0 and rng.random() < noise.p_errdetect:
        return 1, ServerState()
    return 0, ServerState(transfer_to_memory(theta_state, noise), 1)


def interaction_joint_state(st: ServerState, steered: QuantumState, noise: NoiseModel) -> QuantumState:
    """Memory (qubit 0) and network (qubit 1) just before readout.

    The qubit leaving through the network port carries the error of this
    gate and the one it entered memory with. The error of the qubit that
    stays is deferred to its own readout, so its neighbours' checks only
    see it through that readout.
    """
    if st.memory is None:
        raise ValueError("no memory qubit: initialise first")
    mem = st.memory
    p = 1 - noise.budget.memory_map
    if p > 0:
        # idle memory during the preparation, one map per hold
        mem = apply_channel(mem, Channel("dephase", p, 0))
        mem = apply_channel(mem, Channel("dephase", p, 0))
    joint = apply_unitary(mem.tensor(steered), ISWAP, [0, 1])
    joint = _depolarize(joint, st.deferred_fidelity, 1)
    return _depolarize(joint, noise.budget.iswap, 1)


def _equatorial(delta: int) -> MeasBasis:
    return MeasBasis("B", Octant(delta).radians)


def server_interaction_step(
    st: ServerState, steered: QuantumState, delta: int, noise: NoiseModel, rng
) -> tuple[int, ServerState]:
    joint = interaction_joint_state(st, steered, noise)
    m, mem = measure(joint, _equatorial(delta), 1, rng)
    return m, ServerState(mem, st.step + 1, noise.budget.iswap)


def server_interaction_branch(
    st: ServerState, steered: QuantumState, delta: int, noise: NoiseModel, m: int
) -> tuple[float, ServerState]:
    """Deterministic twin: probability of outcome ``m`` and the post-state."""
    joint = interaction_joint_state(st, steered, noise)
    p, mem = post_measurement(joint, _equatorial(delta), 1, m)
    return p, ServerState(mem, st.step + 1, noise.budget.iswap)


def final_basis(delta: int | None) -> MeasBasis:
    return MeasBasis("Z") if delta is None else _equatorial(delta)


def final_memory_state(st: ServerState) -> QuantumState:
    if st.memory is None:
        raise ValueError("no memory qubit")
    return _depolarize(st.memory, st.deferred_fidelity, 0)


def server_final_measure(st: ServerState, delta: int | None, rng) -> int:
    bit, _ = measure(final_memory_state(st), final_basis(delta), 0, rng)
    return bit


def cluster_oracle(alphas: Sequence[float], decrypted_bits: Sequence[int], theta_final: float = 0.0) -> QuantumState:
    """Ideal last-qubit state of the effective cluster, byproducts included.

    Returns Z(theta) X^a Z^b H Z(alpha_q) ... H Z(alpha_1) |+> where a and b
    are the X and Z byproduct exponents of the last qubit.
    """
    q = len(alphas)
    psi = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)
    for a in alphas:
        psi = H.matrix @ zrot(a).matrix @ psi
    if feedforward_R(decrypted_bits, q + 1):
        psi = Z.matrix @ psi
    if feedforward_R(decrypted_bits, q + 2):
        psi = X.matrix @ psi
    psi = zrot(theta_final).matrix @ psi
    return QuantumState.from_ket(psi)


def fringe_probability(alphas: Sequence[float]) -> float:
    """Pr(decoded final Z outcome = 1) for a byproduct-free cluster."""
    state = cluster_oracle(alphas, [0] * len(alphas))
    return float(np.real(state.matrix[1, 1]))
