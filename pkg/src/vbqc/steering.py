"""Remote state preparation by steering, compared against its ideal resource.

Real world: the client holds one half of an entangled pair, applies a
Haar-random rotation, measures, and announces a correcting unitary. Ideal
world: a simulator receives the target state from the resource and must
reproduce everything the server sees using a Bell measurement.

Single runs go through the density-matrix core; the batched samplers used
for distribution tests are plain numpy on state vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import H, MeasBasis, QuantumState, UnitaryOp, apply_unitary, measure

BELL_PAIR = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.diag([1.0, -1.0]).astype(complex)
_CNOT = UnitaryOp([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], "CNOT")

MIN_TV_SAMPLES = 1000
TV_BINS = 16


def haar_unitary(rng, size: int | None = None) -> np.ndarray:
    """Haar-random 2x2 unitary (or a stack of ``size`` of them)."""
    shape = (2, 2) if size is None else (size, 2, 2)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[..., None, :]


@dataclass(frozen=True)
class WorldTranscript:
    classical_message: np.ndarray
    server_output: QuantumState
    outcomes: tuple[int, ...]


def _pauli_power(p: np.ndarray, k: int) -> np.ndarray:
    return p if k else np.eye(2, dtype=complex)


def run_real_world(u: np.ndarray, rng, distinguisher_state: np.ndarray = BELL_PAIR) -> WorldTranscript:
    """Steering protocol on a pair (client half first, server half second).

    The client's rotation is applied as the complex conjugate of the Haar
    sample U1, which is again Haar distributed; this makes the announced
    correction U2 = U X^m U1 exact for the maximally entangled pair.
    """
    u1 = haar_unitary(rng)
    pair = QuantumState.from_ket(distinguisher_state)
    pair = apply_unitary(pair, UnitaryOp(np.conj(u1)), [0])
    m, server = measure(pair, MeasBasis("Z"), 0, rng)
    u2 = np.asarray(u) @ _pauli_power(_X, m) @ u1
    return WorldTranscript(u2, apply_unitary(server, UnitaryOp(u2), [0]), (m,))


def run_ideal_world(
    u: np.ndarray, distinguisher_state: np.ndarray, rng, drop_z: bool = False
) -> WorldTranscript:
    """Simulator: Bell-measure the resource qubit with the distinguisher's qubit.

    Registers are (resource, distinguisher-sent, distinguisher-kept). The
    kept qubit is returned after U2 = U1^dagger Z^m1 X^m2 is applied to it.
    ``drop_z`` removes the Z correction (a deliberately broken simulator).
    """
    u1 = haar_unitary(rng)
    resource = QuantumState.from_ket(np.asarray(u) @ np.array([1, 0], dtype=complex))
    joint = resource.tensor(QuantumState.from_ket(distinguisher_state))
    joint = apply_unitary(joint, UnitaryOp(u1), [0])
    joint = apply_unitary(joint, _CNOT, [0, 1])
    joint = apply_unitary(joint, H, [0])
    m1, joint = measure(joint, MeasBasis("Z"), 0, rng)
    m2, kept = measure(joint, MeasBasis("Z"), 0, rng)
    corr = np.eye(2, dtype=complex) if drop_z else _pauli_power(_Z, m1)
    u2 = u1.conj().T @ corr @ _pauli_power(_X, m2)
    return WorldTranscript(u2, apply_unitary(kept, UnitaryOp(u2), [0]), (m1, m2))


# batched samplers -----------------------------------------------------------

def _sample_rows(probs: np.ndarray, rng) -> np.ndarray:
    cum = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cum[:, -1]
    return np.minimum((u[:, None] > cum).sum(axis=1), probs.shape[1] - 1)


def sample_real(u: np.ndarray, chi: np.ndarray, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """(U2 stack, unnormalised-then-normalised kept-qubit kets) for n real runs."""
    u1 = haar_unitary(rng, n)
    chi2 = np.asarray(chi, dtype=complex).reshape(2, 2)
    branches = np.conj(u1) @ chi2  # [m, kept]
    probs = np.sum(np.abs(branches) ** 2, axis=2)
    m = _sample_rows(probs, rng)
    kets = branches[np.arange(n), m]
    kets /= np.linalg.norm(kets, axis=1, keepdims=True)
    xm = np.where(m[:, None, None] == 1, _X, np.eye(2))
    u2 = np.asarray(u) @ xm @ u1
    return u2, kets


def sample_ideal(u: np.ndarray, chi: np.ndarray, n: int, rng, drop_z: bool = False) -> tuple[np.ndarray, np.ndarray]:
    u1 = haar_unitary(rng, n)
    psi = u1 @ (np.asarray(u) @ np.array([1, 0], dtype=complex))  # (n, 2)
    chi2 = np.asarray(chi, dtype=complex).reshape(2, 2)
    # Bell outcome (m1, m2) <-> (|0,m2> + (-1)^m1 |1,1-m2>)/sqrt(2)
    bells = np.zeros((4, 2, 2))
    for m1 in (0, 1):
        for m2 in (0, 1):
            bells[2 * m1 + m2, 0, m2] = 1
            bells[2 * m1 + m2, 1, 1 - m2] = (-1) ** m1
    bells /= np.sqrt(2)
    branches = np.einsum("krd,nr,de->nke", bells, psi, chi2)
    probs = np.sum(np.abs(branches) ** 2, axis=2)
    k = _sample_rows(probs, rng)
    kets = branches[np.arange(n), k]
    kets /= np.linalg.norm(kets, axis=1, keepdims=True)
    m1, m2 = k // 2, k % 2
    z = np.where((m1[:, None, None] == 1) & (not drop_z), _Z, np.eye(2))
    x = np.where(m2[:, None, None] == 1, _X, np.eye(2))
    u2 = np.conj(np.swapaxes(u1, 1, 2)) @ z @ x
    return u2, kets


@dataclass(frozen=True)
class Distinguisher:
    """Fixed strategy: entangled input, optional use of U2, fixed basis readout."""

    state: np.ndarray = BELL_PAIR
    apply_message: bool = True
    basis: np.ndarray = np.eye(2, dtype=complex)  # columns are outcome vectors

    def outcomes(self, u2: np.ndarray, kets: np.ndarray, rng) -> np.ndarray:
        if self.apply_message:
            kets = np.einsum("nij,nj->ni", u2, kets)
        amps = kets @ np.conj(self.basis)
        return _sample_rows(np.abs(amps) ** 2, rng)


def random_distinguisher(rng) -> Distinguisher:
    v = haar_unitary(rng)
    w = haar_unitary(rng)
    state = np.kron(v, np.eye(2)) @ BELL_PAIR
    state = 0.8 * state + 0.6 * np.kron(w @ [1, 0], [1, 0])
    return Distinguisher(state / np.linalg.norm(state), True, haar_unitary(rng))


def message_parameters(u2: np.ndarray) -> np.ndarray:
    """Four real coordinates of each unitary: |u00|^2 and three entry phases."""
    return np.stack([
        np.abs(u2[:, 0, 0]) ** 2,
        np.angle(u2[:, 0, 0]),
        np.angle(u2[:, 0, 1]),
        np.angle(u2[:, 1, 0]),
    ], axis=1)


_PARAM_RANGES = ((0.0, 1.0), (-np.pi, np.pi), (-np.pi, np.pi), (-np.pi, np.pi))


def _joint_hist(params: np.ndarray, outcomes: np.ndarray, j: int) -> np.ndarray:
    lo, hi = _PARAM_RANGES[j]
    b = np.clip(((params[:, j] - lo) / (hi - lo) * TV_BINS).astype(int), 0, TV_BINS - 1)
    h = np.zeros((TV_BINS, 2))
    np.add.at(h, (b, outcomes), 1)
    return h / len(outcomes)


def tv_distance(a: tuple[np.ndarray, np.ndarray], b: tuple[np.ndarray, np.ndarray]) -> float:
    """Largest per-parameter TV distance between two (U2, outcome) samples."""
    pa, pb = message_parameters(a[0]), message_parameters(b[0])
    return max(
        0.5 * float(np.abs(_joint_hist(pa, a[1], j) - _joint_hist(pb, b[1], j)).sum())
        for j in range(4)
    )


def indistinguishability_test(
    u: np.ndarray,
    n_samples: int,
    rng,
    distinguisher: Distinguisher | None = None,
    worlds: tuple[str, str] = ("real", "ideal"),
) -> float:
    """Estimated TV distance between two worlds as seen by one distinguisher.

    World names are ``real``, ``ideal`` and ``broken`` (ideal without the Z
    correction).
    """
    if n_samples < MIN_TV_SAMPLES:
        raise ValueError(f"need at least {MIN_TV_SAMPLES} samples")
    d = distinguisher or Distinguisher()

    def draw(world):
        if world == "real":
            u2, kets = sample_real(u, d.state, n_samples, rng)
        elif world in ("ideal", "broken"):
            u2, kets = sample_ideal(u, d.state, n_samples, rng, drop_z=world == "broken")
        else:
            raise ValueError(f"unknown world {world!r}")
        return u2, d.outcomes(u2, kets, rng)

    return tv_distance(draw(worlds[0]), draw(worlds[1]))
