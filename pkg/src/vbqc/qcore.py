"""Small-register quantum mechanics: states, gates, measurements, channels.

Everything here is dense and limited to 1-3 qubits. Qubit 0 is the most
significant tensor factor. Functions never mutate their inputs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels

STRUCT_TOL = 1e-9
PROB_TOL = 1e-12
EIG_CLAMP = 1e-12
MAX_QUBITS = 3

# Structural checks after every operation; enabled by the test suite.
DEBUG_CHECKS = os.environ.get("VBQC_DEBUG", "") in ("1", "true", "yes")


class DimensionError(ValueError):
    pass


def _nqubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 2 or 1 << n != dim or n > MAX_QUBITS:
        raise DimensionError(f"dimension {dim} is not 2, 4 or 8")
    return n


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Density operator on 1-3 qubits."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"density matrix must be square, got {m.shape}")
        _nqubits(m.shape[0])
        object.__setattr__(self, "matrix", m)
        if DEBUG_CHECKS:
            check_state(self)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return _nqubits(self.dim)

    @classmethod
    def from_ket(cls, ket) -> "QuantumState":
        v = np.asarray(ket, dtype=np.complex128).ravel()
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def basis(cls, bits: Sequence[int] | int) -> "QuantumState":
        if isinstance(bits, (int, np.integer)):
            bits = [int(bits)]
        idx = int("".join(str(int(b)) for b in bits), 2)
        v = np.zeros(2 ** len(bits))
        v[idx] = 1.0
        return cls.from_ket(v)

    @classmethod
    def maximally_mixed(cls, n_qubits: int = 1) -> "QuantumState":
        d = 2**n_qubits
        return cls(np.eye(d) / d)

    def tensor(self, other: "QuantumState") -> "QuantumState":
        return QuantumState(np.kron(self.matrix, other.matrix))

    def conj(self) -> "QuantumState":
        return QuantumState(self.matrix.conj())

    def __repr__(self):
        return f"QuantumState(dim={self.dim})"


def check_state(state: QuantumState, tol: float = STRUCT_TOL) -> None:
    m = state.matrix
    if abs(np.trace(m) - 1.0) > tol:
        raise ValueError(f"trace {np.trace(m)} != 1")
    if np.max(np.abs(m - m.conj().T)) > tol:
        raise ValueError("matrix is not Hermitian")
    if np.min(np.linalg.eigvalsh(m)) < -tol:
        raise ValueError("matrix has negative eigenvalues")


@dataclass(frozen=True, eq=False)
class UnitaryOp:
    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        _nqubits(m.shape[0])
        if np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0]))) > STRUCT_TOL:
            raise ValueError(f"{self.name or 'operator'} is not unitary")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dagger(self) -> "UnitaryOp":
        return UnitaryOp(self.matrix.conj().T, self.name + "^dag")

    def __matmul__(self, other: "UnitaryOp") -> "UnitaryOp":
        return UnitaryOp(self.matrix @ other.matrix, f"{self.name}*{other.name}")


_SQ2 = np.sqrt(0.5)

I2 = UnitaryOp(np.eye(2), "I")
X = UnitaryOp([[0, 1], [1, 0]], "X")
Y = UnitaryOp([[0, -1j], [1j, 0]], "Y")
Z = UnitaryOp([[1, 0], [0, -1]], "Z")
H = UnitaryOp(_SQ2 * np.array([[1, 1], [1, -1]]), "H")
S = UnitaryOp([[1, 0], [0, 1j]], "S")
CZ = UnitaryOp(np.diag([1, 1, 1, -1]), "CZ")
SWAP = UnitaryOp([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], "SWAP")
# |01> -> i|10>, |10> -> i|01>; equals SWAP . (S x S) . CZ
ISWAP = UnitaryOp([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], "iSWAP")


def zrot(angle: float) -> UnitaryOp:
    """exp(-i angle/2 Z)."""
    return UnitaryOp(np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)]), f"Z({angle:.4g})")


def xrot(angle: float) -> UnitaryOp:
    """exp(-i angle/2 X)."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return UnitaryOp([[c, -1j * s], [-1j * s, c]], f"X({angle:.4g})")


def equatorial_ket(angle: float) -> np.ndarray:
    """(|0> + e^{i angle}|1>)/sqrt 2."""
    return np.array([_SQ2, _SQ2 * np.exp(1j * angle)])


PLUS = QuantumState.from_ket([1, 1])
MINUS = QuantumState.from_ket([1, -1])
ZERO = QuantumState.basis(0)
ONE = QuantumState.basis(1)


@dataclass(frozen=True)
class MeasBasis:
    """``kind`` is ``"B"`` (equatorial, angle in radians) or ``"Z"``.

    Outcome 0 is the +1 eigenvector: (|0> + e^{i angle}|1>)/sqrt 2 for B,
    |0> for Z.
    """

    kind: str
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in ("B", "Z"):
            raise ValueError(f"unknown basis kind {self.kind!r}")

    @classmethod
    def b(cls, angle: float) -> "MeasBasis":
        return cls("B", float(angle))

    @classmethod
    def z(cls) -> "MeasBasis":
        return cls("Z")

    def vectors(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "Z":
            return np.array([1.0, 0.0], dtype=complex), np.array([0.0, 1.0], dtype=complex)
        return equatorial_ket(self.angle), equatorial_ket(self.angle + np.pi)


@dataclass(frozen=True)
class Channel:
    """Single-qubit noise channel acting on ``target``.

    kinds: ``depolarize`` (strength in [0, 1]), ``dephase`` (Z-flip
    probability), ``z_rotation`` (angle, radians), ``bitflip`` (probability).
    """

    kind: str
    param: float
    target: int = 0

    def __post_init__(self):
        if self.kind not in ("depolarize", "dephase", "z_rotation", "bitflip"):
            raise ValueError(f"unknown channel {self.kind!r}")
        if self.kind != "z_rotation" and not 0.0 <= self.param <= 1.0:
            raise ValueError(f"{self.kind} parameter {self.param} outside [0, 1]")

    def kraus(self) -> list[np.ndarray]:
        p = self.param
        if self.kind == "depolarize":
            # (1-lam) rho + lam I/2  ==  Pauli channel with weight lam/4 each
            return [
                np.sqrt(1 - 3 * p / 4) * I2.matrix,
                np.sqrt(p / 4) * X.matrix,
                np.sqrt(p / 4) * Y.matrix,
                np.sqrt(p / 4) * Z.matrix,
            ]
        if self.kind == "dephase":
            return [np.sqrt(1 - p) * I2.matrix, np.sqrt(p) * Z.matrix]
        if self.kind == "bitflip":
            return [np.sqrt(1 - p) * I2.matrix, np.sqrt(p) * X.matrix]
        return [zrot(p).matrix]


def depolarizing_strength(fidelity: float) -> float:
    """Depolarizing strength that leaves a pure qubit at ``fidelity``."""
    if not 0.5 <= fidelity <= 1.0:
        raise ValueError(f"fidelity {fidelity} outside [0.5, 1]")
    return 2.0 * (1.0 - fidelity)


def _check_targets(state: QuantumState, targets: Sequence[int]) -> int:
    n = state.n_qubits
    if len(set(targets)) != len(targets):
        raise ValueError(f"repeated target in {targets}")
    for t in targets:
        if not 0 <= t < n:
            raise IndexError(f"qubit {t} out of range for {n}-qubit state")
    return n


def _wrap(matrix: np.ndarray) -> QuantumState:
    return QuantumState(matrix)


def apply_unitary(state: QuantumState, u: UnitaryOp, targets: Sequence[int]) -> QuantumState:
    targets = list(targets)
    n = _check_targets(state, targets)
    if u.dim != 2 ** len(targets):
        raise DimensionError(f"{u.dim}x{u.dim} operator on {len(targets)} target(s)")
    if len(targets) == 1:
        return _wrap(kernels.apply_1q(state.matrix, u.matrix, targets[0], n))
    if len(targets) == 2:
        return _wrap(kernels.apply_2q(state.matrix, u.matrix, targets[0], targets[1], n))
    # full-register three-qubit operator, permuted into place
    perm = targets + [i for i in range(n) if i not in targets]
    full = _embed(u.matrix, perm, n)
    return _wrap(full @ state.matrix @ full.conj().T)


def _embed(m: np.ndarray, perm: list[int], n: int) -> np.ndarray:
    k = int(np.log2(m.shape[0]))
    big = np.kron(m, np.eye(2 ** (n - k)))
    t = big.reshape((2,) * (2 * n))
    inv = np.argsort(perm)
    t = t.transpose(list(inv) + [n + i for i in inv])
    return t.reshape(2**n, 2**n)


def outcome_probs(state: QuantumState, basis: MeasBasis, target: int) -> tuple[float, float]:
    n = _check_targets(state, [target])
    v0, _ = basis.vectors()
    p0, _ = kernels.project(state.matrix, v0, target, n)
    p0 = min(max(p0, 0.0), 1.0)
    return p0, 1.0 - p0


def measure(state: QuantumState, basis: MeasBasis, target: int, rng) -> tuple[int, QuantumState | None]:
    """Sample an outcome; the measured qubit is removed from the register.

    Returns ``None`` as the post-state when the register had one qubit.
    """
    n = _check_targets(state, [target])
    v0, v1 = basis.vectors()
    p0, red0 = kernels.project(state.matrix, v0, target, n)
    bit = 0 if rng.random() < p0 else 1
    if n == 1:
        return bit, None
    if bit == 0:
        red, p = red0, p0
    else:
        p, red = kernels.project(state.matrix, v1, target, n)
    return bit, QuantumState(red / p)


def post_measurement(state: QuantumState, basis: MeasBasis, target: int, bit: int) -> tuple[float, QuantumState | None]:
    """Deterministic twin of :func:`measure` for a chosen outcome."""
    n = _check_targets(state, [target])
    v = basis.vectors()[bit]
    p, red = kernels.project(state.matrix, v, target, n)
    if n == 1 or p <= PROB_TOL:
        return p, None
    return p, QuantumState(red / p)


def apply_channel(state: QuantumState, ch: Channel) -> QuantumState:
    n = _check_targets(state, [ch.target])
    if ch.kind == "depolarize":
        return _wrap(kernels.depolarize(state.matrix, ch.param, ch.target, n))
    if ch.kind == "dephase":
        return _wrap(kernels.dephase(state.matrix, ch.param, ch.target, n))
    if ch.kind == "z_rotation":
        return _wrap(kernels.apply_1q(state.matrix, zrot(ch.param).matrix, ch.target, n))
    out = np.zeros_like(state.matrix)
    for k in ch.kraus():
        out += kernels.apply_1q(state.matrix, k, ch.target, n)
    return _wrap(out)


def partial_trace(state: QuantumState, keep: Sequence[int]) -> QuantumState:
    keep = list(keep)
    n = _check_targets(state, keep)
    if not keep:
        raise ValueError("keep at least one qubit")
    return QuantumState(kernels.partial_trace(state.matrix, keep, n))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def _pure_vector(m: np.ndarray) -> np.ndarray | None:
    w, v = np.linalg.eigh(m)
    if w[-1] > 1.0 - STRUCT_TOL:
        return v[:, -1]
    return None


def fidelity(a: QuantumState, b: QuantumState) -> float:
    """Uhlmann fidelity (squared convention): |<a|b>|^2 for pure states."""
    if a.dim != b.dim:
        raise DimensionError("fidelity between states of different dimension")
    for x, y in ((a, b), (b, a)):
        v = _pure_vector(x.matrix)
        if v is not None:
            return float(min(max(np.real(v.conj() @ y.matrix @ v), 0.0), 1.0))
    if a.dim == 2:
        det = np.real(np.linalg.det(a.matrix) * np.linalg.det(b.matrix))
        f = np.real(np.trace(a.matrix @ b.matrix)) + 2 * np.sqrt(max(det, 0.0))
        return float(min(max(f, 0.0), 1.0))
    sa = _psd_sqrt(a.matrix)
    inner = sa @ b.matrix @ sa
    w = np.clip(np.linalg.eigvalsh((inner + inner.conj().T) / 2), 0.0, None)
    return float(min(max(np.sum(np.sqrt(w)) ** 2, 0.0), 1.0))


def von_neumann_entropy(state: QuantumState) -> float:
    w = np.linalg.eigvalsh(state.matrix)
    w = w[w > EIG_CLAMP]
    return float(max(-np.sum(w * np.log2(w)), 0.0))


def bloch_vector(state: QuantumState) -> tuple[float, float, float]:
    if state.dim != 2:
        raise DimensionError("Bloch vector needs a single qubit")
    m = state.matrix
    return (
        float(2 * np.real(m[0, 1])),
        float(-2 * np.imag(m[0, 1])),
        float(np.real(m[0, 0] - m[1, 1])),
    )


def from_bloch(b: Sequence[float]) -> QuantumState:
    bx, by, bz = b
    return QuantumState(0.5 * np.array([[1 + bz, bx - 1j * by], [bx + 1j * by, 1 - bz]]))
