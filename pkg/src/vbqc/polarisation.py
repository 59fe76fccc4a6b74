"""Jones-calculus model of the client's fast polarisation analyser.

Polarisation kets are written in the {H, V} basis; H is the p-polarised
(transmitted) port of the PBS and V the s-polarised (reflected) port.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .qcore import UnitaryOp

KET_H = np.array([1.0, 0.0], dtype=complex)
KET_V = np.array([0.0, 1.0], dtype=complex)
KET_P = KET_H
KET_S = KET_V

# quarter- and half-wave retardances measured on the scan waveplates (turns)
MEASURED_QWP_RETARDANCE = 0.2584
MEASURED_HWP_RETARDANCE = 0.5000

# PBS extinction in power: s light transmitted (T_s/T_p) and p light
# reflected (R_p/R_s). In DetectorPovm, eps_p is the weight of |s> in the
# p-detector element and eps_s the weight of |p> in the s-detector element.
TRANSMITTED_S_RATIO = 0.5e-4
REFLECTED_P_RATIO = 1.3e-4

# median overlap between the two input states that maximise each port
MEDIAN_PORT_OVERLAP = 0.0016
DEFAULT_PORT_MISMATCH_RAD = 2.0 * np.arcsin(np.sqrt(MEDIAN_PORT_OVERLAP))

SCAN_QWP_ANGLES = (-np.pi / 4, 0.0, np.pi / 4)
SCAN_HWP_ANGLES = (-np.pi / 8, 0.0, np.pi / 8, np.pi / 4)


@dataclass(frozen=True)
class JonesState:
    amplitudes: tuple[complex, complex]

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if abs(np.linalg.norm(a) - 1.0) > 1e-9:
            raise ValueError("Jones vector must be normalised")
        object.__setattr__(self, "amplitudes", (complex(a[0]), complex(a[1])))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.amplitudes, dtype=complex)

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "JonesState":
        """cos(theta/2)|H> + sin(theta/2) e^{i phi}|V>."""
        return cls((np.cos(theta / 2), np.sin(theta / 2) * np.exp(1j * phi)))

    @classmethod
    def h(cls) -> "JonesState":
        return cls((1.0, 0.0))

    @classmethod
    def v(cls) -> "JonesState":
        return cls((0.0, 1.0))


@dataclass(frozen=True)
class WaveplateSpec:
    retardance: float  # turns
    angle: float = 0.0  # radians, fast axis against H

    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        half = np.pi * self.retardance
        return rot @ np.diag([np.exp(1j * half), np.exp(-1j * half)]) @ rot.T

    def unitary(self) -> UnitaryOp:
        return UnitaryOp(self.matrix(), "WP")


IDEAL_QWP = WaveplateSpec(0.25)
IDEAL_HWP = WaveplateSpec(0.5)


@dataclass(frozen=True)
class EomSpec:
    phase_per_volt: float  # rad / V
    offset: float = 0.0

    def phase(self, voltage: float) -> float:
        return self.offset + self.phase_per_volt * voltage

    def unitary(self, voltage: float) -> np.ndarray:
        """exp(-i phi(U)/2 X) about the crystal's extraordinary axis."""
        phi = self.phase(voltage)
        c, s = np.cos(phi / 2), np.sin(phi / 2)
        return np.array([[c, -1j * s], [-1j * s, c]])


# half-wave voltage of 1 kV per crystal; offsets absorbed by calibration
DEFAULT_EOM = EomSpec(phase_per_volt=np.pi / 1000.0)


def analyser_unitary(
    eoms: tuple[EomSpec, EomSpec],
    voltages: tuple[float, float],
    internal_qwp: WaveplateSpec = IDEAL_QWP,
    pre_chain: np.ndarray | None = None,
    post_chain: np.ndarray | None = None,
) -> UnitaryOp:
    """P_BS R(U_b) Q_WP R(U_a), with optional static birefringence chains."""
    ea, eb = eoms
    ua, ub = voltages
    m = eb.unitary(ub) @ internal_qwp.matrix() @ ea.unitary(ua)
    if pre_chain is not None:
        m = m @ pre_chain
    if post_chain is not None:
        m = post_chain @ m
    pbs = np.diag([1.0, -1.0])
    return UnitaryOp(pbs @ m, "analyser")


def analysed_state(u: UnitaryOp, port: str = "p") -> np.ndarray:
    """Input polarisation fully routed to ``port`` by analyser ``u``."""
    ket = KET_P if port == "p" else KET_S
    return u.matrix.conj().T @ ket


def poincare_vector(ket: np.ndarray) -> np.ndarray:
    a, b = ket
    return np.array([2 * np.real(np.conj(a) * b), 2 * np.imag(np.conj(a) * b), abs(a) ** 2 - abs(b) ** 2])


def transmitted_fraction(psi: JonesState, qwp: WaveplateSpec, hwp: WaveplateSpec) -> float:
    """t = |<psi| Q(q) H(h) |H>|^2 for the precharacterisation scan."""
    amp = psi.vector.conj() @ qwp.matrix() @ hwp.matrix() @ KET_H
    return float(abs(amp) ** 2)


def standard_scan_settings() -> list[tuple[float, float]]:
    return [(q, h) for q in SCAN_QWP_ANGLES for h in SCAN_HWP_ANGLES]


def synthesize_scan(
    theta: float,
    phi: float,
    settings: Iterable[tuple[float, float]] | None = None,
    qwp_retardance: float = MEASURED_QWP_RETARDANCE,
    hwp_retardance: float = MEASURED_HWP_RETARDANCE,
    noise: float = 0.0,
    rng=None,
) -> list[tuple[float, float, float]]:
    psi = JonesState.from_angles(theta, phi)
    out = []
    for q, h in settings or standard_scan_settings():
        t = transmitted_fraction(psi, WaveplateSpec(qwp_retardance, q), WaveplateSpec(hwp_retardance, h))
        if noise:
            t += rng.normal(0.0, noise)
        out.append((q, h, t))
    return out


@dataclass(frozen=True)
class FitResult:
    theta: float
    phi: float
    residual: float
    phi_identifiable: bool
    ill_conditioned: bool


def _model(params, qs, hs, qwp_ret, hwp_ret):
    theta, phi = params
    psi = np.array([np.cos(theta / 2), np.sin(theta / 2) * np.exp(1j * phi)])
    out = np.empty(len(qs))
    for i, (q, h) in enumerate(zip(qs, hs)):
        amp = psi.conj() @ WaveplateSpec(qwp_ret, q).matrix() @ WaveplateSpec(hwp_ret, h).matrix() @ KET_H
        out[i] = abs(amp) ** 2
    return out


def fit_polarisation_state(
    scan: Sequence[tuple[float, float, float]],
    qwp_retardance: float = MEASURED_QWP_RETARDANCE,
    hwp_retardance: float = MEASURED_HWP_RETARDANCE,
    grid: int = 64,
) -> FitResult:
    """Least-squares fit of (theta, phi) to a waveplate scan.

    Coarse grid search followed by a local least-squares refinement.
    ``theta`` is returned in [0, pi] and ``phi`` in [0, 2 pi).
    """
    if len(scan) < 6:
        raise ValueError("need at least 6 scan points")
    qs = np.array([s[0] for s in scan], dtype=float)
    hs = np.array([s[1] for s in scan], dtype=float)
    ts = np.array([s[2] for s in scan], dtype=float)
    if np.ptp(ts) < 1e-9:
        return FitResult(float("nan"), float("nan"), float("nan"), False, True)

    # the model is a quadratic form in psi: precompute per-setting 2x2 kernels
    cols = np.array([
        WaveplateSpec(qwp_retardance, q).matrix() @ WaveplateSpec(hwp_retardance, h).matrix() @ KET_H
        for q, h in zip(qs, hs)
    ])
    th = np.linspace(0, np.pi, grid)
    ph = np.linspace(0, 2 * np.pi, grid, endpoint=False)
    T, P = np.meshgrid(th, ph, indexing="ij")
    a = np.cos(T / 2)[..., None]
    b = (np.sin(T / 2) * np.exp(1j * P))[..., None]
    pred = np.abs(a * cols[:, 0] + np.conj(b) * cols[:, 1]) ** 2
    cost = np.sum((pred - ts) ** 2, axis=-1)
    i, j = np.unravel_index(np.argmin(cost), cost.shape)

    res = least_squares(
        lambda p: _model(p, qs, hs, qwp_retardance, hwp_retardance) - ts,
        x0=[T[i, j], P[i, j]],
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
    )
    theta, phi = res.x
    # fold into the canonical chart
    theta = np.mod(theta, 2 * np.pi)
    if theta > np.pi:
        theta = 2 * np.pi - theta
        phi = phi + np.pi
    phi = float(np.mod(phi, 2 * np.pi))
    identifiable = np.sin(theta / 2) > 1e-3 and np.cos(theta / 2) > 1e-3
    return FitResult(float(theta), phi, float(np.sum(res.fun**2)), bool(identifiable), False)


@dataclass(frozen=True)
class DetectorPovm:
    """Lossy PBS + two APDs; parameters are efficiencies and extinctions."""

    eta_s: float = 1.0
    eta_p: float = 1.0
    eps_s: float = 0.0
    eps_p: float = 0.0

    def __post_init__(self):
        for name in ("eta_s", "eta_p", "eps_s", "eps_p"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} outside [0, 1]")

    def elements(self) -> dict[str, np.ndarray]:
        pp = np.outer(KET_P, KET_P.conj())
        ss = np.outer(KET_S, KET_S.conj())
        f_p = self.eta_p * (1 - self.eps_s) * pp + self.eta_s * self.eps_p * ss
        f_s = self.eta_s * (1 - self.eps_p) * ss + self.eta_p * self.eps_s * pp
        return {"p": f_p, "s": f_s, "0": np.eye(2) - f_p - f_s}


MEASURED_EXTINCTION_POVM = DetectorPovm(eps_s=REFLECTED_P_RATIO, eps_p=TRANSMITTED_S_RATIO)


def povm_probs(povm: DetectorPovm, psi: JonesState) -> tuple[float, float, float]:
    """(p_p, p_s, p_loss) for a photon in state ``psi``."""
    v = psi.vector
    el = povm.elements()
    p_p = float(np.real(v.conj() @ el["p"] @ v))
    p_s = float(np.real(v.conj() @ el["s"] @ v))
    return p_p, p_s, max(1.0 - p_p - p_s, 0.0)


def basis_overlap(u1: UnitaryOp, u2: UnitaryOp) -> float:
    """|<psi-|psi+>|^2 where psi+ (psi-) is sent to port p by u1 (port s by u2)."""
    plus = analysed_state(u1, "p")
    minus = analysed_state(u2, "s")
    return float(abs(np.vdot(minus, plus)) ** 2)


def target_analyser(target_ket: np.ndarray) -> np.ndarray:
    """Ideal analyser routing ``target_ket`` to port p and its complement to s."""
    t = np.asarray(target_ket, dtype=complex)
    t = t / np.linalg.norm(t)
    perp = np.array([-np.conj(t[1]), np.conj(t[0])])
    return np.outer(KET_P, t.conj()) + np.outer(KET_S, perp.conj())


def mismatched_analyser(target_ket: np.ndarray, mismatch: float) -> tuple[UnitaryOp, UnitaryOp]:
    """Port-p and port-s analysers that differ by a Z rotation ``mismatch``.

    Models imperfect orthogonality between the two herald projectors.
    """
    a = target_analyser(target_ket)
    rz = np.diag([np.exp(-0.5j * mismatch), np.exp(0.5j * mismatch)])
    return UnitaryOp(a, "analyser_p"), UnitaryOp(a @ rz, "analyser_s")


def direct_inversion(counts: dict[str, tuple[int, int]]) -> tuple[float, float, float]:
    """Bloch vector from per-basis readout counts ``{basis: (n_s, n_p)}``.

    ``n_p`` counts the +1 eigen-outcome of the basis and ``n_s`` the -1
    outcome (s-heralded readouts already inverted). Components are returned
    as-is, without projecting onto the unit ball.
    """
    out = []
    for b in ("X", "Y", "Z"):
        if b not in counts:
            raise ValueError(f"missing basis {b}")
        n_s, n_p = counts[b]
        total = n_s + n_p
        if total <= 0:
            raise ValueError(f"zero counts in basis {b}")
        out.append((n_p - n_s) / total)
    return tuple(out)


def read_scan_csv(path) -> list[tuple[float, float, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, ("q_rad", "h_rad", "t"), path)
        return [(float(r["q_rad"]), float(r["h_rad"]), float(r["t"])) for r in reader]


def read_counts_csv(path) -> dict[str, tuple[int, int]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, ("basis", "n_s", "n_p"), path)
        out: dict[str, tuple[int, int]] = {}
        for r in reader:
            b = r["basis"].strip().upper()
            if b not in ("X", "Y", "Z"):
                raise ValueError(f"{path}: unknown basis {r['basis']!r}")
            n_s, n_p = out.get(b, (0, 0))
            out[b] = (n_s + int(r["n_s"]), n_p + int(r["n_p"]))
        return out


def _require_columns(found, needed, path):
    missing = [c for c in needed if c not in (found or [])]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
