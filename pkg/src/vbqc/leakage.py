"""Information the server could gain about the client's preparation angles.

Quantum channels are bounded with Holevo quantities over the four
preparation bases; classical side channels (herald timing and herald rate)
with maximum-likelihood and Fisher-information arguments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import expon, exponnorm

from .noise import NoiseModel, TimingModel
from .polarisation import direct_inversion
from .qcore import QuantumState, bloch_vector, equatorial_ket, from_bloch, von_neumann_entropy, zrot

# quadratic coefficient of the exact rotated-ensemble Holevo quantity
ROTATED_COEFF = 0.103
OBSERVED_IMBALANCE_BITS = 2.9e-4
DEFAULT_MEAN_ATTEMPTS = 126.0

BASIS_OCTANTS = (0, 1, 2, 3)


@dataclass(frozen=True)
class StateEnsemble:
    states: tuple[tuple[float, QuantumState], ...]

    def __post_init__(self):
        w = np.array([p for p, _ in self.states], dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        if any(s.n_qubits != 1 for _, s in self.states):
            raise ValueError("ensemble members must be single qubits")

    @classmethod
    def uniform(cls, states: Sequence[QuantumState]) -> "StateEnsemble":
        w = 1.0 / len(states)
        return cls(tuple((w, s) for s in states))

    def average(self) -> QuantumState:
        return QuantumState(sum(p * s.matrix for p, s in self.states))


def holevo(ens: StateEnsemble) -> float:
    mix = von_neumann_entropy(ens.average())
    return max(0.0, mix - sum(p * von_neumann_entropy(s) for p, s in ens.states))


def _pure(ket) -> QuantumState:
    return QuantumState.from_ket(ket)


def _basis_ensemble(members) -> StateEnsemble:
    """Equal-weight ensemble of one mixed state per preparation basis."""
    return StateEnsemble.uniform([QuantumState(sum(w * s.matrix for w, s in m)) for m in members])


# imbalance ---------------------------------------------------------------

IMBALANCE_COEFF = (6 - math.sqrt(2)) / (4 * math.log(2))


@dataclass(frozen=True)
class ImbalanceLeakage:
    formula: float
    exact: float


def imbalance_ensemble(q_dev: float) -> StateEnsemble:
    """Each basis yields its p-state with probability 1/2 + q_dev.

    All four bases share the same orientation, the configuration with the
    smaller Holevo quantity of the two possible ones.
    """
    q = 0.5 + q_dev
    members = []
    for k in BASIS_OCTANTS:
        plus = _pure(equatorial_ket(np.pi / 4 * k))
        minus = _pure(equatorial_ket(np.pi / 4 * (k + 4)))
        members.append([(q, plus), (1 - q, minus)])
    return _basis_ensemble(members)


def holevo_imbalance(q_dev: float) -> ImbalanceLeakage:
    return ImbalanceLeakage(IMBALANCE_COEFF * q_dev**2, holevo(imbalance_ensemble(q_dev)))


def imbalance_for_bits(bits: float) -> float:
    """Outcome-probability deviation that leaks ``bits`` at leading order."""
    return math.sqrt(bits / IMBALANCE_COEFF)


# herald-dependent rotation -------------------------------------------------

@dataclass(frozen=True)
class RotationLeakage:
    approx: float
    exact: float


def rotated_ensemble(phi: float) -> StateEnsemble:
    """Equal heralds; the s branch carries an extra Z rotation by ``phi``."""
    rz = zrot(phi).matrix
    members = []
    for k in BASIS_OCTANTS:
        p_state = _pure(equatorial_ket(np.pi / 4 * k))
        s_state = _pure(rz @ equatorial_ket(np.pi / 4 * (k + 4)))
        members.append([(0.5, p_state), (0.5, s_state)])
    return _basis_ensemble(members)


def holevo_rotated(phi: float) -> RotationLeakage:
    return RotationLeakage(ROTATED_COEFF * phi**2, holevo(rotated_ensemble(phi)))


def delay_phase(tm: TimingModel) -> float:
    return tm.zeeman_rad_per_ns * tm.delay_difference_ns


# herald timing -------------------------------------------------------------

def binary_mutual_entropy(q: float) -> float:
    """1 - H2(q): information from a guess that is right with probability q."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("q outside [0, 1]")
    h = 0.0
    for x in (q, 1.0 - q):
        if x > 0:
            h -= x * math.log2(x)
    return 1.0 - h


def ml_timing_gain(hist_s, hist_p, prior_s: float = 0.5) -> float:
    """Expected information from guessing the detector by maximum likelihood."""
    hs = np.asarray(hist_s, dtype=float)
    hp = np.asarray(hist_p, dtype=float)
    if hs.shape != hp.shape:
        raise ValueError("histograms must share a bin grid")
    if hs.sum() <= 0 or hp.sum() <= 0:
        raise ValueError("empty histogram")
    js = prior_s * hs / hs.sum()
    jp = (1 - prior_s) * hp / hp.sum()
    total = js + jp
    gain = 0.0
    for a, b, t in zip(js, jp, total):
        if t > 0:
            gain += t * binary_mutual_entropy(max(a, b) / t)
    return float(gain)


def timestamp_histograms(tm: TimingModel, span_ns: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact per-detector timestamp distributions on the resolution grid.

    Returns (bin_edges, prob_s, prob_p). Arrival is exponential emission
    plus detector delay plus Gaussian jitter, floored to the resolution.
    """
    res = tm.resolution_ns or 1.0
    span = span_ns or (max(tm.delay_s_ns, tm.delay_p_ns) + 25 * tm.lifetime_ns + 10 * max(tm.jitter("s"), tm.jitter("p"), res))
    lo = math.floor((min(tm.delay_s_ns, tm.delay_p_ns) - 10 * max(tm.jitter("s"), tm.jitter("p")) - res) / res) * res
    edges = np.arange(lo, span + res, res)

    def dist(det):
        j = tm.jitter(det)
        d = tm.delay(det)
        if j > 0:
            rv = exponnorm(K=tm.lifetime_ns / j, loc=d, scale=j)
        else:
            rv = expon(loc=d, scale=tm.lifetime_ns)
        return np.diff(rv.cdf(edges))

    return edges, dist("s"), dist("p")


def read_histogram_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(bin_ns, count_s, count_p) columns of a recorded timestamp histogram."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("bin_ns", "count_s", "count_p") if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = [(float(r["bin_ns"]), float(r["count_s"]), float(r["count_p"])) for r in reader]
    if not rows:
        raise ValueError(f"{path}: no histogram rows")
    a = np.array(rows)
    return a[:, 0], a[:, 1], a[:, 2]


def timing_leakage(tm: TimingModel) -> float:
    _, hs, hp = timestamp_histograms(tm)
    return ml_timing_gain(hs, hp)


# herald rate -----------------------------------------------------------------

def fisher_exponential(mean: float) -> float:
    """Fisher information of one exponential sample about its mean."""
    if mean <= 0:
        raise ValueError("mean must be positive")
    return mean**-2


def kl_exponential(mean0: float, mean: float) -> float:
    """Relative entropy of exponential(mean0) from exponential(mean), in bits."""
    if mean0 <= 0 or mean <= 0:
        raise ValueError("means must be positive")
    nats = math.log(mean / mean0) + mean0 / mean - 1.0
    return nats / math.log(2)


# tomography ------------------------------------------------------------------

def _clip_ball(b) -> np.ndarray:
    v = np.asarray(b, dtype=float)
    n = np.linalg.norm(v)
    return v / n if n > 1 else v


def tomographic_holevo(states: Sequence[tuple[float, QuantumState]]) -> float:
    """Holevo quantity from eight reconstructed states.

    ``states`` lists (herald weight, state) for the p and s heralds of each
    of the four bases in turn; weights within a basis are renormalised.
    """
    if len(states) != 8:
        raise ValueError("expected 8 reconstructed states")
    members = []
    for i in range(4):
        (wp, sp), (ws, ss) = states[2 * i], states[2 * i + 1]
        total = wp + ws
        if total <= 0:
            raise ValueError("herald weights must be positive")
        members.append([(wp / total, sp), (ws / total, ss)])
    return holevo(_basis_ensemble(members))


def simulated_reconstructions(noise: NoiseModel, shots: int | None, rng=None) -> list[tuple[float, QuantumState]]:
    """Steer every basis, reconstruct each heralded state by direct inversion.

    ``shots`` readouts per tomography basis; ``None`` uses exact Bloch vectors.
    """
    from .link import RspTarget, apply_steering_noise, steered_branches

    out = []
    for k in BASIS_OCTANTS:
        target = RspTarget.theta(k)
        branches = steered_branches(target, noise.povm)
        for c, det in enumerate(("p", "s")):
            weight = float(np.real(np.trace(branches[det])))
            state = apply_steering_noise(QuantumState(branches[det] / weight), target, c, noise)
            b = np.array(bloch_vector(state))
            if shots is not None:
                counts = {}
                for axis, comp in zip("XYZ", b):
                    n_p = int(rng.binomial(shots, (1 + comp) / 2))
                    counts[axis] = (shots - n_p, n_p)
                b = np.array(direct_inversion(counts))
            out.append((weight, from_bloch(_clip_ball(b))))
    return out


# report ------------------------------------------------------------------------

@dataclass(frozen=True)
class LeakageConfig:
    timing: TimingModel = field(default_factory=TimingModel)
    noise: NoiseModel = field(default_factory=NoiseModel)
    mean_attempts: float = DEFAULT_MEAN_ATTEMPTS
    imbalance: float = imbalance_for_bits(OBSERVED_IMBALANCE_BITS)
    basis_phase: float | None = None  # None: from the timing delay mismatch
    tomography_shots: int | None = 20000

    @classmethod
    def optimised(cls) -> "LeakageConfig":
        """Delays matched; a small jitter difference and port mismatch remain."""
        from .polarisation import DEFAULT_PORT_MISMATCH_RAD

        tm = TimingModel(delay_s_ns=20.0, delay_p_ns=20.0, jitter_s_ns=0.35)
        return cls(timing=tm, noise=replace(NoiseModel(), timing=tm), basis_phase=DEFAULT_PORT_MISMATCH_RAD, tomography_shots=None)

    @classmethod
    def ideal(cls) -> "LeakageConfig":
        tm = TimingModel(delay_s_ns=20.0, delay_p_ns=20.0, jitter_ns=0.0)
        return cls(timing=tm, noise=NoiseModel.ideal(), mean_attempts=math.inf, imbalance=0.0, basis_phase=0.0, tomography_shots=None)


@dataclass(frozen=True)
class LeakageReport:
    classical: dict
    quantum: dict

    def __post_init__(self):
        for group in (self.classical, self.quantum):
            for k, v in group.items():
                if v is not None and v < 0:
                    raise ValueError(f"{k} negative")

    def to_dict(self) -> dict:
        return {"classical": dict(self.classical), "quantum": dict(self.quantum)}


def build_leakage_table(cfg: LeakageConfig, rng=None) -> LeakageReport:
    phi = delay_phase(cfg.timing) if cfg.basis_phase is None else cfg.basis_phase
    efficiency = 0.0 if math.isinf(cfg.mean_attempts) else fisher_exponential(cfg.mean_attempts)
    if rng is None:
        rng = np.random.default_rng(0)
    measured = tomographic_holevo(simulated_reconstructions(cfg.noise, cfg.tomography_shots, rng))
    return LeakageReport(
        classical={
            "angles": 0.0,
            "herald_efficiency": efficiency,
            "herald_delay": timing_leakage(cfg.timing),
        },
        quantum={
            "basis": holevo_rotated(phi).exact,
            "imbalance": holevo_imbalance(cfg.imbalance).formula,
            "measured_tomographic": measured,
        },
    )
