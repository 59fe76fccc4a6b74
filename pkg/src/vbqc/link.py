"""Heralded remote state preparation over the simulated ion-photon link.

The link harness is the only owner of the joint photon-ion state. The
client contributes an analyser setting, the server receives the steered
network qubit, and only the herald record is public.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import LinkConfig, NoiseModel, TimingModel
from .polarisation import DetectorPovm, KET_H, KET_V
from .qcore import Channel, QuantumState, apply_channel, equatorial_ket

# ion-photon pair (|V>|0> + |H>|1>)/sqrt(2), photon first
BELL_KET = (np.kron(KET_V, [1, 0]) + np.kron(KET_H, [0, 1])) / np.sqrt(2)
BELL_STATE = QuantumState.from_ket(BELL_KET)

DETECTORS = ("p", "s")


class Timeout(Exception):
    """No herald within the configured number of attempts."""

    def __init__(self, attempts: int):
        super().__init__(f"no herald after {attempts} attempts")
        self.attempts = attempts


@dataclass(frozen=True)
class RspTarget:
    """Requested ion state: an equatorial octant or a Z eigenstate."""

    kind: str  # "theta" or "z"
    value: int

    def __post_init__(self):
        if self.kind not in ("theta", "z"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        object.__setattr__(self, "value", int(self.value) % (8 if self.kind == "theta" else 2))

    @classmethod
    def theta(cls, octant: int) -> "RspTarget":
        return cls("theta", int(octant))

    @classmethod
    def z(cls, bit: int) -> "RspTarget":
        return cls("z", int(bit))

    def ion_ket(self, c: int = 0) -> np.ndarray:
        """Ion state prepared on herald ``c`` with ideal optics."""
        if self.kind == "theta":
            return equatorial_ket(np.pi / 4 * ((self.value + 4 * c) % 8))
        ket = np.zeros(2, dtype=complex)
        ket[self.value ^ c] = 1.0
        return ket

    def photon_projector_ket(self) -> np.ndarray:
        """Photon polarisation that the analyser routes to port p."""
        # <phi| (|V>|0> + |H>|1>) must be proportional to ion_ket(0)
        ion = self.ion_ket(0)
        return np.conj(ion[1]) * KET_H + np.conj(ion[0]) * KET_V


@dataclass(frozen=True)
class HeraldRecord:
    detector: str
    attempts: int
    timestamp_ns: int

    @property
    def bit(self) -> int:
        return DETECTORS.index(self.detector)


@dataclass(frozen=True)
class RspResult:
    herald: HeraldRecord
    state: QuantumState
    c: int


def herald_timestamp(detector: str, tm: TimingModel, rng) -> int:
    t = rng.exponential(tm.lifetime_ns) + tm.delay(detector)
    j = tm.jitter(detector)
    if j > 0:
        t += rng.normal(0.0, j)
    if tm.resolution_ns > 0:
        return int(np.floor(t / tm.resolution_ns) * tm.resolution_ns)
    return int(round(t))


def analyser_unitary_for(target: RspTarget) -> np.ndarray:
    """Ideal analyser: the target photon state to port p (H), its complement to s (V)."""
    t = target.photon_projector_ket()
    perp = np.array([-np.conj(t[1]), np.conj(t[0])])
    return np.outer(KET_H, t.conj()) + np.outer(KET_V, perp.conj())


def steered_branches(target: RspTarget, povm: DetectorPovm) -> dict[str, np.ndarray]:
    """Unnormalised ion states for each herald, from the joint-state projection."""
    a = analyser_unitary_for(target)
    el = povm.elements()
    rho = BELL_STATE.matrix.reshape(2, 2, 2, 2)  # photon, ion, photon', ion'
    out = {}
    for det in DETECTORS:
        effect = a.conj().T @ el[det] @ a
        out[det] = np.einsum("ab,bjak->jk", effect, rho)
    return out


def steer(target: RspTarget, povm: DetectorPovm, rng) -> tuple[int, QuantumState, float]:
    """Sample a herald given a detection. Returns (c, ion state, detection prob)."""
    branches = steered_branches(target, povm)
    probs = np.array([np.real(np.trace(branches[d])) for d in DETECTORS])
    total = probs.sum()
    if total <= 0:
        raise ValueError("detectors never click")
    c = int(rng.random() * total >= probs[0])
    sigma = branches[DETECTORS[c]] / probs[c]
    return c, QuantumState(sigma), float(total)


def apply_steering_noise(state: QuantumState, target: RspTarget, c: int, noise: NoiseModel) -> QuantumState:
    phase, lam, residual = noise.steering_channels(DETECTORS[c], target.kind == "z")
    if phase:
        state = apply_channel(state, Channel("z_rotation", phase, 0))
    if lam:
        state = apply_channel(state, Channel("depolarize", lam, 0))
    if residual:
        state = apply_channel(state, Channel("depolarize", residual, 0))
    return state


def sample_attempts(cfg: LinkConfig, detection_prob: float, rng) -> int | None:
    """Attempts until herald, or None on timeout."""
    # detection_prob is a trace and may exceed 1 by rounding
    p = min(cfg.p_herald_per_attempt * detection_prob, 1.0)
    if p <= 0:
        return None
    n = int(rng.geometric(p))
    return n if n <= cfg.timeout_attempts else None


def rsp_round(target: RspTarget, noise: NoiseModel, rng) -> RspResult:
    """One heralded preparation. Raises Timeout when no herald arrives."""
    c, state, detection = steer(target, noise.povm, rng)
    attempts = sample_attempts(noise.link, detection, rng)
    if attempts is None:
        raise Timeout(noise.link.timeout_attempts)
    det = DETECTORS[c]
    stamp = herald_timestamp(det, noise.timing, rng)
    state = apply_steering_noise(state, target, c, noise)
    return RspResult(HeraldRecord(det, attempts, stamp), state, c)


def lost_photon_round(noise: NoiseModel, rng) -> RspResult:
    """Continue-on-loss stand-in: the ion is left maximally mixed."""
    c = int(rng.integers(2))
    stamp = herald_timestamp(DETECTORS[c], noise.timing, rng)
    return RspResult(
        HeraldRecord(DETECTORS[c], noise.link.timeout_attempts, stamp),
        QuantumState.maximally_mixed(1),
        c,
    )


def round_latency(cfg: LinkConfig, attempts: int, retries: int = 0) -> float:
    """Wall-clock estimate in microseconds for one round's step sequence."""
    fixed = sum(cfg.durations_us.values())
    return attempts * cfg.attempt_us + (1 + retries) * fixed


def prepare(target: RspTarget, noise: NoiseModel, rng) -> RspResult:
    """rsp_round, or a lost-photon stand-in when configured to continue on loss."""
    try:
        return rsp_round(target, noise, rng)
    except Timeout:
        if noise.link.continue_on_loss:
            return lost_photon_round(noise, rng)
        raise


def init_with_retry(client, noise: NoiseModel, link_rng, server_rng, client_rng=None, on_herald=None, on_m_err=None):
    """Initialise the memory, repeating until the transfer reports no error.

    The analyser target for qubit 1 is kept across retries unless the link
    is configured for fresh randomness; the herald is resampled each time.
    ``on_herald`` sees every herald record and ``on_m_err`` maps the device
    flag to the announced one. Returns (server state, attempts, retries).
    """
    from .protocol import server_init_step

    attempts = retries = 0
    while True:
        res = prepare(client.target(1), noise, link_rng)
        attempts += res.herald.attempts
        client.on_herald(1, res.c)
        if on_herald is not None:
            on_herald(res.herald)
        m_err, st = server_init_step(res.state, noise, server_rng)
        if on_m_err is not None:
            m_err = on_m_err(m_err)
        if m_err == 0:
            return st, attempts, retries
        retries += 1
        if noise.link.fresh_randomness_on_retry and client_rng is not None:
            client.refresh(1, client_rng)
