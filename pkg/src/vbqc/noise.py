"""Fidelity budget and its translation into channels on the simulated qubits."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .polarisation import DetectorPovm


@dataclass(frozen=True)
class FidelityBudget:
    steer_equatorial: float = 0.973  # delay-compensated calibration
    steer_equatorial_uncal: float = 0.924  # combined-herald calibration
    steer_z: float = 0.996
    iswap: float = 0.913
    transfer: float = 0.973  # after error detection
    memory_map: float = 0.98

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not 0.5 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0.5, 1]")

    @classmethod
    def ideal(cls) -> "FidelityBudget":
        return cls(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)


@dataclass(frozen=True)
class LinkConfig:
    p_herald_per_attempt: float = 0.01
    timeout_attempts: int = 1000
    attempt_us: float = 1.0
    durations_us: dict = field(default_factory=lambda: {
        "transfer": 400.0,
        "iswap": 340.0,
        "readout": 135.0,
        "deshelve": 50.0,
        "cooling": 230.0,
        "outcome_comm": 150.0,
    })
    continue_on_loss: bool = False
    fresh_randomness_on_retry: bool = False

    def __post_init__(self):
        if not 0.0 < self.p_herald_per_attempt <= 1.0:
            raise ValueError("p_herald_per_attempt must lie in (0, 1]")
        if self.timeout_attempts < 1:
            raise ValueError("timeout_attempts must be positive")
        if self.attempt_us < 0 or any(v < 0 for v in self.durations_us.values()):
            raise ValueError("durations must be non-negative")


@dataclass(frozen=True)
class TimingModel:
    lifetime_ns: float = 8.0
    delay_s_ns: float = 26.57
    delay_p_ns: float = 20.0
    jitter_ns: float = 0.3
    jitter_s_ns: float | None = None  # per-detector override, defaults to jitter_ns
    resolution_ns: float = 1.0
    zeeman_rad_per_ns: float = 2 * np.pi * 14e6 * 1e-9

    def __post_init__(self):
        if self.lifetime_ns <= 0:
            raise ValueError("lifetime must be positive")
        if self.delay_s_ns < 0 or self.delay_p_ns < 0:
            raise ValueError("delays must be non-negative")
        if self.jitter_ns < 0 or (self.jitter_s_ns is not None and self.jitter_s_ns < 0):
            raise ValueError("jitter must be non-negative")
        if self.resolution_ns < 0:
            raise ValueError("resolution must be non-negative")

    @property
    def delay_difference_ns(self) -> float:
        return self.delay_s_ns - self.delay_p_ns

    def jitter(self, detector: str) -> float:
        if detector == "s" and self.jitter_s_ns is not None:
            return self.jitter_s_ns
        return self.jitter_ns

    def delay(self, detector: str) -> float:
        return self.delay_s_ns if detector == "s" else self.delay_p_ns

    def matched(self) -> "TimingModel":
        return replace(self, delay_s_ns=self.delay_p_ns, jitter_s_ns=None)

    def herald_phase(self, detector: str) -> float:
        """Z rotation picked up by the ion on an s herald, relative to p."""
        return self.zeeman_rad_per_ns * (self.delay(detector) - self.delay_p_ns)


@dataclass(frozen=True)
class NoiseModel:
    budget: FidelityBudget = field(default_factory=FidelityBudget)
    link: LinkConfig = field(default_factory=LinkConfig)
    timing: TimingModel = field(default_factory=TimingModel)
    povm: DetectorPovm = field(default_factory=DetectorPovm)
    p_errdetect: float = 0.1
    error_detection: bool = True
    # True: analyser calibration accounts for the herald delay mismatch
    timing_calibrated: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p_errdetect <= 1.0:
            raise ValueError("p_errdetect outside [0, 1]")

    @classmethod
    def ideal(cls, **overrides) -> "NoiseModel":
        base = cls(
            budget=FidelityBudget.ideal(),
            timing=TimingModel(delay_s_ns=20.0, delay_p_ns=20.0, jitter_ns=0.0),
            p_errdetect=0.0,
        )
        return replace(base, **overrides)

    def transfer_fidelity(self) -> float:
        # without detection the raw (iSWAP-grade) transfer error applies
        return self.budget.transfer if self.error_detection else self.budget.iswap

    def steering_channels(self, detector: str, z_target: bool) -> tuple[float, float, float]:
        """(z_phase, depolarizing lambda, residual lambda) for one herald.

        Without timing calibration the s branch carries an uncompensated Z
        rotation. The combined-herald calibration then leaves a residual
        depolarisation sized so the herald-averaged equatorial fidelity is
        the uncalibrated budget value.
        """
        b = self.budget
        if z_target:
            return 0.0, 2 * (1 - b.steer_z), 0.0
        lam = 2 * (1 - b.steer_equatorial)
        if self.timing_calibrated:
            return 0.0, lam, 0.0
        phase = self.timing.herald_phase(detector)
        phi = self.timing.herald_phase("s")
        shrink = (1 - lam) * (1 + np.cos(phi)) / 2
        residual = 0.0
        if shrink > 0:
            s2 = (2 * b.steer_equatorial_uncal - 1) / shrink
            residual = max(0.0, 1.0 - s2)
        return phase, lam, min(residual, 1.0)
