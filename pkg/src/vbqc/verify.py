"""Acceptance thresholds, failure-rate estimates and repetition statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import FidelityBudget


def omega_max(q: int) -> float:
    """Largest admissible failure threshold for a q-step cluster."""
    if q < 1:
        raise ValueError("q must be >= 1")
    return 1.0 - 0.75 ** (2.0 / q)


@dataclass(frozen=True)
class TrapEstimates:
    p_trap1: float
    p_dummy: float
    p_trap2: float
    p_mean: float


def trap_estimates(b: FidelityBudget) -> TrapEstimates:
    """First-order failure probabilities from the component fidelities.

    A first-position trap passes through two memory maps, one iSWAP, the
    transfer and its own preparation; a final-position trap sees one iSWAP
    and its preparation; a Z-read dummy sees one iSWAP and a Z preparation.
    """
    p1 = 1 - b.memory_map * b.iswap * b.memory_map * b.transfer * b.steer_equatorial_uncal
    pd = 1 - b.iswap * b.steer_z
    p2 = 1 - b.iswap * b.steer_equatorial_uncal
    return TrapEstimates(p1, pd, p2, (p1 + p2) / 2)


@dataclass(frozen=True)
class VerifyConfig:
    n_rounds: int
    tau: float = 0.6
    omega: float = 0.215
    p_max: float = 0.185
    q: int = 2

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be positive")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if not 0 < self.omega < 1:
            raise ValueError("omega must lie in (0, 1)")

    @property
    def test_rounds(self) -> int:
        # floor: a partial test round is never counted
        return int(math.floor(self.tau * self.n_rounds))


@dataclass(frozen=True)
class Decision:
    accept: bool
    p_fail_hat: float


def accept(failures: int, tests: int, omega: float) -> Decision:
    if tests <= 0:
        raise ValueError("need at least one test round")
    if not 0 <= failures <= tests:
        raise ValueError("failures must lie in [0, tests]")
    p = failures / tests
    return Decision(p < omega, p)


@dataclass(frozen=True)
class HoeffdingBounds:
    pr_reject_bound: float
    pr_accept_bad_bound: float


def hoeffding_rates(cfg: VerifyConfig, p_true: float) -> HoeffdingBounds:
    """One-sided Hoeffding bounds for both error directions.

    ``pr_reject_bound`` bounds rejecting an honest run whose failure rate is
    ``p_true``; ``pr_accept_bad_bound`` bounds accepting a run whose failure
    rate is at least the size-dependent maximum.
    """
    w_max = omega_max(cfg.q)
    if cfg.omega < p_true or cfg.omega >= w_max:
        raise ValueError(f"omega={cfg.omega} outside [{p_true}, {w_max})")
    t = cfg.test_rounds
    return HoeffdingBounds(
        math.exp(-2 * t * (cfg.omega - p_true) ** 2),
        math.exp(-2 * t * (w_max - cfg.omega) ** 2),
    )


@dataclass(frozen=True)
class DecayPoint:
    n: int
    tests: int
    reject_rate: float
    std_err: float
    bound: float


@dataclass(frozen=True)
class DecayFit:
    slope: float  # natural-log reject rate per round
    intercept: float
    r2: float

    @property
    def halving_rounds(self) -> float:
        return math.log(2) / -self.slope if self.slope < 0 else math.inf


def _reject_threshold(tests: int, omega: float) -> int:
    # reject iff k/t >= omega
    return int(math.ceil(omega * tests - 1e-12))


def monte_carlo_decay(
    n_grid, p_true: float, trials: int, rng, tau: float = 0.6, omega: float = 0.215
) -> list[DecayPoint]:
    """Empirical probability of rejecting an honest run, per total round count.

    Failures are drawn from a binomial tilted to the threshold and reweighted
    by the likelihood ratio, so tail probabilities far below 1/trials are
    still resolved.
    """
    out = []
    for n in n_grid:
        t = int(math.floor(tau * n))
        kmin = _reject_threshold(t, omega)
        if p_true <= 0:
            rate, err = 0.0, 0.0
        else:
            tilt = min(max(omega, p_true), 1 - 1e-12)
            k = rng.binomial(t, tilt, size=trials)
            logw = k * (math.log(p_true) - math.log(tilt))
            if p_true < 1:
                logw += (t - k) * (math.log1p(-p_true) - math.log1p(-tilt))
            w = np.where(k >= kmin, np.exp(logw), 0.0)
            rate = float(w.mean())
            err = float(w.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        bound = math.exp(-2 * t * max(omega - p_true, 0.0) ** 2)
        out.append(DecayPoint(int(n), t, rate, err, bound))
    return out


def fit_decay(points: list[DecayPoint]) -> DecayFit:
    """Least-squares line through log(reject rate) against n."""
    pts = [(p.n, math.log(p.reject_rate)) for p in points if p.reject_rate > 0]
    if len(pts) < 2:
        raise ValueError("need two or more positive reject rates")
    x, y = np.array(pts).T
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r2)


def three_step_trap_profile(noise, rng, rounds: int, q: int = 2) -> dict[int, float]:
    """Simulated failure rate at every checkable test position.

    Both dummy alternations are used equally. Positions measured in an
    equatorial basis report trap failures; the Z-read last qubit reports
    its dummy check.
    """
    from .session import simulate_test_rounds

    fails: dict[int, list[int]] = {}
    for v in simulate_test_rounds(noise, q, rounds, rng):
        for verdict in v:
            fails.setdefault(verdict.position, []).append(0 if verdict.passed else 1)
    return {pos: float(np.mean(f)) for pos, f in sorted(fails.items())}
