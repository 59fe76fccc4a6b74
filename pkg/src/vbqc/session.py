"""Client-side session driver and the physics harness that hosts the devices.

The harness owns every quantum object of a round. The client's logic sees
heralds and announced outcomes; the server controller sees wire messages
only, either in-process or over a socket.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass, field

import numpy as np

from .link import HeraldRecord, Timeout, init_with_retry, prepare, round_latency
from .noise import NoiseModel
from .protocol import (
    COMPUTATION,
    TEST,
    Client,
    RoundPlan,
    TrapVerdict,
    client_plan_round,
    server_final_measure,
    server_interaction_step,
)
from .server import ServerEndpoint, SessionAbort
from .wire import WireMessage, parse

MAX_RESTARTS = 50
REPLYING = ("outcome", "m_err")


@dataclass(frozen=True)
class RoundStreams:
    client: np.random.Generator
    link: np.random.Generator
    server: np.random.Generator


def _philox(seed: int, key: tuple[int, ...]) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def round_streams(seed_client: int, seed_server: int, index: int) -> RoundStreams:
    """Independent counter-based streams for one round.

    Client secrets and the client-side photon detection derive from the
    client seed, device randomness from the server seed.
    """
    return RoundStreams(
        _philox(seed_client, (index, 0)),
        _philox(seed_client, (index, 1)),
        _philox(seed_server, (index,)),
    )


class NullChannel:
    """Stand-in for the server controller when no transcript is kept."""

    redact_detector = True

    def send(self, msg: WireMessage) -> None:
        pass

    def relay(self, msg: WireMessage) -> int:
        return msg.bit


@dataclass
class RoundOutcome:
    client: Client
    attempts: int
    retries: int
    timeouts: int


def execute_round(plan: RoundPlan, noise: NoiseModel, streams: RoundStreams, channel, index: int = 0) -> RoundOutcome:
    """Run one round end to end, restarting from initialisation on timeout."""
    timeouts = 0
    lost = 0
    while True:
        client = Client(plan)
        channel.send(WireMessage("round_begin", index))
        try:
            attempts, retries = _round_body(client, noise, streams, channel, index)
            break
        except Timeout as exc:
            timeouts += 1
            lost += exc.attempts
            if timeouts > MAX_RESTARTS:
                raise SessionAbort(f"round {index}: {timeouts} consecutive link timeouts") from exc
            if noise.link.fresh_randomness_on_retry:
                plan = client_plan_round(
                    plan.q, plan.alphas, plan.round_type, streams.client, plan.final_basis
                )
    channel.send(WireMessage("round_end", index))
    return RoundOutcome(client, attempts + lost, retries, timeouts)


def _herald_message(index: int, h: HeraldRecord, redact: bool) -> WireMessage:
    return WireMessage("herald", index, None if redact else h.detector, h.attempts, h.timestamp_ns)


def _round_body(client: Client, noise: NoiseModel, s: RoundStreams, channel, index: int) -> tuple[int, int]:
    plan = client.plan
    redact = channel.redact_detector
    st, attempts, retries = init_with_retry(
        client,
        noise,
        s.link,
        s.server,
        s.client,
        on_herald=lambda h: channel.send(_herald_message(index, h, redact)),
        on_m_err=lambda b: channel.relay(WireMessage("m_err", index, bit=b)),
    )
    for pos in range(1, plan.q + 1):
        res = prepare(client.target(pos + 1), noise, s.link)
        attempts += res.herald.attempts
        client.on_herald(pos + 1, res.c)
        channel.send(_herald_message(index, res.herald, redact))
        delta = client.delta(pos)
        channel.send(WireMessage("delta", index, octant=int(delta)))
        m, st = server_interaction_step(st, res.state, delta, noise, s.server)
        client.on_outcome(pos, channel.relay(WireMessage("outcome", index, bit=m)))
    final_delta = None
    if plan.final_basis == "B":
        final_delta = client.delta(plan.q + 1)
        channel.send(WireMessage("delta", index, octant=int(final_delta)))
    z = server_final_measure(st, final_delta, s.server)
    client.on_outcome(plan.q + 1, channel.relay(WireMessage("outcome", index, bit=z)))
    return attempts, retries


class LocalTransport:
    """Server controller in the same process; messages still pass through JSON."""

    def __init__(self, endpoint: ServerEndpoint | None = None):
        self.endpoint = endpoint or ServerEndpoint()

    def exchange(self, msg: WireMessage) -> list[WireMessage]:
        msg = parse(msg.serialise())
        try:
            return [parse(r.serialise()) for r in self.endpoint.handle(msg)]
        except SessionAbort:
            self.endpoint.log.append(WireMessage("abort", msg.round))
            self.endpoint.reset()
            raise

    def close(self) -> None:
        pass


class SocketTransport:
    def __init__(self, host: str, port: int, timeout: float = 30.0):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise SessionAbort(f"cannot reach server at {host}:{port}: {exc}") from exc
        # small request/reply messages: do not wait to coalesce
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.reader = self.sock.makefile("rb")

    def exchange(self, msg: WireMessage) -> list[WireMessage]:
        try:
            self.sock.sendall((msg.serialise() + "\n").encode())
        except OSError as exc:
            raise SessionAbort(f"server unreachable: {exc}") from exc
        if msg.type not in REPLYING:
            return []
        try:
            line = self.reader.readline()
        except OSError as exc:
            raise SessionAbort(f"server timed out: {exc}") from exc
        if not line:
            raise SessionAbort("server closed the connection")
        reply = parse(line)
        if reply.type == "abort":
            raise SessionAbort("server aborted the session")
        return [reply]

    def close(self) -> None:
        self.reader.close()
        self.sock.close()


class TransportChannel:
    """Adapts a transport to the round executor, keeping the server-visible transcript."""

    def __init__(self, transport, redact_detector: bool = True):
        self.transport = transport
        self.redact_detector = redact_detector
        self.transcript: list[WireMessage] = []

    def send(self, msg: WireMessage) -> None:
        self.transcript.append(msg)
        self.transport.exchange(msg)

    def relay(self, msg: WireMessage) -> int:
        self.transcript.append(msg)
        replies = self.transport.exchange(msg)
        if len(replies) != 1 or replies[0].type != msg.type or replies[0].round != msg.round:
            raise SessionAbort(f"unexpected reply to {msg.type}")
        self.transcript.append(replies[0])
        return replies[0].bit

    def close(self, accepted: bool | None, last_round: int) -> None:
        if accepted is not None:
            self.send(WireMessage("result", last_round, bit=int(accepted)))
        self.transport.close()


@dataclass(frozen=True)
class RoundRecord:
    index: int
    round_type: str
    q: int
    alphas: tuple[int, ...]
    decoded: int | None
    outcomes: tuple[int, ...]
    verdicts: tuple[TrapVerdict, ...]
    attempts: int
    retries: int
    timeouts: int
    latency_us: float


def plan_for_round(cfg, index: int, rng) -> RoundPlan:
    is_test = rng.random() < cfg.test_fraction
    alphas = cfg.alpha_settings[index % len(cfg.alpha_settings)]
    if cfg.test_parity == "alternate":
        parity = index % 2
    else:
        parity = cfg.test_parity
    return client_plan_round(cfg.q, alphas, TEST if is_test else COMPUTATION, rng, cfg.final_basis, parity)


def run_session(cfg, channel) -> list[RoundRecord]:
    """Drive ``cfg.rounds`` rounds through ``channel``."""
    records = []
    for index in range(cfg.rounds):
        streams = round_streams(cfg.seed_client, cfg.seed_server, index)
        plan = plan_for_round(cfg, index, streams.client)
        out = execute_round(plan, cfg.noise, streams, channel, index)
        client = out.client
        plan = client.plan
        records.append(RoundRecord(
            index=index,
            round_type=plan.round_type,
            q=plan.q,
            alphas=tuple(int(a) for a in plan.alphas),
            decoded=client.decoded_output() if plan.round_type == COMPUTATION else None,
            outcomes=tuple(client.outcomes),
            verdicts=tuple(client.verdicts()),
            attempts=out.attempts,
            retries=out.retries,
            timeouts=out.timeouts,
            latency_us=round_latency(cfg.noise.link, out.attempts, out.retries + out.timeouts),
        ))
    return records


def simulate_test_rounds(noise: NoiseModel, q: int, rounds: int, rng, parity: int | None = None, final_basis: str = "Z"):
    """Verdict lists of ``rounds`` test rounds, alternating dummy placements."""
    seed_c, seed_s = (int(x) for x in rng.integers(0, 2**63, size=2))
    channel = NullChannel()
    out = []
    for index in range(rounds):
        streams = round_streams(seed_c, seed_s, index)
        par = index % 2 if parity is None else parity
        plan = client_plan_round(q, None, TEST, streams.client, final_basis, par)
        out.append(execute_round(plan, noise, streams, channel, index).client.verdicts())
    return out


def simulate_computation_rounds(noise: NoiseModel, alphas, rounds: int, rng, final_basis: str = "Z") -> list[int]:
    """Decoded outputs of ``rounds`` computation rounds at a fixed angle setting."""
    seed_c, seed_s = (int(x) for x in rng.integers(0, 2**63, size=2))
    channel = NullChannel()
    q = len(alphas) - (final_basis == "B")
    out = []
    for index in range(rounds):
        streams = round_streams(seed_c, seed_s, index)
        plan = client_plan_round(q, alphas, COMPUTATION, streams.client, final_basis)
        out.append(execute_round(plan, noise, streams, channel, index).client.decoded_output())
    return out
