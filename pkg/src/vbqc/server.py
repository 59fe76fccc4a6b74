"""The server role's classical controller.

It sees only wire messages. Readouts from the server's trapped-ion device
arrive as ``outcome`` / ``m_err`` reports and are announced to the client.
Ordering is enforced; anything unexpected aborts the session.
"""

from __future__ import annotations

import logging
import socket

from .wire import WireError, WireMessage, parse

log = logging.getLogger(__name__)


class SessionAbort(Exception):
    pass


class ServerEndpoint:
    def __init__(self):
        self.log: list[WireMessage] = []
        self.reset()

    def reset(self) -> None:
        self.round: int | None = None
        self.heralds = 0
        self.deltas = 0
        self.finished = False

    def handle(self, msg: WireMessage) -> list[WireMessage]:
        """Process one inbound message and return the replies to send."""
        self.log.append(msg)
        t = msg.type
        if t == "abort":
            self.reset()
            return []
        if self.finished:
            raise SessionAbort("message after result")
        if t == "result":
            if self.round is not None:
                raise SessionAbort("result inside an open round")
            self.finished = True
            return []
        if t == "round_begin":
            # a repeated round_begin restarts the open round after a timeout
            if self.round is not None and msg.round != self.round:
                raise SessionAbort("round_begin while another round is open")
            self.round = msg.round
            self.heralds = self.deltas = 0
            return []
        if self.round is None or msg.round != self.round:
            raise SessionAbort(f"{t} outside round {self.round}")
        if t == "herald":
            self.heralds += 1
            return []
        if t == "m_err":
            # a failed transfer consumes its herald
            if msg.bit:
                self.heralds -= 1
            return [msg]
        if t == "delta":
            # one measurement angle per prepared qubit, never ahead of it
            if self.deltas >= self.heralds:
                raise SessionAbort("delta without a prepared qubit")
            self.deltas += 1
            return []
        if t == "outcome":
            return [msg]
        if t == "round_end":
            self.round = None
            return []
        raise SessionAbort(f"unexpected message {t}")


def _abort_line(round_no: int) -> bytes:
    return (WireMessage("abort", round_no).serialise() + "\n").encode()


def serve_connection(conn: socket.socket, endpoint: ServerEndpoint, timeout: float | None = 30.0) -> str:
    """Run one session on an accepted connection.

    Returns ``"ok"`` after a ``result`` message, ``"abort"`` otherwise.
    """
    conn.settimeout(timeout)
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    reader = conn.makefile("rb")
    try:
        while True:
            try:
                line = reader.readline()
            except (socket.timeout, OSError):
                log.warning("session timed out")
                _send_abort(conn, endpoint)
                return "abort"
            if not line:
                if endpoint.finished:
                    return "ok"
                log.warning("client went away mid-session")
                _send_abort(conn, endpoint)
                return "abort"
            try:
                msg = parse(line)
                replies = endpoint.handle(msg)
            except (WireError, SessionAbort, TypeError) as exc:
                log.warning("aborting session: %s", exc)
                _send_abort(conn, endpoint)
                return "abort"
            for r in replies:
                conn.sendall((r.serialise() + "\n").encode())
            if msg.type == "abort":
                endpoint.reset()
                return "abort"
            if endpoint.finished:
                return "ok"
    finally:
        reader.close()


def _send_abort(conn: socket.socket, endpoint: ServerEndpoint) -> None:
    round_no = endpoint.round if endpoint.round is not None else 0
    endpoint.log.append(WireMessage("abort", round_no))
    try:
        conn.sendall(_abort_line(round_no))
    except OSError:
        pass
    endpoint.reset()
