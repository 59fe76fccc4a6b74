"""Line-delimited JSON messages exchanged between client and server roles.

The schema has no field that could carry an angle secret, a one-time-pad
bit or a round label; hygiene is structural rather than a log filter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

SCHEMA_VERSION = 1

FIELDS = ("type", "round", "detector", "attempts", "timestamp_ns", "octant", "bit")

PAYLOAD = {
    "round_begin": (),
    "herald": ("detector", "attempts", "timestamp_ns"),
    "delta": ("octant",),
    "outcome": ("bit",),
    "m_err": ("bit",),
    "round_end": (),
    "result": ("bit",),
    "abort": (),
}


class WireError(ValueError):
    """Malformed or out-of-schema message."""


@dataclass(frozen=True)
class WireMessage:
    type: str
    round: int
    detector: str | None = None
    attempts: int | None = None
    timestamp_ns: int | None = None
    octant: int | None = None
    bit: int | None = None

    def __post_init__(self):
        _validate(self)

    def to_dict(self) -> dict:
        out = {"type": self.type, "round": self.round}
        for name in PAYLOAD[self.type]:
            out[name] = getattr(self, name)
        return out

    def serialise(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def _validate(m: WireMessage) -> None:
    if m.type not in PAYLOAD:
        raise WireError(f"unknown message type {m.type!r}")
    if not isinstance(m.round, int) or isinstance(m.round, bool) or m.round < 0:
        raise WireError("round must be a non-negative integer")
    allowed = PAYLOAD[m.type]
    for name in FIELDS[2:]:
        v = getattr(m, name)
        if name not in allowed:
            if v is not None:
                raise WireError(f"{m.type} does not carry {name}")
            continue
        if name == "detector":
            if v not in (None, "s", "p"):
                raise WireError("detector must be 's', 'p' or null")
            continue
        if not isinstance(v, int) or isinstance(v, bool):
            raise WireError(f"{name} must be an integer")
    if m.octant is not None and not 0 <= m.octant < 8:
        raise WireError("octant outside 0..7")
    if m.bit is not None and m.bit not in (0, 1):
        raise WireError("bit must be 0 or 1")
    if m.attempts is not None and m.attempts < 1:
        raise WireError("attempts must be positive")


def parse(line: str | bytes) -> WireMessage:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WireError("message is not UTF-8") from exc
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"not JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise WireError("message must be a JSON object")
    unknown = set(obj) - set(FIELDS)
    if unknown:
        raise WireError(f"unknown field(s): {', '.join(sorted(unknown))}")
    if "type" not in obj or "round" not in obj:
        raise WireError("type and round are required")
    mtype = obj["type"]
    if mtype not in PAYLOAD:
        raise WireError(f"unknown message type {mtype!r}")
    missing = [f for f in PAYLOAD[mtype] if f not in obj]
    if missing:
        raise WireError(f"{mtype} missing {', '.join(missing)}")
    return WireMessage(**obj)
