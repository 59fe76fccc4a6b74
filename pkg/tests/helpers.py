"""Exact branch enumeration of a noiseless round, used as the protocol oracle."""

import numpy as np

from vbqc.noise import NoiseModel
from vbqc.protocol import (
    Client, final_basis, final_memory_state, server_init_step, server_interaction_branch,
)
from vbqc.qcore import QuantumState, outcome_probs

IDEAL = NoiseModel.ideal()


def _client(plan, heralds, outcomes):
    c = Client(plan)
    for i, h in enumerate(heralds):
        c.on_herald(i + 1, h)
    for i, m in enumerate(outcomes):
        c.on_outcome(i + 1, m)
    return c


def _steered(client, pos, c):
    return QuantumState.from_ket(client.target(pos).ion_ket(c))


def exact_branches(plan, heralds, noise=IDEAL):
    """Every (probability, finished client) pair of a round with fixed heralds.

    The server is driven through its deterministic branch functions, so the
    probabilities are exact rather than sampled.
    """
    out = []
    first = _client(plan, heralds, [])
    _, st = server_init_step(_steered(first, 1, heralds[0]), noise, None)

    def walk(outcomes, st, pos, p):
        client = _client(plan, heralds, outcomes)
        if pos > plan.q:
            delta = client.delta(pos) if plan.final_basis == "B" else None
            probs = outcome_probs(final_memory_state(st), final_basis(delta), 0)
            for z in (0, 1):
                if probs[z] > 1e-15:
                    out.append((p * probs[z], _client(plan, heralds, outcomes + [z])))
            return
        delta = client.delta(pos)
        nxt = _steered(client, pos + 1, heralds[pos])
        for m in (0, 1):
            pm, st2 = server_interaction_branch(st, nxt, delta, noise, m)
            if pm > 1e-15:
                walk(outcomes + [m], st2, pos + 1, p * pm)

    walk([], st, 1, 1.0)
    return out


def decoded_one_probability(plan, heralds, noise=IDEAL):
    return sum(p for p, c in exact_branches(plan, heralds, noise) if c.decoded_output() == 1)


def random_heralds(rng, q):
    return [int(x) for x in rng.integers(0, 2, q + 1)]


def octant_radians(alphas):
    return [np.pi / 4 * int(a) for a in alphas]


def plugin_mutual_information(labels, values) -> float:
    """Plug-in estimate of I(label; value) in bits."""
    labels = list(labels)
    values = list(values)
    n = len(labels)
    joint, pl, pv = {}, {}, {}
    for a, b in zip(labels, values):
        joint[a, b] = joint.get((a, b), 0) + 1
        pl[a] = pl.get(a, 0) + 1
        pv[b] = pv.get(b, 0) + 1
    mi = 0.0
    for (a, b), c in joint.items():
        mi += c / n * np.log2(c * n / (pl[a] * pv[b]))
    return float(mi)


def transcript_features(transcript):
    """Per-round server-visible features, keyed by round index.

    Each round maps feature name -> hashable value: every field of every
    message, by its position within the round, plus message counts.
    """
    rounds = {}
    for msg in transcript:
        if msg.type in ("result", "abort"):
            continue
        feats = rounds.setdefault(msg.round, {"_seq": []})
        feats["_seq"].append(msg.type)
        k = sum(1 for t in feats["_seq"] if t == msg.type) - 1
        for name, value in msg.to_dict().items():
            if name in ("type", "round"):
                continue
            feats[f"{msg.type}[{k}].{name}"] = value
    for feats in rounds.values():
        feats["_seq"] = tuple(feats["_seq"])
    return rounds


def decile_bins(values):
    """Map numeric values to decile indices so sparse supports stay estimable."""
    arr = np.asarray(values, dtype=float)
    edges = np.quantile(arr, np.linspace(0, 1, 11)[1:-1])
    return list(np.searchsorted(edges, arr, side="right"))


def transcript_leakage(records, transcript):
    """Largest plug-in MI between round type and any transcript feature."""
    feats = transcript_features(transcript)
    labels = [r.round_type for r in records]
    names = set()
    for f in feats.values():
        names |= set(f)
    worst = 0.0
    for name in sorted(names):
        vals = [feats[r.index].get(name) for r in records]
        numeric = [v for v in vals if isinstance(v, int) and not isinstance(v, bool)]
        if name.endswith((".attempts", ".timestamp_ns")) and numeric:
            vals = decile_bins([v if v is not None else -1 for v in vals])
        worst = max(worst, plugin_mutual_information(labels, vals))
    return worst
