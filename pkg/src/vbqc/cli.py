"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 session abort.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import socket
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import leakage, polarisation, steering, verify
from .config import ConfigError, RunConfig, load_config
from .server import ServerEndpoint, SessionAbort, serve_connection
from .session import LocalTransport, RoundRecord, SocketTransport, TransportChannel, run_session

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3

ROUND_COLUMNS = (
    "round", "round_type", "q", "alphas", "decoded", "outcomes",
    "verdicts", "attempts", "retries", "timeouts", "latency_us",
)
DECAY_COLUMNS = ("n", "tests", "reject_rate", "std_err", "bound")

log = logging.getLogger("vbqc")


def fmt(x: float) -> str:
    return format(float(x), ".9g")


def _num(x):
    return None if x is None else float(fmt(x))


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_jsonl(messages, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for m in messages:
            fh.write(m.serialise() + "\n")


# simulate ---------------------------------------------------------------------

def round_rows(records: list[RoundRecord]) -> list[list[str]]:
    rows = []
    for r in records:
        rows.append([
            str(r.index),
            r.round_type,
            str(r.q),
            " ".join(str(a) for a in r.alphas),
            "" if r.decoded is None else str(r.decoded),
            " ".join(str(m) for m in r.outcomes),
            " ".join(f"{v.position}:{v.kind}:{'pass' if v.passed else 'fail'}" for v in r.verdicts),
            str(r.attempts),
            str(r.retries),
            str(r.timeouts),
            fmt(r.latency_us),
        ])
    return rows


def rounds_csv(records: list[RoundRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROUND_COLUMNS)
    w.writerows(round_rows(records))
    return buf.getvalue()


def summarise(records: list[RoundRecord], cfg: RunConfig) -> dict:
    settings = {}
    for r in records:
        if r.decoded is not None:
            settings.setdefault(r.alphas, []).append(r.decoded)
    per_setting = []
    for alphas, vals in sorted(settings.items()):
        v = np.array(vals, dtype=float)
        per_setting.append({
            "alphas": list(alphas),
            "n": len(vals),
            "mean_decoded": _num(v.mean()),
            "std_err": _num(v.std(ddof=1) / np.sqrt(len(v)) if len(v) > 1 else 0.0),
        })
    positions: dict[int, list[int]] = {}
    kinds: dict[int, str] = {}
    tests = failed = 0
    for r in records:
        if r.round_type != "test":
            continue
        tests += 1
        failed += any(not v.passed for v in r.verdicts)
        for v in r.verdicts:
            positions.setdefault(v.position, []).append(0 if v.passed else 1)
            kinds[v.position] = v.kind
    p_fail = {
        str(pos): {"kind": kinds[pos], "n": len(f), "rate": _num(np.mean(f))}
        for pos, f in sorted(positions.items())
    }
    omega = cfg.omega if cfg.omega is not None else verify.omega_max(cfg.q)
    decision = None
    if tests:
        d = verify.accept(failed, tests, omega)
        decision = {"omega": _num(omega), "accept": d.accept, "p_fail_hat": _num(d.p_fail_hat)}
    n = max(len(records), 1)
    return {
        "rounds": len(records),
        "computation_rounds": len(records) - tests,
        "test_rounds": tests,
        "failed_test_rounds": failed,
        "settings": per_setting,
        "p_fail": p_fail,
        "decision": decision,
        "mean_attempts": _num(sum(r.attempts for r in records) / n),
        "retry_fraction": _num(sum(r.retries for r in records) / n),
        "timeouts": sum(r.timeouts for r in records),
        "mean_latency_us": _num(sum(r.latency_us for r in records) / n),
    }


def _decision_bit(records, cfg) -> bool | None:
    s = summarise(records, cfg)
    return None if s["decision"] is None else s["decision"]["accept"]


def run_in_process(cfg: RunConfig) -> tuple[list[RoundRecord], TransportChannel, ServerEndpoint]:
    endpoint = ServerEndpoint()
    channel = TransportChannel(LocalTransport(endpoint), cfg.redact_detector)
    records = run_session(cfg, channel)
    accepted = _decision_bit(records, cfg)
    channel.close(True if accepted is None else accepted, max(cfg.rounds - 1, 0))
    return records, channel, endpoint


def run_remote(cfg: RunConfig, host: str, port: int) -> tuple[list[RoundRecord], TransportChannel]:
    channel = TransportChannel(SocketTransport(host, port), cfg.redact_detector)
    try:
        records = run_session(cfg, channel)
        accepted = _decision_bit(records, cfg)
        channel.close(True if accepted is None else accepted, max(cfg.rounds - 1, 0))
    except SessionAbort:
        channel.transport.close()
        raise
    return records, channel


def spawn_server(out_dir: Path) -> tuple[subprocess.Popen, str, int]:
    """Start a one-session server process on an ephemeral local port."""
    env = dict(os.environ)
    proc = subprocess.Popen(
        [sys.executable, "-m", "vbqc.cli", "serve", "--endpoint", "127.0.0.1:0", "--out", str(out_dir), "--once"],
        stdout=subprocess.PIPE,
        text=True,
        env=env,
    )
    line = proc.stdout.readline().strip()
    if not line.startswith("listening "):
        proc.kill()
        raise SessionAbort(f"server failed to start: {line!r}")
    host, port = line.split()[1].rsplit(":", 1)
    return proc, host, int(port)


def write_outputs(records, channel, cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "rounds.csv").write_text(rounds_csv(records), encoding="utf-8", newline="")
    _dump_json(summarise(records, cfg), out / "summary.json")
    _write_jsonl(channel.transcript, out / "transcript.jsonl")


def cmd_simulate(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.mode == "in_process":
        records, channel, endpoint = run_in_process(cfg)
        _write_jsonl(endpoint.log, out / "server_log.jsonl")
    else:
        proc, host, port = spawn_server(out)
        try:
            records, channel = run_remote(cfg, host, port)
        finally:
            try:
                proc.wait(timeout=60)
            except subprocess.TimeoutExpired:
                proc.kill()
        if proc.returncode != EXIT_OK:
            raise SessionAbort(f"server exited with status {proc.returncode}")
    write_outputs(records, channel, cfg, out)
    return EXIT_OK


def cmd_connect(cfg: RunConfig, endpoint: str) -> int:
    host, port = parse_endpoint(endpoint)
    records, channel = run_remote(cfg, host, port)
    write_outputs(records, channel, cfg, Path(cfg.out_dir))
    return EXIT_OK


# serve ------------------------------------------------------------------------

def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"--endpoint: expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def cmd_serve(endpoint: str, out_dir: str, once: bool, timeout: float) -> int:
    host, port = parse_endpoint(endpoint)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "server_log.jsonl"
    log_path.write_text("", encoding="utf-8")
    status = EXIT_OK
    with socket.create_server((host, port)) as srv:
        bound = srv.getsockname()
        print(f"listening {bound[0]}:{bound[1]}", flush=True)
        while True:
            conn, _ = srv.accept()
            ep = ServerEndpoint()
            with conn:
                result = serve_connection(conn, ep, timeout)
            with open(log_path, "a", encoding="utf-8", newline="\n") as fh:
                for m in ep.log:
                    fh.write(m.serialise() + "\n")
            status = EXIT_OK if result == "ok" else EXIT_ABORT
            if once:
                return status


# leakage / verify / calibrate / steering ----------------------------------------

def cmd_leakage(cfg: RunConfig, histogram: str | None = None) -> int:
    rng = np.random.default_rng(cfg.seed_client)
    observed = leakage.LeakageConfig(timing=cfg.noise.timing, noise=cfg.noise)
    report = {
        "observed": leakage.build_leakage_table(observed, rng).to_dict(),
        "optimised": leakage.build_leakage_table(leakage.LeakageConfig.optimised(), rng).to_dict(),
        "herald_rate": {
            "fisher_per_sample": _num(leakage.fisher_exponential(leakage.DEFAULT_MEAN_ATTEMPTS)),
            "relative_entropy_126_132_bits": _num(leakage.kl_exponential(126.0, 132.0)),
        },
    }
    if histogram is not None:
        try:
            _, hs, hp = leakage.read_histogram_csv(histogram)
            report["recorded_herald_delay"] = _num(leakage.ml_timing_gain(hs, hp))
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    report = json.loads(json.dumps(report), parse_float=lambda s: float(fmt(float(s))))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(report, out / "leakage.json")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    g = cfg.verify
    rng = np.random.Generator(np.random.Philox(cfg.seed_client))
    points = verify.monte_carlo_decay(g.n_grid, g.p_true, g.trials, rng, g.tau, g.omega)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "decay.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DECAY_COLUMNS)
        for p in points:
            w.writerow([p.n, p.tests, fmt(p.reject_rate), fmt(p.std_err), fmt(p.bound)])
    summary = {"omega": g.omega, "omega_max": _num(verify.omega_max(g.q)), "p_true": g.p_true, "tau": g.tau}
    try:
        fit = verify.fit_decay(points)
        summary.update(slope=_num(fit.slope), r2=_num(fit.r2), halving_rounds=_num(fit.halving_rounds))
    except ValueError:
        summary.update(slope=None, r2=None, halving_rounds=None)
    _dump_json(summary, out / "verify_summary.json")
    return EXIT_OK


def cmd_calibrate_fit(scan: str | None, counts: str | None, out_dir: str) -> int:
    if not scan and not counts:
        raise ConfigError("calibrate-fit: give --scan and/or --counts")
    result = {}
    try:
        if scan:
            fit = polarisation.fit_polarisation_state(polarisation.read_scan_csv(scan))
            result["fit"] = {
                "theta": _num(fit.theta), "phi": _num(fit.phi), "residual": _num(fit.residual),
                "phi_identifiable": fit.phi_identifiable, "ill_conditioned": fit.ill_conditioned,
            }
        if counts:
            b = polarisation.direct_inversion(polarisation.read_counts_csv(counts))
            result["bloch"] = [_num(x) for x in b]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(result, out / "calibration.json")
    return EXIT_OK


def cmd_steering_check(seed: int, samples: int, targets: int, out_dir: str) -> int:
    from .qcore import QuantumState, fidelity

    rng = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    for _ in range(targets):
        u = steering.haar_unitary(rng)
        want = QuantumState.from_ket(u[:, 0])
        t = steering.run_real_world(u, rng)
        worst = max(worst, 1 - fidelity(t.server_output, want))
    u = steering.haar_unitary(rng)
    had = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    x_reader = steering.Distinguisher(steering.BELL_PAIR, True, had)
    result = {
        "correctness_worst_infidelity": _num(worst),
        "tv_real_vs_ideal": _num(steering.indistinguishability_test(u, samples, rng)),
        "tv_real_vs_real": _num(steering.indistinguishability_test(u, samples, rng, worlds=("real", "real"))),
        "tv_real_vs_broken": _num(steering.indistinguishability_test(had, samples, rng, x_reader, ("real", "broken"))),
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(result, out / "steering.json")
    return EXIT_OK


# entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vbqc", description="Blind verifiable computation simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, endpoint=False):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--seed-client", type=int)
        sp.add_argument("--seed-server", type=int)
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--mode", choices=("in_process", "two_process"))
        if endpoint:
            sp.add_argument("--endpoint", metavar="HOST:PORT", required=True)

    common(sub.add_parser("simulate", help="run protocol rounds and write the round log"))
    lk = sub.add_parser("leakage", help="blindness leakage report")
    common(lk)
    lk.add_argument("--histogram", metavar="CSV", help="recorded timestamps: bin_ns, count_s, count_p")
    common(sub.add_parser("verify", help="rejection-rate decay study"))
    common(sub.add_parser("connect", help="client role against a running server"), endpoint=True)

    cal = sub.add_parser("calibrate-fit", help="fit waveplate scans and invert tomography counts")
    cal.add_argument("--scan", metavar="CSV")
    cal.add_argument("--counts", metavar="CSV")
    cal.add_argument("--out", metavar="DIR", default="out")

    st = sub.add_parser("steering-check", help="correctness and indistinguishability of steering")
    st.add_argument("--seed-client", type=int, default=1)
    st.add_argument("--samples", type=int, default=100000)
    st.add_argument("--targets", type=int, default=1000)
    st.add_argument("--out", metavar="DIR", default="out")

    sv = sub.add_parser("serve", help="server role over TCP")
    sv.add_argument("--endpoint", metavar="HOST:PORT", default="127.0.0.1:7700")
    sv.add_argument("--out", metavar="DIR", default="out")
    sv.add_argument("--once", action="store_true", help="exit after one session")
    sv.add_argument("--timeout", type=float, default=30.0, help="seconds of silence before abort")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed_client is not None:
        overrides["seed_client"] = args.seed_client
    if args.seed_server is not None:
        overrides["seed_server"] = args.seed_server
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.mode is not None:
        overrides["mode"] = args.mode
    return replace(cfg, **overrides) if overrides else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "serve":
            return cmd_serve(args.endpoint, args.out, args.once, args.timeout)
        if args.command == "calibrate-fit":
            return cmd_calibrate_fit(args.scan, args.counts, args.out)
        if args.command == "steering-check":
            return cmd_steering_check(args.seed_client, args.samples, args.targets, args.out)
        cfg = resolve_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "connect":
            return cmd_connect(cfg, args.endpoint)
        if args.command == "leakage":
            return cmd_leakage(cfg, args.histogram)
        if args.command == "verify":
            return cmd_verify(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SessionAbort as exc:
        print(f"session aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
