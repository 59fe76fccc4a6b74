import json
import socket
import subprocess
import sys
import time

import numpy as np
import pytest

from vbqc.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, ROUND_COLUMNS, main
from vbqc.polarisation import synthesize_scan
from vbqc.wire import FIELDS, WireMessage, parse

OUTPUTS = ("rounds.csv", "summary.json", "transcript.jsonl", "server_log.jsonl")
SECRET_WORDS = ("theta", "round_type", "alpha", "\"r\"", "test", "computation", "trap", "dummy")


def write_config(path, **kw):
    data = {"schema_version": 1, "rounds": 60, "q": 2, "test_fraction": 0.5,
            "alpha_settings": [[1, 6], [3, 2]], "test_parity": "alternate", **kw}
    path.write_text(json.dumps(data))
    return path


def simulate(tmp_path, name, mode, **kw):
    out = tmp_path / name
    cfg = write_config(tmp_path / f"{name}.json", out_dir=str(out), **kw)
    assert main(["simulate", "--config", str(cfg), "--mode", mode]) == EXIT_OK
    return out


def start_server(out, *extra):
    proc = subprocess.Popen(
        [sys.executable, "-m", "vbqc.cli", "serve", "--endpoint", "127.0.0.1:0", "--out", str(out), *extra],
        stdout=subprocess.PIPE, text=True,
    )
    host, port = proc.stdout.readline().split()[1].rsplit(":", 1)
    return proc, host, int(port)


class TestDeterminism:
    def test_in_process_repeatable(self, tmp_path):
        a = simulate(tmp_path, "a", "in_process")
        b = simulate(tmp_path, "b", "in_process")
        for name in OUTPUTS:
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_modes_byte_identical(self, tmp_path):
        a = simulate(tmp_path, "local", "in_process")
        b = simulate(tmp_path, "remote", "two_process")
        for name in OUTPUTS:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_seed_override(self, tmp_path):
        a = simulate(tmp_path, "a", "in_process")
        out = tmp_path / "c"
        cfg = write_config(tmp_path / "c.json", out_dir=str(out))
        assert main(["simulate", "--config", str(cfg), "--seed-client", "99"]) == EXIT_OK
        assert (a / "rounds.csv").read_bytes() != (out / "rounds.csv").read_bytes()


class TestOutputs:
    def test_round_log_columns(self, tmp_path):
        out = simulate(tmp_path, "a", "in_process")
        lines = (out / "rounds.csv").read_text().splitlines()
        assert tuple(lines[0].split(",")) == ROUND_COLUMNS
        assert len(lines) == 61

    def test_summary(self, tmp_path):
        out = simulate(tmp_path, "a", "in_process", rounds=200)
        s = json.loads((out / "summary.json").read_text())
        assert s["test_rounds"] + s["computation_rounds"] == 200
        assert {tuple(x["alphas"]) for x in s["settings"]} == {(1, 6), (3, 2)}
        assert set(s["p_fail"]) == {"1", "2", "3"}
        assert s["decision"]["omega"] == 0.25

    def test_nine_significant_digits(self, tmp_path):
        out = simulate(tmp_path, "a", "in_process")
        for row in (out / "rounds.csv").read_text().splitlines()[1:]:
            latency = row.rsplit(",", 1)[1]
            assert len(latency.replace(".", "").lstrip("0")) <= 9


class TestHygiene:
    def test_server_log_carries_no_secrets(self, tmp_path):
        out = simulate(tmp_path, "remote", "two_process", redact_detector=True)
        text = (out / "server_log.jsonl").read_text()
        for word in SECRET_WORDS:
            assert word not in text
        for line in text.splitlines():
            assert set(json.loads(line)) <= set(FIELDS)
            parse(line)
        assert '"detector":null' in text

    def test_transcript_matches_server_view(self, tmp_path):
        out = simulate(tmp_path, "remote", "two_process")
        transcript = [parse(x) for x in (out / "transcript.jsonl").read_text().splitlines()]
        server = [parse(x) for x in (out / "server_log.jsonl").read_text().splitlines()]
        assert set(server) <= set(transcript)


class TestFailurePaths:
    def test_killed_client_aborts_and_server_resets(self, tmp_path):
        proc, host, port = start_server(tmp_path / "srv", "--timeout", "5")
        try:
            s = socket.create_connection((host, port))
            for m in (WireMessage("round_begin", 0), WireMessage("herald", 0, None, 3, 40)):
                s.sendall((m.serialise() + "\n").encode())
            s.close()
            # the same server then completes a fresh session
            cfg = write_config(tmp_path / "c.json", rounds=5, out_dir=str(tmp_path / "cli"))
            assert main(["connect", "--config", str(cfg), "--endpoint", f"{host}:{port}"]) == EXIT_OK
            log = (tmp_path / "srv" / "server_log.jsonl").read_text().splitlines()
            for _ in range(50):
                if log and parse(log[-1]).type == "result":
                    break
                time.sleep(0.1)
                log = (tmp_path / "srv" / "server_log.jsonl").read_text().splitlines()
            msgs = [parse(x) for x in log]
            assert msgs[2] == WireMessage("abort", 0)
            assert msgs[3] == WireMessage("round_begin", 0)
            assert msgs[-1].type == "result"
        finally:
            proc.kill()
            proc.wait()

    def test_once_server_exit_code_on_abort(self, tmp_path):
        proc, host, port = start_server(tmp_path / "srv", "--once")
        s = socket.create_connection((host, port))
        s.sendall(b'{"type":"round_begin","round":0}\n{"type":"delta","round":0,"octant":2}\n')
        reply = s.makefile("rb").readline()
        s.close()
        assert parse(reply) == WireMessage("abort", 0)
        assert proc.wait(10) == EXIT_ABORT

    def test_unreachable_server_is_abort(self, tmp_path):
        with socket.create_server(("127.0.0.1", 0)) as srv:
            port = srv.getsockname()[1]
        cfg = write_config(tmp_path / "c.json", out_dir=str(tmp_path / "o"))
        assert main(["connect", "--config", str(cfg), "--endpoint", f"127.0.0.1:{port}"]) == EXIT_ABORT

    def test_config_errors_exit_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema_version": 1, "rounds": 5, "rouns": 3}')
        assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG
        assert "rouns: unknown field" in capsys.readouterr().err
        bad.write_text('{"schema_version": 1,\n "q": }')
        assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG
        assert "line 2" in capsys.readouterr().err
        assert main(["connect", "--endpoint", "nowhere", "--out", str(tmp_path)]) == EXIT_CONFIG
        assert main(["calibrate-fit", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_subprocess_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema_version": 7}')
        r = subprocess.run([sys.executable, "-m", "vbqc.cli", "simulate", "--config", str(bad)],
                           capture_output=True, text=True)
        assert r.returncode == EXIT_CONFIG
        assert "schema_version" in r.stderr


class TestOtherCommands:
    def test_leakage(self, tmp_path):
        hist = tmp_path / "h.csv"
        hist.write_text("bin_ns,count_s,count_p\n20,0,50\n21,10,30\n22,40,10\n23,50,0\n")
        cfg = write_config(tmp_path / "c.json", out_dir=str(tmp_path / "o"))
        assert main(["leakage", "--config", str(cfg), "--histogram", str(hist)]) == EXIT_OK
        r = json.loads((tmp_path / "o" / "leakage.json").read_text())
        assert set(r) == {"observed", "optimised", "herald_rate", "recorded_herald_delay"}
        assert r["observed"]["quantum"]["basis"] == pytest.approx(0.035, abs=0.002)
        assert 0 < r["recorded_herald_delay"] <= 1

    def test_leakage_bad_histogram(self, tmp_path):
        hist = tmp_path / "h.csv"
        hist.write_text("bin,count\n1,2\n")
        assert main(["leakage", "--histogram", str(hist), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_verify(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", out_dir=str(tmp_path / "o"),
                           verify={"n_grid": [3000, 6000, 9000], "trials": 300})
        assert main(["verify", "--config", str(cfg)]) == EXIT_OK
        rows = (tmp_path / "o" / "decay.csv").read_text().splitlines()
        assert rows[0] == "n,tests,reject_rate,std_err,bound"
        assert len(rows) == 4
        s = json.loads((tmp_path / "o" / "verify_summary.json").read_text())
        assert s["omega_max"] == 0.25

    def test_calibrate_fit(self, tmp_path):
        scan = tmp_path / "scan.csv"
        rows = ["q_rad,h_rad,t"] + [f"{q!r},{h!r},{t!r}" for q, h, t in synthesize_scan(0.7, 1.1)]
        scan.write_text("\n".join(rows) + "\n")
        counts = tmp_path / "counts.csv"
        counts.write_text("basis,n_s,n_p\nX,500,500\nY,500,500\nZ,0,1000\n")
        assert main(["calibrate-fit", "--scan", str(scan), "--counts", str(counts), "--out", str(tmp_path / "o")]) == EXIT_OK
        r = json.loads((tmp_path / "o" / "calibration.json").read_text())
        assert r["fit"]["theta"] == pytest.approx(0.7, abs=1e-5)
        assert r["fit"]["phi"] == pytest.approx(1.1, abs=1e-5)
        np.testing.assert_allclose(np.abs(r["bloch"]), [0, 0, 1], atol=1e-9)

    def test_steering_check(self, tmp_path):
        out = tmp_path / "o"
        assert main(["steering-check", "--samples", "20000", "--targets", "100", "--out", str(out)]) == EXIT_OK
        r = json.loads((out / "steering.json").read_text())
        assert r["correctness_worst_infidelity"] < 1e-9
        assert r["tv_real_vs_broken"] > 0.1
