import csv
import json

import pytest

from schedmpc.cli import main

SCALAR_CONFIG = {
    "plant": {"A": [[1.2]], "B": [[1.0]]},
    "network": {"g": 1, "c": 2, "b": 4},
    "cost": {"Q": 1.0, "R": 1.0},
    "constraints": {"X_p": {"box": 2.0}, "U_p": {"box": 2.0}},
    "mpc": {"horizon": 3, "mode": "time_varying", "schedule_search": "enumerate"},
    "initial_state": {"x_p": [1.5], "u_s": [0.0], "beta": 4},
    "synthesis": {"region_mode": "polytopic"},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "scalar.json"
    cfg.write_text(json.dumps(SCALAR_CONFIG))
    return d


@pytest.fixture(scope="module")
def cert_path(workdir):
    out = workdir / "cert.json"
    assert main(["synthesize", str(workdir / "scalar.json"), "-o", str(out)]) == 0
    return out


class TestSynthesizeCommand:
    def test_writes_certificate(self, cert_path):
        doc = json.loads(cert_path.read_text())
        assert doc["kind"] == "token_bucket"
        assert "model" in doc and doc["regions"]["type"] == "polytopic"

    def test_infeasible_model_exits_2(self, tmp_path):
        bad = dict(SCALAR_CONFIG, plant={"A": [[2.0]], "B": [[0.0]]})
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps(bad))
        assert main(["synthesize", str(cfg), "-o", str(tmp_path / "c.json")]) == 2

    def test_malformed_config_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "broken.json"
        cfg.write_text(json.dumps({"plant": {"A": [[1.0]], "B": [[1.0]]}}))
        assert main(["synthesize", str(cfg), "-o", str(tmp_path / "c.json")]) == 1
        assert "network" in capsys.readouterr().err

    def test_missing_field_named(self, tmp_path, capsys):
        doc = {k: v for k, v in SCALAR_CONFIG.items() if k != "constraints"}
        cfg = tmp_path / "nofield.json"
        cfg.write_text(json.dumps(doc))
        assert main(["synthesize", str(cfg), "-o", str(tmp_path / "c.json")]) == 1
        assert "constraints" in capsys.readouterr().err


class TestVerifyCommand:
    def test_fresh_certificate_passes(self, cert_path, capsys):
        assert main(["verify", "--cert", str(cert_path)]) == 0
        out = capsys.readouterr().out
        assert "margins" in out and "OK" in out

    def test_tampered_margins_exit_3(self, cert_path, tmp_path):
        doc = json.loads(cert_path.read_text())
        doc["margins"] = [-1.0 for _ in doc["margins"]]
        bad = tmp_path / "tampered.json"
        bad.write_text(json.dumps(doc))
        assert main(["verify", "--cert", str(bad)]) == 3


class TestSimulateCommand:
    def test_simulate_and_verify_trace(self, workdir, cert_path):
        trace = workdir / "trace.csv"
        assert main(["simulate", str(workdir / "scalar.json"), "--cert", str(cert_path),
                     "--steps", "12", "-o", str(trace)]) == 0
        with open(trace) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 12 + 1  # header + steps + final state
        assert main(["verify", "--cert", str(cert_path), "--trace", str(trace)]) == 0

    def test_zero_steps_trace(self, workdir, cert_path):
        trace = workdir / "trace0.csv"
        assert main(["simulate", str(workdir / "scalar.json"), "--cert", str(cert_path),
                     "--steps", "0", "-o", str(trace)]) == 0
        with open(trace) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 2  # header + initial state only

    def test_model_mismatch_exits_1(self, workdir, cert_path, tmp_path):
        other = dict(SCALAR_CONFIG, network={"g": 1, "c": 2, "b": 5})
        cfg = tmp_path / "other.json"
        cfg.write_text(json.dumps(other))
        assert main(["simulate", str(cfg), "--cert", str(cert_path),
                     "--steps", "3", "-o", str(tmp_path / "t.csv")]) == 1


class TestPlotdataCommand:
    def test_emits_per_signal_series(self, workdir, cert_path):
        trace = workdir / "trace_plot.csv"
        main(["simulate", str(workdir / "scalar.json"), "--cert", str(cert_path),
              "--steps", "5", "-o", str(trace)])
        outdir = workdir / "series"
        assert main(["plotdata", str(trace), "-o", str(outdir)]) == 0
        beta = outdir / "beta.csv"
        assert beta.exists()
        with open(beta) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["k", "beta"]
        assert len(rows) == 1 + 6  # all six states recorded

    def test_vstar_series_skips_trailing_state_row(self, workdir, cert_path):
        outdir = workdir / "series"
        with open(outdir / "V_star.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 5


ACT_CONFIG = {
    "plant": {"A": [[1.0, 0.1], [0.0, 0.9]], "B": [[1.0, 0.0], [0.0, 1.0]]},
    "network": {"widths": [1, 1], "base_schedule": [0, 1]},
    "cost": {"Q": 1.0, "R": [1.0, 2.0]},
    "mpc": {"horizon": 2, "mode": "time_varying"},
    "initial_state": {"x_p": [1.0, -1.0]},
}


class TestActuatorFlow:
    def test_synthesize_simulate_verify(self, tmp_path):
        cfg = tmp_path / "act.json"
        cfg.write_text(json.dumps(ACT_CONFIG))
        cert = tmp_path / "cert.json"
        trace = tmp_path / "trace.csv"
        assert main(["synthesize", str(cfg), "-o", str(cert)]) == 0
        assert main(["simulate", str(cfg), "--cert", str(cert),
                     "--steps", "8", "-o", str(trace)]) == 0
        assert main(["verify", "--cert", str(cert), "--trace", str(trace)]) == 0
        with open(trace) as fh:
            header = fh.readline().strip().split(",")
        assert header[:5] == ["k", "xp0", "xp1", "uc0", "uc1"]


class TestBenchmarkCommand:
    def test_table_shape(self, workdir, cert_path):
        table = workdir / "table.csv"
        assert main(["benchmark", str(workdir / "scalar.json"), "--cert", str(cert_path),
                     "--horizons", "1,2,3", "-o", str(table)]) == 0
        with open(table) as fh:
            rows = list(csv.reader(fh))
        # header + tv rows for N=1,2,3 + multi-step rows for N >= M = 2
        modes = [(r[0], int(r[1])) for r in rows[1:]]
        assert ("time_varying", 1) in modes and ("multi_step", 2) in modes
        assert ("multi_step", 1) not in modes
        assert len(modes) == 5
