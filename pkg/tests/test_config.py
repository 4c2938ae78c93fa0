import json

import numpy as np
import pytest

from schedmpc.config import load_certificate, load_config, parse_config, save_certificate
from schedmpc.errors import ConfigError
from schedmpc.synthesis import params_fingerprint

TB_DOC = {
    "plant": {"A": [[0.5, 0.1], [0.0, 0.8]], "B": [[1.0], [0.5]]},
    "network": {"g": 1, "c": 3, "b": 5},
    "cost": {"Q": [2.0, 3.0], "R": [[1.5]]},
    "constraints": {"X_p": {"box": [2.0, 4.0]}, "U_p": {"rows": [[0.5], [-0.5]]}},
    "mpc": {"horizon": 4, "j0": 1},
    "initial_state": {"x_p": [1.0, -1.0], "u_s": [0.0], "beta": 5},
}

ACT_DOC = {
    "plant": {"A": [[0.9, 0.0], [0.1, 0.7]], "B": [[1.0, 0.0], [0.0, 1.0]]},
    "network": {"widths": [1, 1], "base_schedule": [0, 1]},
    "cost": {"Q": 1.0, "R": [2.0, [[0.5]]]},
    "mpc": {"horizon": 2},
    "initial_state": {"x_p": [1.0, 1.0]},
}


class TestTokenBucketConfig:
    def test_matrix_forms(self):
        setup = parse_config(TB_DOC)
        assert setup.kind == "token_bucket"
        np.testing.assert_allclose(setup.params.Q, np.diag([2.0, 3.0]))
        np.testing.assert_allclose(setup.params.R, [[1.5]])
        assert setup.params.M == 3
        assert setup.mpc.j0 == 1
        assert setup.x0.beta == 5

    def test_scalar_cost_expands(self):
        doc = dict(TB_DOC, cost={"Q": 2.0, "R": 1.0})
        setup = parse_config(doc)
        np.testing.assert_allclose(setup.params.Q, 2.0 * np.eye(2))

    def test_box_scalar_broadcasts(self):
        doc = dict(TB_DOC, constraints={"X_p": {"box": 2.0}, "U_p": {"box": 3.0}})
        setup = parse_config(doc)
        assert setup.params.X_p.nrows == 4

    def test_default_bucket_starts_full(self):
        doc = dict(TB_DOC, initial_state={"x_p": [0.0, 0.0]})
        setup = parse_config(doc)
        assert setup.x0.beta == setup.params.b
        np.testing.assert_allclose(setup.x0.u_s, [0.0])

    def test_missing_section_names_field(self):
        doc = {k: v for k, v in TB_DOC.items() if k != "cost"}
        with pytest.raises(ConfigError, match="cost"):
            parse_config(doc)

    def test_missing_horizon_named(self):
        doc = dict(TB_DOC, mpc={})
        with pytest.raises(ConfigError, match="mpc.horizon"):
            parse_config(doc)

    def test_wrong_diag_length(self):
        doc = dict(TB_DOC, cost={"Q": [1.0, 2.0, 3.0], "R": 1.0})
        with pytest.raises(ConfigError, match="cost.Q"):
            parse_config(doc)

    def test_fixture_plant(self):
        doc = dict(TB_DOC,
                   plant={"fixture": "walsh_batch_reactor"},
                   cost={"Q": 10.0, "R": 1.0},
                   constraints={"X_p": {"box": 2.0}, "U_p": {"box": 3.0}},
                   network={"g": 1, "c": 8, "b": 22},
                   initial_state={"x_p": [1, 0, 1, 0], "u_s": [0, 0], "beta": 22})
        setup = parse_config(doc)
        assert setup.params.n_p == 4 and setup.params.m_p == 2 and setup.params.M == 8

    def test_unknown_fixture(self):
        doc = dict(TB_DOC, plant={"fixture": "nonexistent"})
        with pytest.raises(ConfigError, match="fixture"):
            parse_config(doc)


class TestActuatorConfig:
    def test_per_actuator_blocks(self):
        setup = parse_config(ACT_DOC)
        assert setup.kind == "actuator"
        np.testing.assert_allclose(setup.params.R_blocks[0], [[2.0]])
        np.testing.assert_allclose(setup.params.R_blocks[1], [[0.5]])

    def test_block_count_mismatch(self):
        doc = dict(ACT_DOC, cost={"Q": 1.0, "R": [1.0]})
        with pytest.raises(ConfigError, match="cost.R"):
            parse_config(doc)

    def test_region_mode_defaults_unbounded(self):
        assert parse_config(ACT_DOC).region_mode == "unbounded"


class TestCertificateFile:
    def test_roundtrip_with_embedded_model(self, scalar_tb, tmp_path):
        p, cert = scalar_tb
        path = tmp_path / "cert.json"
        save_certificate(path, cert, p)
        loaded, params = load_certificate(path)
        assert params_fingerprint(params) == loaded.params_hash == cert.params_hash
        assert params.g == p.g and params.b == p.b
        np.testing.assert_allclose(params.A, p.A)

    def test_tampered_model_rejected(self, scalar_tb, tmp_path):
        p, cert = scalar_tb
        path = tmp_path / "cert.json"
        save_certificate(path, cert, p)
        doc = json.loads(path.read_text())
        doc["model"]["b"] = doc["model"]["b"] + 1
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigError, match="does not match"):
            load_certificate(path)
