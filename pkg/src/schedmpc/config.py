"""JSON configuration files: one document reproduces one experiment.

Sections: ``plant`` (inline matrices or the named fixture), ``network``
(token bucket integers or actuator widths plus base schedule), ``cost``,
``constraints`` (token bucket only), ``mpc``, ``initial_state`` and
``synthesis``.  Certificate files written by the CLI embed the serialized
model next to the synthesis products so that verification needs no second
input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import fixtures
from .errors import ConfigError
from .models import ActuatorParams, TokenBucketParams, TokenBucketState
from .mpc import MpcConfig
from .polytope import Polytope
from .synthesis import SynthesisCertificate, params_fingerprint


def _require(d, field, ctx):
    if field not in d:
        raise ConfigError(f"{ctx}.{field}", f"missing config field: {ctx}.{field}")
    return d[field]


def _cost_matrix(value, size, field):
    """Scalar -> scale * I, vector -> diag, matrix -> as given."""
    if isinstance(value, (int, float)):
        return float(value) * np.eye(size)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        if arr.size != size:
            raise ConfigError(field, f"{field}: expected {size} diagonal entries, got {arr.size}")
        return np.diag(arr)
    if arr.shape != (size, size):
        raise ConfigError(field, f"{field}: expected a {size}x{size} matrix")
    return arr


def _polytope(value, dim, field):
    if "box" in value:
        box = value["box"]
        if isinstance(box, (int, float)):
            box = [box] * dim
        if len(box) != dim:
            raise ConfigError(field, f"{field}.box: expected {dim} half-widths")
        return Polytope.box(box)
    if "rows" in value:
        rows = np.asarray(value["rows"], dtype=float)
        if rows.ndim != 2 or rows.shape[1] != dim:
            raise ConfigError(field, f"{field}.rows: expected rows of length {dim}")
        return Polytope(rows)
    raise ConfigError(field, f"{field}: needs either 'box' or 'rows'")


def _plant_matrices(plant, ctx="plant"):
    if "fixture" in plant:
        name = plant["fixture"]
        if name != "walsh_batch_reactor":
            raise ConfigError(f"{ctx}.fixture", f"unknown plant fixture {name!r}")
        h = float(plant.get("sampling_period", fixtures.DEFAULT_SAMPLING_PERIOD))
        copies = int(plant.get("copies", 1))
        return fixtures.batch_reactor(h=h, copies=copies)
    if "A" in plant and "B" in plant:
        return np.asarray(plant["A"], dtype=float), np.asarray(plant["B"], dtype=float)
    raise ConfigError(f"{ctx}", f"{ctx}: needs 'fixture' or inline 'A'/'B'")


@dataclass(eq=False)
class RunSetup:
    """Everything one experiment needs: model, MPC knobs, start state, synthesis mode."""

    kind: str  # token_bucket | actuator
    params: object
    mpc: MpcConfig
    x0: object
    region_mode: str
    raw: dict


def load_config(path) -> RunSetup:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"config is not valid JSON: {exc}") from exc
    return parse_config(doc)


def parse_config(doc) -> RunSetup:
    plant = _require(doc, "plant", "config")
    network = _require(doc, "network", "config")
    cost = _require(doc, "cost", "config")
    A, B = _plant_matrices(plant)
    n_p, m_p = A.shape[0], B.shape[1]

    if "g" in network:
        for f in ("g", "c", "b"):
            _require(network, f, "network")
        constraints = _require(doc, "constraints", "config")
        try:
            params = TokenBucketParams(
                A=A, B=B,
                Q=_cost_matrix(_require(cost, "Q", "cost"), n_p, "cost.Q"),
                R=_cost_matrix(_require(cost, "R", "cost"), m_p, "cost.R"),
                g=int(network["g"]), c=int(network["c"]), b=int(network["b"]),
                X_p=_polytope(_require(constraints, "X_p", "constraints"), n_p, "constraints.X_p"),
                U_p=_polytope(_require(constraints, "U_p", "constraints"), m_p, "constraints.U_p"),
            )
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError("network", str(exc)) from exc
        kind = "token_bucket"
    elif "widths" in network:
        widths = tuple(int(w) for w in network["widths"])
        base = tuple(int(s) for s in _require(network, "base_schedule", "network"))
        R_spec = _require(cost, "R", "cost")
        if not isinstance(R_spec, list) or len(R_spec) != len(widths):
            raise ConfigError("cost.R", "cost.R: expected one block per actuator")
        blocks = tuple(_cost_matrix(rb, w, f"cost.R[{i}]")
                       for i, (rb, w) in enumerate(zip(R_spec, widths)))
        try:
            params = ActuatorParams(
                A=A, B=B,
                Q=_cost_matrix(_require(cost, "Q", "cost"), n_p, "cost.Q"),
                R_blocks=blocks, widths=widths, base_schedule=base,
            )
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError("network", str(exc)) from exc
        kind = "actuator"
    else:
        raise ConfigError("network", "network: needs token bucket integers (g,c,b) or actuator widths")

    mpc_doc = dict(doc.get("mpc", {}))
    if "horizon" not in mpc_doc:
        raise ConfigError("mpc.horizon", "missing config field: mpc.horizon")
    try:
        cfg = MpcConfig(
            horizon=int(mpc_doc["horizon"]),
            mode=mpc_doc.get("mode", "time_varying"),
            j0=int(mpc_doc.get("j0", 0)),
            warm_start=bool(mpc_doc.get("warm_start", True)),
            schedule_search=mpc_doc.get("schedule_search", "enumerate"),
            tie_tolerance=float(mpc_doc.get("tie_tolerance", 1e-9)),
        )
    except Exception as exc:
        raise ConfigError("mpc", str(exc)) from exc

    init = doc.get("initial_state", {})
    if kind == "token_bucket":
        x0 = TokenBucketState(
            x_p=np.asarray(_require(init, "x_p", "initial_state"), dtype=float),
            u_s=np.asarray(init.get("u_s", np.zeros(m_p)), dtype=float),
            beta=int(init.get("beta", params.b)),
        )
    else:
        x0 = np.asarray(_require(init, "x_p", "initial_state"), dtype=float)

    region_mode = doc.get("synthesis", {}).get("region_mode",
                                               "polytopic" if kind == "token_bucket" else "unbounded")
    return RunSetup(kind=kind, params=params, mpc=cfg, x0=x0, region_mode=region_mode, raw=doc)


# ---------------------------------------------------------------------------
# Certificate files (synthesis products + embedded model)
# ---------------------------------------------------------------------------

def model_to_dict(p):
    if isinstance(p, TokenBucketParams):
        return {
            "kind": "token_bucket",
            "A": p.A.tolist(), "B": p.B.tolist(),
            "Q": p.Q.tolist(), "R": p.R.tolist(),
            "g": p.g, "c": p.c, "b": p.b,
            "X_p": p.X_p.to_dict(), "U_p": p.U_p.to_dict(),
        }
    if isinstance(p, ActuatorParams):
        return {
            "kind": "actuator",
            "A": p.A.tolist(), "B": p.B.tolist(), "Q": p.Q.tolist(),
            "R_blocks": [Rb.tolist() for Rb in p.R_blocks],
            "widths": list(p.widths), "base_schedule": list(p.base_schedule),
        }
    raise ConfigError("model", f"unsupported model type {type(p)}")


def model_from_dict(d):
    if d["kind"] == "token_bucket":
        return TokenBucketParams(
            A=np.asarray(d["A"], dtype=float), B=np.asarray(d["B"], dtype=float),
            Q=np.asarray(d["Q"], dtype=float), R=np.asarray(d["R"], dtype=float),
            g=int(d["g"]), c=int(d["c"]), b=int(d["b"]),
            X_p=Polytope.from_dict(d["X_p"]), U_p=Polytope.from_dict(d["U_p"]),
        )
    if d["kind"] == "actuator":
        return ActuatorParams(
            A=np.asarray(d["A"], dtype=float), B=np.asarray(d["B"], dtype=float),
            Q=np.asarray(d["Q"], dtype=float),
            R_blocks=tuple(np.asarray(Rb, dtype=float) for Rb in d["R_blocks"]),
            widths=tuple(d["widths"]), base_schedule=tuple(d["base_schedule"]),
        )
    raise ConfigError("model.kind", f"unknown model kind {d['kind']!r}")


def save_certificate(path, cert: SynthesisCertificate, params):
    doc = cert.to_dict()
    doc["model"] = model_to_dict(params)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_certificate(path):
    """Returns (certificate, params); the hash binding is re-checked."""
    with open(path) as fh:
        doc = json.load(fh)
    if "model" not in doc:
        raise ConfigError("model", "certificate file lacks the embedded model")
    params = model_from_dict(doc["model"])
    cert = SynthesisCertificate.from_dict(doc)
    if cert.params_hash != params_fingerprint(params):
        raise ConfigError("params_hash", "certificate does not match its embedded model")
    return cert, params
