import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from schedmpc.config import load_config
from schedmpc.models import TokenBucketParams, TokenBucketState
from schedmpc.polytope import Polytope
from schedmpc.synthesis import synthesize_act, synthesize_tb

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def scalar_tb():
    """Small scalar token bucket instance with M = 2, cheap to synthesize."""
    p = TokenBucketParams(A=[[1.2]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], g=1, c=2, b=4,
                          X_p=Polytope.box([2.0]), U_p=Polytope.box([2.0]))
    cert = synthesize_tb(p)
    return p, cert


@pytest.fixture(scope="session")
def tb41_setup():
    return load_config(CONFIG_DIR / "token_bucket_41.json")


@pytest.fixture(scope="session")
def tb41_cert(tb41_setup):
    return synthesize_tb(tb41_setup.params, region_mode="polytopic")


@pytest.fixture(scope="session")
def act42_setup():
    return load_config(CONFIG_DIR / "actuator_42.json")


@pytest.fixture(scope="session")
def act42_cert(act42_setup):
    return synthesize_act(act42_setup.params)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
