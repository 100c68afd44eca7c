import numpy as np
import pytest

from oscar_mrfm.config import RunConfig
from oscar_mrfm.model import SystemParams


@pytest.fixture
def paper_params():
    """Reference dimensionless parameter set."""
    return SystemParams()


@pytest.fixture
def quiet_params():
    """All noise and damping off; single-tone dynamics for integrator checks."""
    return SystemParams(kappa_s=0.0, a2=0.0, a1=0.0, b1=0.0, gamma_damp=0.0,
                        lambda_pc=0.0)


def make_config(**overrides) -> RunConfig:
    base = dict(mode="gaussian", n_samples=512, seed=0)
    base.update(overrides)
    params = base.pop("params", None)
    cfg = RunConfig(**base) if params is None else RunConfig(params=params, **base)
    return cfg


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)
