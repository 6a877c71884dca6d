import math

import pytest

from services.network_model import (
    MaternCluster,
    NetworkConfig,
    ThomasCluster,
    TierParams,
    effective_network,
)
from utils.units import dbm_to_watts

MACRO_DENSITY = 1.0 / (math.pi * 500.0 ** 2)   # one macro BS per 500 m disc
SMALL_DENSITY = 100.0 * MACRO_DENSITY


def two_tier(cluster, closed=SMALL_DENSITY, eta_db=0.0, noise_power=0.0, **extra):
    """Macro tier at 46 dBm plus a 16 dBm small-cell tier hosting the clusters."""
    tiers = (
        TierParams(dbm_to_watts(46.0), MACRO_DENSITY, shadow_eta_db=eta_db, name="macro"),
        TierParams(
            dbm_to_watts(16.0), SMALL_DENSITY, closed, shadow_eta_db=eta_db, name="small"
        ),
    )
    return NetworkConfig(
        alpha=4.0,
        tiers=tiers,
        cluster_tier=2,
        cluster=cluster,
        noise_power=noise_power,
        **extra,
    )


@pytest.fixture
def thomas_cfg():
    return two_tier(ThomasCluster(20.0))


@pytest.fixture
def matern_cfg():
    return two_tier(MaternCluster(40.0))


@pytest.fixture
def thomas_net(thomas_cfg):
    return effective_network(thomas_cfg)


@pytest.fixture
def matern_net(matern_cfg):
    return effective_network(matern_cfg)
