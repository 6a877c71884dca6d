import math

import pytest

from utils.units import db_to_linear, dbm_to_watts, density_per_m2, mean_cell_radius


def test_db_conversions():
    assert db_to_linear(30.0) == pytest.approx(1000.0)
    assert db_to_linear(-20.0) == pytest.approx(0.01)
    assert dbm_to_watts(46.0) == pytest.approx(39.8107, rel=1e-5)
    assert dbm_to_watts(46.0) / dbm_to_watts(16.0) == pytest.approx(1e3)


def test_density_units():
    assert density_per_m2(5.0, "per_km2") == pytest.approx(5e-6)
    assert density_per_m2(100.0, "per_disc", 500.0) == pytest.approx(100.0 / (math.pi * 250000.0))
    with pytest.raises(ValueError, match="Unknown density unit"):
        density_per_m2(1.0, "per_acre")
    with pytest.raises(ValueError):
        density_per_m2(-1.0)
    with pytest.raises(ValueError):
        density_per_m2(1.0, "per_disc", 0.0)


def test_mean_cell_radius_inverts_disc_density():
    assert mean_cell_radius(density_per_m2(1.0, "per_disc", 500.0)) == pytest.approx(500.0)
    with pytest.raises(ValueError):
        mean_cell_radius(0.0)
