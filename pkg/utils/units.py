"""Unit conversions for powers, thresholds and densities."""

import math

# ----------------------------------------------------------------------
# Reference values
# ----------------------------------------------------------------------
DBM_REFERENCE_W = 1e-3           # W at 0 dBm
DEFAULT_DISC_RADIUS_M = 500.0    # m, radius of the "count per disc" convention

# Scale factors to BSs per m^2.  ``per_disc`` depends on the disc radius
# and is resolved in :func:`density_per_m2`.
DENSITY_UNITS = {
    "per_m2": 1.0,
    "per_km2": 1e-6,
    "per_disc": None,
}


def db_to_linear(value_db: float) -> float:
    """Convert a ratio in dB to linear scale."""
    return 10.0 ** (value_db / 10.0)


def dbm_to_watts(power_dbm: float) -> float:
    return DBM_REFERENCE_W * db_to_linear(power_dbm)


def density_per_m2(
    value: float, unit: str = "per_m2", disc_radius_m: float = DEFAULT_DISC_RADIUS_M
) -> float:
    """Normalise a density to points per m^2.

    ``per_disc`` reads ``value`` as the mean count inside a disc of radius
    ``disc_radius_m``, e.g. 100 small cells per pi*(500 m)^2.
    """
    if unit not in DENSITY_UNITS:
        raise ValueError(
            f"Unknown density unit '{unit}' (expected one of {', '.join(DENSITY_UNITS)})"
        )
    if value < 0:
        raise ValueError(f"Density must be non-negative (got {value})")
    if unit == "per_disc":
        if disc_radius_m <= 0:
            raise ValueError(f"Disc radius must be positive (got {disc_radius_m} m)")
        return value / (math.pi * disc_radius_m ** 2)
    return value * DENSITY_UNITS[unit]


def mean_cell_radius(density: float) -> float:
    """Radius of the disc holding one point on average, 1/sqrt(pi*density)."""
    if density <= 0:
        raise ValueError(f"Density must be positive (got {density})")
    return 1.0 / math.sqrt(math.pi * density)
