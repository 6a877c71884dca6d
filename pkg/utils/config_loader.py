"""Load network, simulation and sweep settings from TOML or JSON files."""

from __future__ import annotations

import json
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

from controllers.experiment_manager import SWEEP_OUTPUTS, SweepSpec
from services.monte_carlo import (
    DEFAULT_CONFIDENCE,
    DEFAULT_MIN_EXPECTED_BS,
    DEFAULT_TRIALS,
    SimSettings,
    fitted_window_radius,
)
from services.network_model import (
    ClusterModel,
    ConfigValidationError,
    MaternCluster,
    NetworkConfig,
    ThomasCluster,
    TierParams,
    UserCluster,
    cell_edge_noise_power,
)
from utils.units import DEFAULT_DISC_RADIUS_M, dbm_to_watts, density_per_m2

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {
    "alpha", "tau_db", "noise", "density", "tiers", "cluster",
    "extra_clusters", "users", "sim", "sweep",
}
NOISE_KEYS = {"mode", "cell_edge_snr_db", "reference_tier"}
DENSITY_KEYS = {"unit", "disc_radius_m"}
TIER_KEYS = {
    "name", "power_dbm", "power_w", "density_open", "density_closed",
    "shadow_mu_db", "shadow_eta_db",
}
CLUSTER_KEYS = {"tier", "model", "sigma_m", "radius_m", "mean_users"}
USER_KEYS = {"ppp_density"}
SIM_KEYS = {
    "trials", "seed", "window_radius_m", "min_expected_bs", "confidence",
    "workers", "user_mode",
}
SWEEP_KEYS = {"variable", "values", "outputs", "tau_db", "reference_tier"}


class ConfigError(ValueError):
    """Raised when a configuration file cannot be parsed or validated."""

    pass


class LoadedConfig(NamedTuple):
    network: NetworkConfig
    settings: SimSettings
    sweep: SweepSpec


class _Reader:
    """Tracks the field path so error messages point at the culprit."""

    def __init__(self, source: Path) -> None:
        self.source = source

    def fail(self, where: str, reason: str) -> ConfigError:
        return ConfigError(f"{self.source}: {where}: {reason}")

    def table(self, data: Any, where: str, allowed: set) -> Dict[str, Any]:
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise self.fail(where, "expected a table")
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise self.fail(where, f"unknown key(s) {', '.join(unknown)}")
        return data

    def number(self, data: Dict[str, Any], key: str, where: str, default=None) -> Optional[float]:
        if key not in data:
            if default is None:
                return None
            return float(default)
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.fail(f"{where}.{key}" if where else key, f"expected a number, got {value!r}")
        return float(value)

    def integer(self, data: Dict[str, Any], key: str, where: str, default: int) -> int:
        value = data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(f"{where}.{key}", f"expected an integer, got {value!r}")
        return value


def _parse(path: Path) -> Dict[str, Any]:
    text = path.read_text(encoding="utf-8")
    suffix = path.suffix.lower()
    if suffix == ".toml":
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            line = getattr(exc, "lineno", None)
            if line is None:
                match = re.search(r"line (\d+)", str(exc))
                line = int(match.group(1)) if match else "?"
            raise ConfigError(f"{path}:{line}: {exc}") from exc
    if suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}:1: top level must be an object")
        return data
    raise ConfigError(f"{path}: unsupported configuration format '{suffix}' (use .toml or .json)")


def _cluster_model(reader: _Reader, block: Dict[str, Any], where: str) -> ClusterModel:
    model = block.get("model")
    if model == "thomas":
        sigma = reader.number(block, "sigma_m", where)
        if sigma is None:
            raise reader.fail(f"{where}.sigma_m", "required for the thomas model")
        return ThomasCluster(sigma)
    if model == "matern":
        radius = reader.number(block, "radius_m", where)
        if radius is None:
            raise reader.fail(f"{where}.radius_m", "required for the matern model")
        return MaternCluster(radius)
    raise reader.fail(f"{where}.model", f"expected 'thomas' or 'matern', got {model!r}")


def _guarded(reader: _Reader, where: str, build):
    try:
        return build()
    except ConfigValidationError as exc:
        raise reader.fail(where, str(exc)) from exc


def _tiers(reader: _Reader, raw: Any, unit: str, disc_radius: float) -> Tuple[TierParams, ...]:
    if not isinstance(raw, list) or not raw:
        raise reader.fail("tiers", "expected a non-empty array of tables")
    tiers: List[TierParams] = []
    for idx, entry in enumerate(raw, start=1):
        where = f"tiers[{idx}]"
        block = reader.table(entry, where, TIER_KEYS)
        if ("power_w" in block) == ("power_dbm" in block):
            raise reader.fail(where, "give exactly one of power_w or power_dbm")
        if "power_w" in block:
            power = reader.number(block, "power_w", where)
        else:
            power = dbm_to_watts(reader.number(block, "power_dbm", where))
        densities = []
        for key in ("density_open", "density_closed"):
            value = reader.number(block, key, where, default=0.0)
            try:
                densities.append(density_per_m2(value, unit, disc_radius))
            except ValueError as exc:
                raise reader.fail(f"{where}.{key}", str(exc)) from exc
        tiers.append(
            _guarded(
                reader,
                where,
                lambda: TierParams(
                    power=power,
                    lambda_open=densities[0],
                    lambda_closed=densities[1],
                    shadow_mu_db=reader.number(block, "shadow_mu_db", where, default=0.0),
                    shadow_eta_db=reader.number(block, "shadow_eta_db", where, default=0.0),
                    name=str(block.get("name", f"tier{idx}")),
                ),
            )
        )
    return tuple(tiers)


def _noise_power(reader: _Reader, block: Dict[str, Any], tiers, alpha: float) -> float:
    mode = block.get("mode", "off")
    if mode == "off":
        return 0.0
    if mode != "cell_edge":
        raise reader.fail("noise.mode", f"expected 'off' or 'cell_edge', got {mode!r}")
    snr_db = reader.number(block, "cell_edge_snr_db", "noise")
    if snr_db is None:
        raise reader.fail("noise.cell_edge_snr_db", "required when mode is 'cell_edge'")
    reference = reader.integer(block, "reference_tier", "noise", 1)
    return _guarded(
        reader, "noise", lambda: cell_edge_noise_power(tiers, alpha, snr_db, reference)
    )


def build_config(data: Dict[str, Any], source: str | Path = "<config>") -> LoadedConfig:
    """Validate an already parsed configuration tree."""

    reader = _Reader(Path(str(source)))
    reader.table(data, "<root>", TOP_LEVEL_KEYS)

    alpha = reader.number(data, "alpha", "")
    if alpha is None:
        raise reader.fail("alpha", "required")
    if not alpha > 2:
        raise reader.fail("alpha", f"alpha must exceed 2 (got {alpha:g})")
    tau_db = reader.number(data, "tau_db", "", default=0.0)

    density = reader.table(data.get("density"), "density", DENSITY_KEYS)
    unit = density.get("unit", "per_m2")
    disc_radius = reader.number(density, "disc_radius_m", "density", default=DEFAULT_DISC_RADIUS_M)
    tiers = _tiers(reader, data.get("tiers"), unit, disc_radius)

    noise = reader.table(data.get("noise"), "noise", NOISE_KEYS)
    noise_power = _noise_power(reader, noise, tiers, alpha)

    cluster_block = reader.table(data.get("cluster"), "cluster", CLUSTER_KEYS)
    if not cluster_block:
        raise reader.fail("cluster", "required")
    primary_model = _guarded(reader, "cluster", lambda: _cluster_model(reader, cluster_block, "cluster"))
    extras = []
    for idx, entry in enumerate(data.get("extra_clusters", []) or [], start=1):
        where = f"extra_clusters[{idx}]"
        block = reader.table(entry, where, CLUSTER_KEYS)
        model = _guarded(reader, where, lambda: _cluster_model(reader, block, where))
        extras.append(
            _guarded(
                reader,
                where,
                lambda: UserCluster(
                    tier=reader.integer(block, "tier", where, 0),
                    model=model,
                    mean_users=reader.number(block, "mean_users", where, default=1.0),
                ),
            )
        )

    users = reader.table(data.get("users"), "users", USER_KEYS)
    try:
        ppp_density = density_per_m2(
            reader.number(users, "ppp_density", "users", default=0.0), unit, disc_radius
        )
    except ValueError as exc:
        raise reader.fail("users.ppp_density", str(exc)) from exc

    network = _guarded(
        reader,
        "cluster",
        lambda: NetworkConfig(
            alpha=alpha,
            tiers=tiers,
            cluster_tier=reader.integer(cluster_block, "tier", "cluster", 0),
            cluster=primary_model,
            noise_power=noise_power,
            mean_users_per_cluster=reader.number(cluster_block, "mean_users", "cluster", default=1.0),
            ppp_user_density=ppp_density,
            extra_clusters=tuple(extras),
        ),
    )

    sim = reader.table(data.get("sim"), "sim", SIM_KEYS)
    min_expected_bs = reader.number(sim, "min_expected_bs", "sim", default=DEFAULT_MIN_EXPECTED_BS)
    window_radius = reader.number(sim, "window_radius_m", "sim", default=None)
    if window_radius is None:
        window_radius = fitted_window_radius(network, min_expected_bs)
        logger.debug("window_radius_m not set, fitted %g m to the densities", window_radius)
    settings = _guarded(
        reader,
        "sim",
        lambda: SimSettings(
            trials=reader.integer(sim, "trials", "sim", DEFAULT_TRIALS),
            master_seed=reader.integer(sim, "seed", "sim", 0),
            window_radius=window_radius,
            min_expected_bs=min_expected_bs,
            confidence=reader.number(sim, "confidence", "sim", default=DEFAULT_CONFIDENCE),
            workers=reader.integer(sim, "workers", "sim", 1),
            user_mode=str(sim.get("user_mode", "clustered")),
        ),
    )

    sweep_block = reader.table(data.get("sweep"), "sweep", SWEEP_KEYS)
    if sweep_block:
        values = sweep_block.get("values")
        if not isinstance(values, list):
            raise reader.fail("sweep.values", "expected an array of numbers")
        sweep = _guarded(
            reader,
            "sweep",
            lambda: SweepSpec(
                variable=str(sweep_block.get("variable", "")),
                values=tuple(values),
                outputs=tuple(sweep_block.get("outputs", SWEEP_OUTPUTS)),
                tau_db=reader.number(sweep_block, "tau_db", "sweep", default=tau_db),
                reference_tier=reader.integer(sweep_block, "reference_tier", "sweep", 1),
            ),
        )
        _guarded(reader, "sweep", lambda: sweep.check_model(network))
    else:
        sweep = SweepSpec(variable="tau_db", values=(tau_db,), tau_db=tau_db)

    logger.debug(
        "Loaded %s: K=%d, %s, noise %.3g W", source, network.K, network.cluster.describe(), noise_power
    )
    return LoadedConfig(network, settings, sweep)


def load_config(path: str | Path) -> LoadedConfig:
    """Parse and validate a ``.toml`` or ``.json`` configuration file."""

    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such configuration file")
    return build_config(_parse(path), path)


__all__ = ["ConfigError", "LoadedConfig", "build_config", "load_config"]
