"""Network configuration, displaced densities and distance laws.

Tier indices follow the analytic convention: tiers ``1..K`` are the BS
tiers of :class:`NetworkConfig`, tier ``0`` is the singleton tier made of
the typical user's own cluster-center BS (transmit power ``P_0 = P_i``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Tuple

import numpy as np
from scipy import optimize

from utils.special_math import (
    DEFAULT_QUADRATURE,
    DomainError,
    QuadratureSpec,
    integrate_interval,
    integrate_semi_infinite,
    lognormal_frac_moment,
)
from utils.units import mean_cell_radius

logger = logging.getLogger(__name__)

NORMALISATION_TOL = 1e-6     # tolerance on user-supplied radial laws
CCDF_BOUNDARY_TOL = 1e-9


class ConfigValidationError(ValueError):
    """Raised when a configuration object violates one of its invariants."""

    pass


def _as_output(value):
    return float(value) if np.ndim(value) == 0 else value


# ----------------------------------------------------------------------
# Base station tiers
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class TierParams:
    """Transmit power, densities and shadowing of one BS tier."""

    power: float                 # W
    lambda_open: float           # BSs per m^2
    lambda_closed: float = 0.0   # BSs per m^2
    shadow_mu_db: float = 0.0    # dB
    shadow_eta_db: float = 0.0   # dB
    name: str = ""

    def __post_init__(self) -> None:
        if not self.power > 0:
            raise ConfigValidationError(f"power must be positive (got {self.power})")
        if not self.lambda_open >= 0:
            raise ConfigValidationError(
                f"lambda_open must be non-negative (got {self.lambda_open})"
            )
        if not self.lambda_closed >= 0:
            raise ConfigValidationError(
                f"lambda_closed must be non-negative (got {self.lambda_closed})"
            )
        if not self.shadow_eta_db >= 0:
            raise ConfigValidationError(
                f"shadow_eta_db must be non-negative (got {self.shadow_eta_db})"
            )
        if not math.isfinite(self.shadow_mu_db):
            raise ConfigValidationError(f"shadow_mu_db must be finite (got {self.shadow_mu_db})")


# ----------------------------------------------------------------------
# Cluster models
# ----------------------------------------------------------------------
class ClusterModel:
    """Radial law of the distance ``Y0`` between a user and its cluster center."""

    kind = "general"
    support_max = math.inf

    def pdf(self, y):
        raise NotImplementedError

    def ccdf(self, y):
        raise NotImplementedError

    def conditional_pdf(self, y, r):
        """Density of ``Y0`` at ``y`` given ``Y0 > r``."""
        y = np.asarray(y, dtype=float)
        tail = float(self.ccdf(r))
        if tail <= 0:
            return _as_output(np.zeros_like(y))
        return _as_output(np.where(y > r, self.pdf(y) / tail, 0.0))

    def can_condition(self, r: float) -> bool:
        """Whether the event ``Y0 > r`` has positive probability."""
        return r < self.support_max and float(self.ccdf(r)) > 0

    def tail_radius(self, r: float, rel: float) -> float:
        """Radius past which the conditional mass beyond ``r`` is below ``rel``."""
        return self.support_max

    def sample_radius(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample_offset(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` isotropic 2-D offsets, shape ``(size, 2)``."""
        radius = self.sample_radius(rng, size)
        theta = rng.uniform(0.0, 2.0 * math.pi, size)
        return np.column_stack((radius * np.cos(theta), radius * np.sin(theta)))

    def scaled(self, zeta: float) -> "ClusterModel":
        raise NotImplementedError

    def describe(self) -> str:
        return self.kind


@dataclass(frozen=True)
class ThomasCluster(ClusterModel):
    """Gaussian offsets with per-axis scale ``sigma``; ``Y0`` is Rayleigh."""

    sigma: float  # m

    kind = "thomas"

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ConfigValidationError(f"sigma must be positive (got {self.sigma})")

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        s2 = self.sigma ** 2
        return _as_output(np.where(y >= 0, y / s2 * np.exp(-(y * y) / (2.0 * s2)), 0.0))

    def ccdf(self, y):
        y = np.asarray(y, dtype=float)
        return _as_output(np.where(y > 0, np.exp(-(y * y) / (2.0 * self.sigma ** 2)), 1.0))

    def conditional_pdf(self, y, r):
        y = np.asarray(y, dtype=float)
        s2 = self.sigma ** 2
        r = max(float(r), 0.0)
        # exp(-(y^2 - r^2)/2s^2) stays finite when ccdf(r) underflows
        return _as_output(
            np.where(y > r, y / s2 * np.exp(-(y * y - r * r) / (2.0 * s2)), 0.0)
        )

    def can_condition(self, r: float) -> bool:
        return True

    def tail_radius(self, r: float, rel: float) -> float:
        r = max(float(r), 0.0)
        return math.sqrt(r * r + 2.0 * self.sigma ** 2 * math.log(1.0 / rel))

    def sample_radius(self, rng, size):
        return rng.rayleigh(self.sigma, size)

    def sample_offset(self, rng, size):
        return rng.normal(0.0, self.sigma, size=(size, 2))

    def scaled(self, zeta: float) -> "ThomasCluster":
        return ThomasCluster(self.sigma * zeta)

    def describe(self) -> str:
        return f"thomas(sigma={self.sigma:g} m)"


@dataclass(frozen=True)
class MaternCluster(ClusterModel):
    """Uniform offsets inside a disc of radius ``radius``."""

    radius: float  # m

    kind = "matern"

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ConfigValidationError(f"radius must be positive (got {self.radius})")

    @property
    def support_max(self) -> float:  # type: ignore[override]
        return self.radius

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        r2 = self.radius ** 2
        return _as_output(np.where((y >= 0) & (y <= self.radius), 2.0 * y / r2, 0.0))

    def ccdf(self, y):
        y = np.asarray(y, dtype=float)
        r2 = self.radius ** 2
        return _as_output(np.clip((r2 - np.maximum(y, 0.0) ** 2) / r2, 0.0, 1.0))

    def conditional_pdf(self, y, r):
        y = np.asarray(y, dtype=float)
        r = max(float(r), 0.0)
        if r >= self.radius:
            return _as_output(np.zeros_like(y))
        inside = (y > r) & (y <= self.radius)
        return _as_output(np.where(inside, 2.0 * y / (self.radius ** 2 - r * r), 0.0))

    def can_condition(self, r: float) -> bool:
        return r < self.radius

    def tail_radius(self, r: float, rel: float) -> float:
        return self.radius

    def sample_radius(self, rng, size):
        return self.radius * np.sqrt(rng.uniform(0.0, 1.0, size))

    def scaled(self, zeta: float) -> "MaternCluster":
        return MaternCluster(self.radius * zeta)

    def describe(self) -> str:
        return f"matern(radius={self.radius:g} m)"


@dataclass(frozen=True, eq=False)
class GeneralRadialCluster(ClusterModel):
    """User-supplied radial pdf/ccdf pair, checked for consistency on creation."""

    pdf_fn: Callable[[float], float]
    ccdf_fn: Callable[[float], float]
    support: float = math.inf  # m
    length_scale: float = 1.0  # m, typical size used to map the half line
    quadrature: QuadratureSpec = field(default=DEFAULT_QUADRATURE, repr=False)

    kind = "general"

    def __post_init__(self) -> None:
        if not self.support > 0:
            raise ConfigValidationError(f"support_max must be positive (got {self.support})")
        if not self.length_scale > 0:
            raise ConfigValidationError(
                f"length_scale must be positive (got {self.length_scale})"
            )
        if abs(float(self.ccdf_fn(0.0)) - 1.0) > NORMALISATION_TOL:
            raise ConfigValidationError("ccdf(0) must equal 1")
        if math.isfinite(self.support):
            if abs(float(self.ccdf_fn(self.support))) > CCDF_BOUNDARY_TOL:
                raise ConfigValidationError("ccdf(support_max) must equal 0")
            mass = integrate_interval(self.pdf, 0.0, self.support, self.quadrature)
        else:
            mass = integrate_semi_infinite(
                self.pdf, 0.0, self.quadrature, scale=self.length_scale
            )
        if abs(mass - 1.0) > NORMALISATION_TOL:
            raise ConfigValidationError(f"pdf integrates to {mass:.9g}, expected 1")

    @property
    def support_max(self) -> float:  # type: ignore[override]
        return self.support

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        inside = (y >= 0) & (y <= self.support)
        values = np.vectorize(lambda v: float(self.pdf_fn(v)), otypes=[float])(
            np.where(inside, y, 0.0)
        )
        return _as_output(np.where(inside, values, 0.0))

    def ccdf(self, y):
        y = np.asarray(y, dtype=float)
        clipped = np.clip(y, 0.0, self.support)
        values = np.vectorize(lambda v: float(self.ccdf_fn(v)), otypes=[float])(
            np.where(np.isfinite(clipped), clipped, 0.0)
        )
        values = np.where(y >= self.support, 0.0, values)
        return _as_output(np.where(y <= 0, 1.0, values))

    def _inverse_ccdf(self, u: float) -> float:
        hi = self.support if math.isfinite(self.support) else self.length_scale
        while not math.isfinite(self.support) and float(self.ccdf(hi)) > u:
            hi *= 2.0
        return optimize.brentq(lambda y: float(self.ccdf(y)) - u, 0.0, hi, xtol=1e-12)

    def sample_radius(self, rng, size):
        return np.array([self._inverse_ccdf(u) for u in rng.uniform(0.0, 1.0, size)])

    def scaled(self, zeta: float) -> "GeneralRadialCluster":
        if not zeta > 0:
            raise ConfigValidationError(f"scale factor must be positive (got {zeta})")
        pdf_fn, ccdf_fn = self.pdf_fn, self.ccdf_fn
        return GeneralRadialCluster(
            lambda y: pdf_fn(y / zeta) / zeta,
            lambda y: ccdf_fn(y / zeta),
            self.support * zeta,
            self.length_scale * zeta,
            self.quadrature,
        )


# ----------------------------------------------------------------------
# Network configuration
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class UserCluster:
    """A clustered user population attached to the BSs of one tier."""

    tier: int
    model: ClusterModel
    mean_users: float = 1.0

    def __post_init__(self) -> None:
        if not self.mean_users >= 0:
            raise ConfigValidationError(
                f"mean_users must be non-negative (got {self.mean_users})"
            )


@dataclass(frozen=True)
class NetworkConfig:
    """Complete description of the K-tier network seen by the typical user."""

    alpha: float
    tiers: Tuple[TierParams, ...]
    cluster_tier: int
    cluster: ClusterModel
    noise_power: float = 0.0            # W
    mean_users_per_cluster: float = 1.0
    ppp_user_density: float = 0.0       # users per m^2
    extra_clusters: Tuple[UserCluster, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "tiers", tuple(self.tiers))
        object.__setattr__(self, "extra_clusters", tuple(self.extra_clusters))
        if not self.alpha > 2:
            raise ConfigValidationError(f"alpha must exceed 2 (got {self.alpha})")
        if not self.noise_power >= 0:
            raise ConfigValidationError(
                f"noise_power must be non-negative (got {self.noise_power})"
            )
        if len(self.tiers) < 1:
            raise ConfigValidationError("at least one tier is required")
        if not isinstance(self.cluster, ClusterModel):
            raise ConfigValidationError("cluster must be a ClusterModel")
        self._check_tier(self.cluster_tier, "cluster_tier")
        if not self.mean_users_per_cluster >= 0:
            raise ConfigValidationError(
                f"mean_users_per_cluster must be non-negative (got {self.mean_users_per_cluster})"
            )
        if not self.ppp_user_density >= 0:
            raise ConfigValidationError(
                f"ppp_user_density must be non-negative (got {self.ppp_user_density})"
            )
        for extra in self.extra_clusters:
            self._check_tier(extra.tier, "extra_clusters.tier")

    def _check_tier(self, k: int, label: str) -> None:
        if not 1 <= k <= len(self.tiers):
            raise ConfigValidationError(f"{label} must lie in 1..{len(self.tiers)} (got {k})")

    # ------------------------------------------------------------------
    @property
    def K(self) -> int:
        return len(self.tiers)

    def tier(self, k: int) -> TierParams:
        """Tier ``k`` in 1..K; tier 0 maps onto the clustered tier."""
        if k == 0:
            return self.tiers[self.cluster_tier - 1]
        self._check_tier(k, "tier")
        return self.tiers[k - 1]

    def power(self, k: int) -> float:
        return self.tier(k).power

    @property
    def shadowing_free(self) -> bool:
        """No tier (hence not tier 0 either) carries shadowing."""
        return all(t.shadow_eta_db == 0 and t.shadow_mu_db == 0 for t in self.tiers)

    @property
    def clusters(self) -> Tuple[UserCluster, ...]:
        primary = UserCluster(self.cluster_tier, self.cluster, self.mean_users_per_cluster)
        return (primary,) + self.extra_clusters

    # ------------------------------------------------------------------
    def with_primary_cluster(self, uc: UserCluster) -> "NetworkConfig":
        """Configuration as seen by a typical user of cluster population ``uc``."""
        return replace(
            self,
            cluster_tier=uc.tier,
            cluster=uc.model,
            mean_users_per_cluster=uc.mean_users,
            extra_clusters=(),
        )

    def with_tier(self, k: int, **changes) -> "NetworkConfig":
        self._check_tier(k, "tier")
        tiers = list(self.tiers)
        tiers[k - 1] = replace(tiers[k - 1], **changes)
        return replace(self, tiers=tuple(tiers))

    def with_cluster(self, model: ClusterModel) -> "NetworkConfig":
        return replace(self, cluster=model)


def cell_edge_noise_power(
    tiers: Tuple[TierParams, ...], alpha: float, snr_db: float, reference_tier: int = 1
) -> float:
    """Noise power giving ``snr_db`` at the mean cell radius of ``reference_tier``.

    ``N0 = P_ref * d_edge**-alpha / SNR`` with ``d_edge = 1/sqrt(pi*lambda_ref)``.
    """

    if not 1 <= reference_tier <= len(tiers):
        raise ConfigValidationError(
            f"reference_tier must lie in 1..{len(tiers)} (got {reference_tier})"
        )
    ref = tiers[reference_tier - 1]
    if not ref.lambda_open > 0:
        raise ConfigValidationError("reference tier needs a positive open density")
    d_edge = mean_cell_radius(ref.lambda_open)
    return ref.power * d_edge ** (-alpha) / 10.0 ** (snr_db / 10.0)


# ----------------------------------------------------------------------
# Equivalent (shadowing-free) network
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class EffectiveNetwork:
    """Displaced densities and power ratios.

    Density tuples are indexed by tier ``0..K``; entry 0 is unused (tier 0
    is a single BS, not a PPP).  ``powers[0]`` equals the clustered tier's
    power.
    """

    alpha: float
    powers: Tuple[float, ...]
    eff_lambda_open: Tuple[float, ...]
    eff_lambda_closed: Tuple[float, ...]

    @property
    def K(self) -> int:
        return len(self.powers) - 1

    def power_ratio(self, j: int, k: int) -> float:
        """``(P_k / P_j) ** (1/alpha)``."""
        return (self.powers[k] / self.powers[j]) ** (1.0 / self.alpha)


def effective_network(cfg: NetworkConfig) -> EffectiveNetwork:
    exponent = 2.0 / cfg.alpha
    open_, closed = [0.0], [0.0]
    for tier in cfg.tiers:
        moment = lognormal_frac_moment(tier.shadow_mu_db, tier.shadow_eta_db, exponent)
        open_.append(tier.lambda_open * moment)
        closed.append(tier.lambda_closed * moment)
    powers = tuple(cfg.power(k) for k in range(cfg.K + 1))
    return EffectiveNetwork(cfg.alpha, powers, tuple(open_), tuple(closed))


# ----------------------------------------------------------------------
# Distance distributions
# ----------------------------------------------------------------------
def _ppp_density(k: int, net: EffectiveNetwork) -> float:
    if k == 0:
        raise DomainError("tier 0 is the cluster center; use cluster_dist_pdf")
    if not 1 <= k <= net.K:
        raise DomainError(f"tier index must lie in 1..{net.K} (got {k})")
    return net.eff_lambda_open[k]


def nearest_dist_pdf(k: int, r, net: EffectiveNetwork):
    """PDF of the distance to the nearest (displaced) open BS of tier ``k``."""
    lam = _ppp_density(k, net)
    r = np.asarray(r, dtype=float)
    return _as_output(
        np.where(r >= 0, 2.0 * math.pi * lam * r * np.exp(-math.pi * lam * r * r), 0.0)
    )


def nearest_dist_ccdf(k: int, r, net: EffectiveNetwork):
    lam = _ppp_density(k, net)
    r = np.asarray(r, dtype=float)
    return _as_output(np.where(r > 0, np.exp(-math.pi * lam * r * r), 1.0))


def cluster_dist_pdf(model: ClusterModel, y0):
    return model.pdf(y0)


def cluster_dist_ccdf(model: ClusterModel, y0):
    return model.ccdf(y0)


__all__ = [
    "ClusterModel",
    "ConfigValidationError",
    "EffectiveNetwork",
    "GeneralRadialCluster",
    "MaternCluster",
    "NetworkConfig",
    "ThomasCluster",
    "TierParams",
    "UserCluster",
    "cell_edge_noise_power",
    "cluster_dist_ccdf",
    "cluster_dist_pdf",
    "effective_network",
    "nearest_dist_ccdf",
    "nearest_dist_pdf",
]
