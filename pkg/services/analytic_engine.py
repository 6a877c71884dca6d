"""Analytic coverage of the typical clustered user.

All distances are taken in the equivalent shadowing-free network: each
tier's open/closed densities are the displaced densities of
:class:`~services.network_model.EffectiveNetwork`, and the cluster-center
distance is rescaled by ``v0 ** (1/alpha)`` for a shadow gain ``v0`` on the
center link.  Tier-``j`` quantities conditioned on ``v0`` are deconditioned
with Gauss-Hermite quadrature at the last step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from services.network_model import (
    ConfigValidationError,
    EffectiveNetwork,
    MaternCluster,
    NetworkConfig,
    ThomasCluster,
    effective_network,
)
from utils.special_math import (
    DEFAULT_QUADRATURE,
    DomainError,
    QuadratureSpec,
    closed_access_factor_H,
    expect_over_shadow,
    integrate_interval,
    integrate_semi_infinite,
    interference_factor_G,
)

logger = logging.getLogger(__name__)

TAIL_MARGIN = 10.0            # e-folds added to -ln(abs_tol) when cutting Gaussian tails
BOUND_RESIDUAL_WARN = 1e-6    # closed-form vs general bound disagreement worth a warning
SMALL_ARGUMENT = 1e-5         # below this the (1 - e^-s)/s series is used


class ModelMismatchError(ValueError):
    """Raised when a closed form is requested for the wrong cluster model."""

    pass


class DegenerateConditioningError(RuntimeError):
    """Raised when the cluster center cannot lie beyond the exclusion radius."""

    pass


class MixedWeightsError(ValueError):
    """Raised when no user population carries positive weight."""

    pass


@dataclass(frozen=True)
class CoverageReport:
    """Association, per-tier and total coverage for one SIR threshold."""

    tau: float
    assoc: Tuple[float, ...]
    per_tier_coverage: Tuple[float, ...]
    total: float
    lower_bound: float
    upper_bound: float
    ppp_limit: float
    bound_residual: Optional[float] = None

    def as_dict(self) -> dict:
        data = asdict(self)
        data["assoc"] = list(self.assoc)
        data["per_tier_coverage"] = list(self.per_tier_coverage)
        data["lower"] = data.pop("lower_bound")
        data["upper"] = data.pop("upper_bound")
        return data


# ----------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------
def _check_tier_index(j: int, net: EffectiveNetwork, allow_center: bool = True) -> None:
    first = 0 if allow_center else 1
    if not first <= j <= net.K:
        raise DomainError(f"tier index must lie in {first}..{net.K} (got {j})")


def _check_gain(v0: float) -> None:
    if not v0 > 0:
        raise DomainError(f"shadow gain must be positive (got {v0})")


def _check_tau(tau: float) -> None:
    if not tau >= 0:
        raise DomainError(f"tau must be non-negative (got {tau})")


def _tail_depth(spec: QuadratureSpec) -> float:
    return -math.log(spec.abs_tol) + TAIL_MARGIN


def _open_spread(j: int, net: EffectiveNetwork) -> float:
    """``pi * sum_k Pbar_jk^2 * lambda_k`` over the open PPP tiers."""
    return math.pi * sum(
        net.power_ratio(j, k) ** 2 * net.eff_lambda_open[k] for k in range(1, net.K + 1)
    )


def _one_minus_ratio(s: float) -> float:
    """``1 - (1 - exp(-s)) / s``, accurate for small ``s``."""
    if s < SMALL_ARGUMENT:
        return s / 2.0 - s * s / 6.0
    return 1.0 + math.expm1(-s) / s


def _center_scale(j: int, v0: float, net: EffectiveNetwork) -> float:
    """Factor mapping a tier-j serving distance to the cluster-center distance."""
    scale = v0 ** (1.0 / net.alpha)
    return scale if j == 0 else scale * net.power_ratio(j, 0)


def _serving_density(
    j: int, w: float, v0: float, cfg: NetworkConfig, net: EffectiveNetwork
) -> float:
    """Joint density of serving tier ``j`` at distance ``w`` (integrates to A_j)."""
    if w < 0:
        return 0.0
    spread = _open_spread(j, net)
    scale = _center_scale(j, v0, net)
    if j == 0:
        return scale * float(cfg.cluster.pdf(scale * w)) * math.exp(-spread * w * w)
    lam = net.eff_lambda_open[j]
    if lam == 0:
        return 0.0
    return (
        2.0 * math.pi * lam * w * math.exp(-spread * w * w)
        * float(cfg.cluster.ccdf(scale * w))
    )


def _serving_upper_limit(
    j: int, v0: float, cfg: NetworkConfig, net: EffectiveNetwork, spec: QuadratureSpec
) -> float:
    depth = _tail_depth(spec)
    limit = math.inf
    spread = _open_spread(j, net)
    if spread > 0:
        limit = math.sqrt(depth / spread)
    reach = cfg.cluster.tail_radius(0.0, math.exp(-depth))
    return min(limit, reach / _center_scale(j, v0, net))


def _integrate_distance(
    f: Callable[[float], float],
    upper: float,
    length_scale: float,
    spec: QuadratureSpec,
) -> float:
    if math.isfinite(upper):
        return integrate_interval(f, 0.0, upper, spec)
    return integrate_semi_infinite(f, 0.0, spec, scale=length_scale)


def _length_scale(j: int, v0: float, cfg: NetworkConfig, net: EffectiveNetwork) -> float:
    spread = _open_spread(j, net)
    if spread > 0:
        return 1.0 / math.sqrt(spread)
    length = getattr(cfg.cluster, "length_scale", 1.0)
    return length / _center_scale(j, v0, net)


# ----------------------------------------------------------------------
# Association
# ----------------------------------------------------------------------
def assoc_prob_conditional(
    j: int,
    v0: float,
    cfg: NetworkConfig,
    net: EffectiveNetwork,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Probability of associating with tier ``j`` given center shadow gain ``v0``.

    General quadrature form, valid for any radial cluster model.
    """

    _check_tier_index(j, net)
    _check_gain(v0)
    if j > 0 and net.eff_lambda_open[j] == 0:
        return 0.0
    return _integrate_distance(
        lambda w: _serving_density(j, w, v0, cfg, net),
        _serving_upper_limit(j, v0, cfg, net, spec),
        _length_scale(j, v0, cfg, net),
        spec,
    )


def _thomas_center_density(v0: float, cfg: NetworkConfig, net: EffectiveNetwork) -> float:
    return v0 ** (2.0 / net.alpha) / (2.0 * math.pi * cfg.cluster.sigma ** 2)


def assoc_thomas_closed(
    j: int, v0: float, cfg: NetworkConfig, net: EffectiveNetwork
) -> float:
    """Closed-form association for Thomas clusters."""

    if not isinstance(cfg.cluster, ThomasCluster):
        raise ModelMismatchError(
            f"Thomas closed form requested for {cfg.cluster.describe()}"
        )
    _check_tier_index(j, net)
    _check_gain(v0)
    lam0 = _thomas_center_density(v0, cfg, net)
    lam_j = lam0 if j == 0 else net.eff_lambda_open[j]
    if lam_j == 0:
        return 0.0
    denom = net.power_ratio(j, 0) ** 2 * lam0 + _open_spread(j, net) / math.pi
    return lam_j / denom


def _matern_mass(
    j: int, lam_j: float, ratio_j0: float, v_factor: float, radius: float, z: float
) -> float:
    """Integrated Matérn serving density with exponent constant ``z``.

    ``v_factor`` is ``v0 ** (2/alpha)``.  Shared by the association closed
    form and the closed-form coverage bound.
    """

    if j == 0:
        x = z * radius ** 2 / v_factor
        return 1.0 - _one_minus_ratio(x)
    if lam_j == 0:
        return 0.0
    b = v_factor * ratio_j0 ** 2 / radius ** 2
    return math.pi * lam_j / z * _one_minus_ratio(z / b)


def assoc_matern_closed(
    j: int, v0: float, cfg: NetworkConfig, net: EffectiveNetwork
) -> float:
    """Closed-form association for Matérn clusters."""

    if not isinstance(cfg.cluster, MaternCluster):
        raise ModelMismatchError(
            f"Matérn closed form requested for {cfg.cluster.describe()}"
        )
    _check_tier_index(j, net)
    _check_gain(v0)
    lam_j = 0.0 if j == 0 else net.eff_lambda_open[j]
    return _matern_mass(
        j,
        lam_j,
        net.power_ratio(j, 0),
        v0 ** (2.0 / net.alpha),
        cfg.cluster.radius,
        _open_spread(j, net),
    )


def assoc_conditional(
    j: int,
    v0: float,
    cfg: NetworkConfig,
    net: EffectiveNetwork,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Association probability using a closed form whenever one exists."""

    if isinstance(cfg.cluster, ThomasCluster):
        return assoc_thomas_closed(j, v0, cfg, net)
    if isinstance(cfg.cluster, MaternCluster):
        return assoc_matern_closed(j, v0, cfg, net)
    return assoc_prob_conditional(j, v0, cfg, net, spec)


# ----------------------------------------------------------------------
# Serving distance
# ----------------------------------------------------------------------
def serving_dist_pdf(
    j: int,
    w: float,
    v0: float,
    cfg: NetworkConfig,
    net: EffectiveNetwork,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    method: str = "auto",
) -> float:
    """PDF of the serving distance given association with tier ``j``.

    ``method`` selects the Thomas/Matérn closed form (``"closed"``), the
    general quadrature form (``"quadrature"``) or the closed form when the
    cluster model has one (``"auto"``).
    """

    _check_tier_index(j, net)
    _check_gain(v0)
    if method not in ("auto", "closed", "quadrature"):
        raise ValueError(f"Unknown method '{method}'")
    if w < 0:
        return 0.0

    closed_available = isinstance(cfg.cluster, (ThomasCluster, MaternCluster))
    if method == "closed" and not closed_available:
        raise ModelMismatchError(f"no closed form for {cfg.cluster.describe()}")
    if method == "quadrature" or not closed_available:
        assoc = assoc_prob_conditional(j, v0, cfg, net, spec)
        if assoc <= 0:
            return 0.0
        return _serving_density(j, w, v0, cfg, net) / assoc

    spread = _open_spread(j, net)
    if isinstance(cfg.cluster, ThomasCluster):
        assoc = assoc_thomas_closed(j, v0, cfg, net)
        if assoc <= 0:
            return 0.0
        lam0 = _thomas_center_density(v0, cfg, net)
        lam_j = lam0 if j == 0 else net.eff_lambda_open[j]
        total = spread + math.pi * net.power_ratio(j, 0) ** 2 * lam0
        return 2.0 * math.pi * lam_j / assoc * w * math.exp(-total * w * w)

    assoc = assoc_matern_closed(j, v0, cfg, net)
    if assoc <= 0:
        return 0.0
    radius = cfg.cluster.radius
    v_factor = v0 ** (2.0 / net.alpha)
    if j == 0:
        if v_factor * w * w > radius ** 2:
            return 0.0
        return math.exp(-spread * w * w) * 2.0 * v_factor * w / radius ** 2 / assoc
    remaining = radius ** 2 - v_factor * net.power_ratio(j, 0) ** 2 * w * w
    if remaining <= 0:
        return 0.0
    lam_j = net.eff_lambda_open[j]
    return (
        2.0 * math.pi * lam_j * math.exp(-spread * w * w) * remaining / radius ** 2 * w / assoc
    )


# ----------------------------------------------------------------------
# Interference Laplace transforms
# ----------------------------------------------------------------------
def laplace_open(
    j: int,
    k: int,
    w: float,
    tau: float,
    cfg: NetworkConfig,
    net: EffectiveNetwork,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Laplace transform of the open-access interference from tier ``k``."""

    _check_tier_index(j, net)
    _check_tier_index(k, net, allow_center=False)
    _check_tau(tau)
    if w <= 0 or tau == 0:
        return 1.0
    g = interference_factor_G(cfg.alpha, float(tau), spec)
    return math.exp(
        -math.pi * net.power_ratio(j, k) ** 2 * net.eff_lambda_open[k] * g * w * w
    )


def laplace_closed(
    j: int,
    k: int,
    w: float,
    tau: float,
    cfg: NetworkConfig,
    net: EffectiveNetwork,
) -> float:
    """Laplace transform of the closed-access interference from tier ``k``."""

    _check_tier_index(j, net)
    _check_tier_index(k, net, allow_center=False)
    _check_tau(tau)
    lam = net.eff_lambda_closed[k]
    if w <= 0 or tau == 0 or lam == 0:
        return 1.0
    h = closed_access_factor_H(cfg.alpha, float(tau))
    return math.exp(-math.pi * lam * h * (net.power_ratio(j, k) * w) ** 2)


def laplace_center(
    j: int,
    w: float,
    tau: float,
    v0: float,
    cfg: NetworkConfig,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    strict: bool = False,
) -> float:
    """Laplace transform of the interference from the cluster-center BS.

    Conditions on the center lying beyond the exclusion radius
    ``v0**(1/alpha) * (P_i/P_j)**(1/alpha) * w``.  When that event has zero
    probability the value is 1, or :class:`DegenerateConditioningError` is
    raised with ``strict=True``.
    """

    if not 1 <= j <= cfg.K:
        raise DomainError(f"tier index must lie in 1..{cfg.K} (got {j})")
    _check_gain(v0)
    _check_tau(tau)
    if tau == 0 or w <= 0:
        return 1.0

    alpha = cfg.alpha
    exclusion = (v0 * cfg.power(0) / cfg.power(j)) ** (1.0 / alpha) * w
    model = cfg.cluster
    if not model.can_condition(exclusion):
        if strict:
            raise DegenerateConditioningError(
                f"P(Y0 > {exclusion:g} m) is zero for {model.describe()}"
            )
        return 1.0

    def integrand(y: float) -> float:
        if y <= exclusion:
            return 0.0
        return float(model.conditional_pdf(y, exclusion)) / (
            1.0 + tau * (exclusion / y) ** alpha
        )

    upper = model.tail_radius(exclusion, math.exp(-_tail_depth(spec)))
    if math.isfinite(upper):
        value = integrate_interval(integrand, exclusion, upper, spec)
    else:
        value = integrate_semi_infinite(
            integrand, exclusion, spec, scale=max(exclusion, getattr(model, "length_scale", 1.0))
        )
    clamped = min(1.0, max(1.0 / (1.0 + tau), value))
    if clamped != value:
        logger.debug(
            "center Laplace transform %.6g clamped to %.6g (tier %d, w=%g, tau=%g)",
            value, clamped, j, w, tau,
        )
    return clamped


# ----------------------------------------------------------------------
# Coverage
# ----------------------------------------------------------------------
def _tier_joint(
    j: int,
    tau: float,
    v0: float,
    cfg: NetworkConfig,
    net: EffectiveNetwork,
    spec: QuadratureSpec,
    with_center: bool = True,
) -> float:
    """``A_j * P_c_j`` given ``v0``; ``with_center=False`` drops the center term."""

    if j > 0 and net.eff_lambda_open[j] == 0:
        return 0.0
    noise = tau * cfg.noise_power / cfg.power(j)
    alpha = cfg.alpha
    tiers = range(1, net.K + 1)

    def integrand(w: float) -> float:
        density = _serving_density(j, w, v0, cfg, net)
        if density == 0:
            return 0.0
        value = density
        for k in tiers:
            value *= laplace_open(j, k, w, tau, cfg, net, spec)
            value *= laplace_closed(j, k, w, tau, cfg, net)
        if noise > 0:
            value *= math.exp(-noise * w ** alpha)
        if j > 0 and with_center:
            value *= laplace_center(j, w, tau, v0, cfg, spec)
        return value

    return _integrate_distance(
        integrand,
        _serving_upper_limit(j, v0, cfg, net, spec),
        _length_scale(j, v0, cfg, net),
        spec,
    )


def per_tier_coverage_conditional(
    j: int,
    tau: float,
    v0: float,
    cfg: NetworkConfig,
    net: EffectiveNetwork,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Coverage of a user served by tier ``j`` given center shadow gain ``v0``.

    Returns 0 when tier ``j`` is never selected.
    """

    _check_tier_index(j, net)
    _check_gain(v0)
    _check_tau(tau)
    assoc = assoc_conditional(j, v0, cfg, net, spec)
    if assoc <= 0:
        return 0.0
    return min(1.0, _tier_joint(j, tau, v0, cfg, net, spec) / assoc)


def _compact_exponent(j: int, g: float, h: float, cfg: NetworkConfig) -> float:
    """``pi * sum_k Pbar_jk^2 (lambda_k (G+1) + lambda'_k H)`` on raw densities."""
    alpha = cfg.alpha
    total = 0.0
    for k in range(1, cfg.K + 1):
        tier = cfg.tier(k)
        ratio2 = (tier.power / cfg.power(j)) ** (2.0 / alpha)
        total += ratio2 * (tier.lambda_open * (g + 1.0) + tier.lambda_closed * h)
    return math.pi * total


def _tier_joint_compact(
    j: int,
    tau: float,
    cfg: NetworkConfig,
    spec: QuadratureSpec,
    with_center: bool = True,
) -> float:
    """Shadowing-free ``A_j * P_c_j`` with all PPP factors in one exponent."""

    lam_j = cfg.tier(j).lambda_open if j > 0 else 0.0
    if j > 0 and lam_j == 0:
        return 0.0
    g = interference_factor_G(cfg.alpha, float(tau), spec)
    h = closed_access_factor_H(cfg.alpha, float(tau))
    exponent = _compact_exponent(j, g, h, cfg)
    noise = tau * cfg.noise_power / cfg.power(j)
    alpha = cfg.alpha
    ratio_j0 = (cfg.power(0) / cfg.power(j)) ** (1.0 / alpha)
    model = cfg.cluster

    def integrand(w: float) -> float:
        if j == 0:
            value = float(model.pdf(w))
        else:
            tail = float(model.ccdf(ratio_j0 * w))
            if tail == 0:
                return 0.0
            value = 2.0 * math.pi * lam_j * w * tail
            if with_center:
                value *= laplace_center(j, w, tau, 1.0, cfg, spec)
        if value == 0:
            return 0.0
        value *= math.exp(-exponent * w * w)
        if noise > 0:
            value *= math.exp(-noise * w ** alpha)
        return value

    depth = _tail_depth(spec)
    upper = math.sqrt(depth / exponent) if exponent > 0 else math.inf
    reach = model.tail_radius(0.0, math.exp(-depth))
    upper = min(upper, reach if j == 0 else reach / ratio_j0)
    length = 1.0 / math.sqrt(exponent) if exponent > 0 else getattr(model, "length_scale", 1.0)
    return _integrate_distance(integrand, upper, length, spec)


def _conditional_terms(
    tau: float,
    v0: float,
    cfg: NetworkConfig,
    net: EffectiveNetwork,
    spec: QuadratureSpec,
    bounds: bool,
) -> np.ndarray:
    """``[A_0..A_K, J_0..J_K, U_1..U_K]`` at shadow gain ``v0``.

    ``J_j = A_j P_c_j`` and ``U_j`` is ``J_j`` without the center interferer.
    """

    K = net.K
    assoc = [assoc_conditional(j, v0, cfg, net, spec) for j in range(K + 1)]
    joint = [_tier_joint(j, tau, v0, cfg, net, spec) for j in range(K + 1)]
    upper = [
        _tier_joint(j, tau, v0, cfg, net, spec, with_center=False) if bounds else 0.0
        for j in range(1, K + 1)
    ]
    return np.asarray(assoc + joint + upper, dtype=float)


def _compact_terms(
    tau: float, cfg: NetworkConfig, net: EffectiveNetwork, spec: QuadratureSpec, bounds: bool
) -> np.ndarray:
    K = net.K
    assoc = [assoc_conditional(j, 1.0, cfg, net, spec) for j in range(K + 1)]
    joint = [_tier_joint_compact(j, tau, cfg, spec) for j in range(K + 1)]
    upper = [
        _tier_joint_compact(j, tau, cfg, spec, with_center=False) if bounds else 0.0
        for j in range(1, K + 1)
    ]
    return np.asarray(assoc + joint + upper, dtype=float)


def _expected_terms(
    tau: float, cfg: NetworkConfig, net: EffectiveNetwork, spec: QuadratureSpec, bounds: bool
) -> np.ndarray:
    if cfg.shadowing_free:
        return _compact_terms(tau, cfg, net, spec, bounds)
    center = cfg.tier(0)
    return expect_over_shadow(
        lambda v: _conditional_terms(tau, v, cfg, net, spec, bounds),
        center.shadow_mu_db,
        center.shadow_eta_db,
        spec,
    )


def _bounds_from_terms(tau: float, terms: np.ndarray, K: int) -> Tuple[float, float]:
    joint_center = terms[K + 1]
    rest = float(np.sum(terms[2 * K + 2:]))
    return joint_center + rest / (1.0 + tau), joint_center + rest


def _clip(p: float) -> float:
    return min(1.0, max(0.0, float(p)))


def _closed_form_bounds(
    tau: float, cfg: NetworkConfig, spec: QuadratureSpec
) -> Optional[Tuple[float, float]]:
    """Interference-limited, shadowing-free bounds for Thomas and Matérn."""

    if cfg.noise_power > 0 or not cfg.shadowing_free:
        return None
    model = cfg.cluster
    if not isinstance(model, (ThomasCluster, MaternCluster)):
        return None
    g = interference_factor_G(cfg.alpha, float(tau), spec)
    h = closed_access_factor_H(cfg.alpha, float(tau))
    alpha = cfg.alpha
    terms = []
    for j in range(cfg.K + 1):
        lam_j = cfg.tier(j).lambda_open if j > 0 else 0.0
        ratio_j0 = (cfg.power(0) / cfg.power(j)) ** (1.0 / alpha)
        spread = _compact_exponent(j, g, h, cfg)
        if isinstance(model, ThomasCluster):
            lam0 = 1.0 / (2.0 * math.pi * model.sigma ** 2)
            weight = lam0 if j == 0 else lam_j
            terms.append(weight / (ratio_j0 ** 2 * lam0 + spread / math.pi))
        else:
            terms.append(_matern_mass(j, lam_j, ratio_j0, 1.0, model.radius, spread))
    rest = sum(terms[1:])
    return terms[0] + rest / (1.0 + tau), terms[0] + rest


def coverage_bounds(
    tau: float,
    cfg: NetworkConfig,
    net: EffectiveNetwork,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    method: str = "auto",
) -> Tuple[float, float]:
    """Lower and upper coverage bounds from bracketing the center interference.

    ``method="closed"`` forces the closed forms (Thomas/Matérn, no noise, no
    shadowing), ``"general"`` the quadrature path, ``"auto"`` the closed
    form when it applies, cross-checked against the general path.
    """

    _check_tau(tau)
    if method not in ("auto", "closed", "general"):
        raise ValueError(f"Unknown method '{method}'")
    closed = None if method == "general" else _closed_form_bounds(tau, cfg, spec)
    if method == "closed":
        if closed is None:
            raise ModelMismatchError(
                "closed-form bounds need a Thomas or Matérn model without noise or shadowing"
            )
        return _clip(closed[0]), _clip(closed[1])

    general = _general_bounds(tau, cfg, net, spec)
    if closed is None:
        return general
    _bound_residual(closed, general)
    return _clip(closed[0]), _clip(closed[1])


def _general_bounds(
    tau: float, cfg: NetworkConfig, net: EffectiveNetwork, spec: QuadratureSpec
) -> Tuple[float, float]:
    K = net.K
    if cfg.shadowing_free:
        terms = np.zeros(3 * K + 2)
        terms[K + 1] = _tier_joint_compact(0, tau, cfg, spec)
        terms[2 * K + 2:] = [
            _tier_joint_compact(j, tau, cfg, spec, with_center=False) for j in range(1, K + 1)
        ]
    else:
        center = cfg.tier(0)

        def partial(v: float) -> np.ndarray:
            out = np.zeros(3 * K + 2)
            out[K + 1] = _tier_joint(0, tau, v, cfg, net, spec)
            out[2 * K + 2:] = [
                _tier_joint(j, tau, v, cfg, net, spec, with_center=False)
                for j in range(1, K + 1)
            ]
            return out

        terms = expect_over_shadow(partial, center.shadow_mu_db, center.shadow_eta_db, spec)
    lower, upper = _bounds_from_terms(tau, terms, K)
    return _clip(lower), _clip(upper)


def _bound_residual(closed: Tuple[float, float], general: Tuple[float, float]) -> float:
    residual = max(abs(closed[0] - general[0]), abs(closed[1] - general[1]))
    if residual > BOUND_RESIDUAL_WARN:
        logger.warning(
            "closed-form and general coverage bounds differ by %.3g", residual
        )
    else:
        logger.debug("bound residual %.3g", residual)
    return residual


def ppp_limit_coverage(
    tau: float,
    cfg: NetworkConfig,
    net: EffectiveNetwork,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Coverage of a user placed independently of every BS.

    Closed form when interference limited, otherwise one quadrature per tier.
    """

    _check_tau(tau)
    open_tiers = [j for j in range(1, net.K + 1) if net.eff_lambda_open[j] > 0]
    if not open_tiers:
        raise ConfigValidationError("the PPP limit needs at least one open-access tier")
    g = interference_factor_G(cfg.alpha, float(tau), spec)
    h = closed_access_factor_H(cfg.alpha, float(tau))
    alpha = cfg.alpha
    total = 0.0
    for j in open_tiers:
        m_j = sum(
            net.power_ratio(j, k) ** 2
            * (net.eff_lambda_open[k] * (g + 1.0) + net.eff_lambda_closed[k] * h)
            for k in range(1, net.K + 1)
        )
        lam_j = net.eff_lambda_open[j]
        noise = tau * cfg.noise_power / cfg.power(j)
        if noise == 0:
            total += lam_j / m_j
            continue
        upper = math.sqrt(_tail_depth(spec) / (math.pi * m_j))
        total += integrate_interval(
            lambda w: 2.0 * math.pi * lam_j * w
            * math.exp(-math.pi * m_j * w * w - noise * w ** alpha),
            0.0,
            upper,
            spec,
        )
    return _clip(total)


def _coverage_total(
    tau: float, cfg: NetworkConfig, net: EffectiveNetwork, spec: QuadratureSpec
) -> float:
    K = net.K
    terms = _expected_terms(tau, cfg, net, spec, bounds=False)
    return _clip(np.sum(terms[K + 1: 2 * K + 2]))


def coverage(
    tau: float,
    cfg: NetworkConfig,
    net: Optional[EffectiveNetwork] = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> CoverageReport:
    """Association, per-tier coverage, total coverage, bounds and PPP limit."""

    _check_tau(tau)
    if net is None:
        net = effective_network(cfg)
    K = net.K
    terms = _expected_terms(tau, cfg, net, spec, bounds=True)
    assoc = terms[: K + 1]
    joint = terms[K + 1: 2 * K + 2]
    per_tier = tuple(
        _clip(joint[j] / assoc[j]) if assoc[j] > 0 else 0.0 for j in range(K + 1)
    )
    total = _clip(np.sum(joint))

    general = _bounds_from_terms(tau, terms, K)
    general = (_clip(general[0]), _clip(general[1]))
    closed = _closed_form_bounds(tau, cfg, spec)
    residual = None
    lower, upper = general
    if closed is not None:
        residual = _bound_residual(closed, general)
        lower, upper = _clip(closed[0]), _clip(closed[1])

    try:
        ppp = ppp_limit_coverage(tau, cfg, net, spec)
    except ConfigValidationError:
        ppp = float("nan")

    return CoverageReport(
        tau=float(tau),
        assoc=tuple(float(a) for a in assoc),
        per_tier_coverage=per_tier,
        total=total,
        lower_bound=lower,
        upper_bound=upper,
        ppp_limit=ppp,
        bound_residual=residual,
    )


# ----------------------------------------------------------------------
# Mixed user populations
# ----------------------------------------------------------------------
def mixed_weights(cfg: NetworkConfig) -> Tuple[float, Tuple[float, ...]]:
    """Weights of the PPP users and of each clustered population."""

    numerators = [uc.mean_users * cfg.tier(uc.tier).lambda_open for uc in cfg.clusters]
    denom = cfg.ppp_user_density + sum(numerators)
    if not denom > 0:
        raise MixedWeightsError("no user population has positive density")
    return cfg.ppp_user_density / denom, tuple(n / denom for n in numerators)


def mixed_coverage(
    tau: float,
    cfg: NetworkConfig,
    net: Optional[EffectiveNetwork] = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Coverage of a user drawn uniformly from all user populations."""

    _check_tau(tau)
    if net is None:
        net = effective_network(cfg)
    p0, cluster_weights = mixed_weights(cfg)
    total = 0.0
    if p0 > 0:
        total += p0 * ppp_limit_coverage(tau, cfg, net, spec)
    for uc, weight in zip(cfg.clusters, cluster_weights):
        if weight == 0:
            continue
        sub = cfg.with_primary_cluster(uc)
        total += weight * _coverage_total(tau, sub, effective_network(sub), spec)
    return total


__all__ = [
    "CoverageReport",
    "DegenerateConditioningError",
    "MixedWeightsError",
    "ModelMismatchError",
    "assoc_conditional",
    "assoc_matern_closed",
    "assoc_prob_conditional",
    "assoc_thomas_closed",
    "coverage",
    "coverage_bounds",
    "laplace_center",
    "laplace_closed",
    "laplace_open",
    "mixed_coverage",
    "mixed_weights",
    "per_tier_coverage_conditional",
    "ppp_limit_coverage",
    "serving_dist_pdf",
]
