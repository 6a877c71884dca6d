"""Special functions and quadrature primitives used by the coverage formulas."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import integrate, special

logger = logging.getLogger(__name__)

# ----------------------------------------------------------------------
# Tolerances
# ----------------------------------------------------------------------
DEFAULT_ABS_TOL = 1e-10
DEFAULT_REL_TOL = 1e-8
DEFAULT_MAX_SUBDIVISIONS = 200
DEFAULT_HERMITE_NODES = 32
HERMITE_WEIGHT_FLOOR = 1e-15  # normalised Gauss-Hermite weights below this are skipped

DB_TO_NEPER = math.log(10.0) / 10.0  # x dB -> exp(x * DB_TO_NEPER)


class DomainError(ValueError):
    """Raised when a function is evaluated outside its domain."""

    pass


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature runs out of subdivisions."""

    pass


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances shared by every numerical integral in the package."""

    abs_tol: float = DEFAULT_ABS_TOL
    rel_tol: float = DEFAULT_REL_TOL
    max_subdivisions: int = DEFAULT_MAX_SUBDIVISIONS
    hermite_nodes: int = DEFAULT_HERMITE_NODES

    def __post_init__(self) -> None:
        if not self.abs_tol > 0:
            raise DomainError(f"abs_tol must be positive (got {self.abs_tol})")
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive (got {self.rel_tol})")
        if int(self.max_subdivisions) < 1:
            raise DomainError(
                f"max_subdivisions must be at least 1 (got {self.max_subdivisions})"
            )
        if int(self.hermite_nodes) < 2:
            raise DomainError(f"hermite_nodes must be at least 2 (got {self.hermite_nodes})")


DEFAULT_QUADRATURE = QuadratureSpec()


# ----------------------------------------------------------------------
# Adaptive quadrature
# ----------------------------------------------------------------------
def integrate_interval(
    f: Callable[[float], float],
    lower: float,
    upper: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    **quad_kwargs,
) -> float:
    """Integrate ``f`` over the finite interval ``[lower, upper]``.

    Extra keyword arguments go straight to :func:`scipy.integrate.quad`
    (``weight``/``wvar`` for algebraic endpoint singularities, ``points``).
    Only an exhausted subdivision budget is treated as failure; round-off
    notices from QUADPACK are logged and the estimate is kept.
    """

    if upper <= lower:
        return 0.0
    out = integrate.quad(
        f,
        lower,
        upper,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=int(spec.max_subdivisions),
        full_output=1,
        **quad_kwargs,
    )
    value, abserr = out[0], out[1]
    if len(out) > 3:
        message = str(out[3])
        if "maximum number of subdivisions" in message:
            raise QuadratureError(
                f"quadrature on [{lower:g}, {upper:g}] did not converge within "
                f"{spec.max_subdivisions} subdivisions (error estimate {abserr:.3g})"
            )
        logger.debug("quadrature on [%g, %g] accepted: %s", lower, upper, message.strip())
    return float(value)


def integrate_semi_infinite(
    f: Callable[[float], float],
    lower: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    scale: float = 1.0,
) -> float:
    """Integrate ``f`` over ``[lower, inf)``.

    The half line is mapped onto ``(0, 1]`` with ``x = lower + scale*(1-u)/u``
    before adaptive subdivision.  ``scale`` should be close to the width of
    the region carrying most of the mass.
    """

    if not scale > 0:
        raise DomainError(f"scale must be positive (got {scale})")

    def mapped(u: float) -> float:
        if u <= 0.0:
            return 0.0
        x = lower + scale * (1.0 - u) / u
        value = f(x) * scale / (u * u)
        # overflow at the mapped infinity
        if not math.isfinite(value):
            return 0.0
        return value

    return integrate_interval(mapped, 0.0, 1.0, spec)


# ----------------------------------------------------------------------
# Hypergeometric function and interference factors
# ----------------------------------------------------------------------
def gauss_2f1(
    a: float, b: float, c: float, x: float, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """Gauss hypergeometric function for ``c > b > 0`` and ``x <= 0``.

    Evaluated through the Euler integral representation; the endpoint
    factors ``z**(b-1) * (1-z)**(c-b-1)`` are handled as algebraic weights.
    """

    if not (c > b > 0):
        raise DomainError(f"2F1 needs c > b > 0 (got b={b}, c={c})")
    if x > 0:
        raise DomainError(f"2F1 argument must be <= 0 (got {x})")
    if x == 0:
        return 1.0

    log_norm = special.gammaln(c) - special.gammaln(b) - special.gammaln(c - b)
    body = integrate_interval(
        lambda z: (1.0 - x * z) ** (-a),
        0.0,
        1.0,
        spec,
        weight="alg",
        wvar=(b - 1.0, c - b - 1.0),
    )
    return float(math.exp(log_norm) * body)


def _check_alpha_tau(alpha: float, tau: float) -> None:
    if not alpha > 2:
        raise DomainError(f"alpha must exceed 2 (got {alpha})")
    if not tau >= 0:
        raise DomainError(f"tau must be non-negative (got {tau})")


@lru_cache(maxsize=1024)
def interference_factor_G(
    alpha: float, tau: float, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """Open-access interference factor with an exclusion zone.

    ``G = 2*tau/(alpha-2) * 2F1(1, 1-2/alpha; 2-2/alpha; -tau)``.
    """

    _check_alpha_tau(alpha, tau)
    if tau == 0:
        return 0.0
    delta = 2.0 / alpha
    return 2.0 * tau / (alpha - 2.0) * gauss_2f1(1.0, 1.0 - delta, 2.0 - delta, -tau, spec)


def closed_access_factor_H(alpha: float, tau: float) -> float:
    """Closed-access interference factor (no exclusion zone)."""

    _check_alpha_tau(alpha, tau)
    if tau == 0:
        return 0.0
    delta = 2.0 / alpha
    return tau ** delta * 2.0 * math.pi / (alpha * math.sin(math.pi * delta))


# ----------------------------------------------------------------------
# Lognormal shadowing
# ----------------------------------------------------------------------
def lognormal_frac_moment(mu_db: float, eta_db: float, exponent: float) -> float:
    """E[V**exponent] for ``10*log10(V) ~ Normal(mu_db, eta_db**2)``."""

    if not eta_db >= 0:
        raise DomainError(f"eta_db must be non-negative (got {eta_db})")
    a = exponent * DB_TO_NEPER
    return math.exp(a * mu_db + 0.5 * (a * eta_db) ** 2)


@lru_cache(maxsize=64)
def _hermite_rule(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = hermgauss(nodes)
    w = w / math.sqrt(math.pi)
    keep = w >= HERMITE_WEIGHT_FLOOR
    if not keep.all():
        logger.debug("Gauss-Hermite: skipping %d of %d negligible nodes", (~keep).sum(), nodes)
    return x[keep], w[keep]


def shadow_nodes(
    mu_db: float, eta_db: float, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> Tuple[np.ndarray, np.ndarray]:
    """Linear shadow gains and probability weights of the Hermite rule."""

    if not eta_db >= 0:
        raise DomainError(f"eta_db must be non-negative (got {eta_db})")
    if eta_db == 0:
        return np.array([10.0 ** (mu_db / 10.0)]), np.array([1.0])
    x, w = _hermite_rule(int(spec.hermite_nodes))
    gains_db = mu_db + math.sqrt(2.0) * eta_db * x
    return 10.0 ** (gains_db / 10.0), w


def expect_over_shadow(
    g: Callable[[float], float],
    mu_db: float,
    eta_db: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
):
    """Gauss-Hermite estimate of E[g(V)] with V lognormal in dB.

    ``g`` may return a scalar or a 1-D array; the expectation is taken
    element-wise.  With ``eta_db == 0`` the single point ``10**(mu_db/10)``
    is evaluated exactly.
    """

    gains, weights = shadow_nodes(mu_db, eta_db, spec)
    if eta_db == 0:
        value = g(float(gains[0]))
        return float(value) if np.ndim(value) == 0 else np.asarray(value, dtype=float)

    values = [np.asarray(g(float(v)), dtype=float) for v in gains]
    result = np.tensordot(weights, np.stack(values), axes=1)
    return float(result) if result.ndim == 0 else result


__all__ = [
    "DEFAULT_QUADRATURE",
    "DomainError",
    "QuadratureError",
    "QuadratureSpec",
    "closed_access_factor_H",
    "expect_over_shadow",
    "gauss_2f1",
    "integrate_interval",
    "integrate_semi_infinite",
    "interference_factor_G",
    "lognormal_frac_moment",
    "shadow_nodes",
]
