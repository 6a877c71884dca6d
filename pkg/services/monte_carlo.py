"""Seeded point-process simulator of the downlink seen by the typical user.

Each trial is an independent realization drawn from a generator seeded by
``(master_seed, trial_index)``, so estimates are identical whatever the
number of worker threads.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import stats

from services.network_model import ConfigValidationError, NetworkConfig

logger = logging.getLogger(__name__)

# ----------------------------------------------------------------------
# Defaults
# ----------------------------------------------------------------------
DEFAULT_TRIALS = 10_000
DEFAULT_WINDOW_RADIUS = 5000.0   # m
DEFAULT_MIN_EXPECTED_BS = 50.0   # per non-empty tier inside the window
DEFAULT_CONFIDENCE = 0.95
TRIALS_PER_CHUNK = 512
MIN_LINK_DISTANCE = 1e-6         # m, keeps d**-alpha finite
MAX_SEED = 2 ** 64

USER_MODES = ("clustered", "ppp")


@dataclass(frozen=True)
class SimSettings:
    """Trial count, seeding and window of a Monte Carlo run."""

    trials: int = DEFAULT_TRIALS
    master_seed: int = 0
    window_radius: float = DEFAULT_WINDOW_RADIUS
    min_expected_bs: float = DEFAULT_MIN_EXPECTED_BS
    confidence: float = DEFAULT_CONFIDENCE
    workers: int = 1
    user_mode: str = "clustered"

    def __post_init__(self) -> None:
        if int(self.trials) < 1:
            raise ConfigValidationError(f"trials must be at least 1 (got {self.trials})")
        if not 0 <= int(self.master_seed) < MAX_SEED:
            raise ConfigValidationError(
                f"master_seed must be a 64-bit unsigned integer (got {self.master_seed})"
            )
        if not self.window_radius > 0:
            raise ConfigValidationError(
                f"window_radius must be positive (got {self.window_radius})"
            )
        if not self.min_expected_bs >= 0:
            raise ConfigValidationError(
                f"min_expected_bs must be non-negative (got {self.min_expected_bs})"
            )
        if not 0 < self.confidence < 1:
            raise ConfigValidationError(
                f"confidence must lie in (0, 1) (got {self.confidence})"
            )
        if int(self.workers) < 1:
            raise ConfigValidationError(f"workers must be at least 1 (got {self.workers})")
        if self.user_mode not in USER_MODES:
            raise ConfigValidationError(
                f"user_mode must be one of {', '.join(USER_MODES)} (got '{self.user_mode}')"
            )

    @property
    def window_area(self) -> float:
        return math.pi * self.window_radius ** 2

    def check_window(self, cfg: NetworkConfig) -> None:
        """Reject windows holding too few BSs of any non-empty tier."""
        for k, tier in enumerate(cfg.tiers, start=1):
            for label, density in (("open", tier.lambda_open), ("closed", tier.lambda_closed)):
                if density == 0:
                    continue
                expected = density * self.window_area
                if expected < self.min_expected_bs:
                    raise ConfigValidationError(
                        f"window_radius {self.window_radius:g} m holds {expected:.1f} "
                        f"{label} BSs of tier {k} on average (need {self.min_expected_bs:g})"
                    )

    def expected_bs(self, cfg: NetworkConfig) -> float:
        """Mean number of BSs of all tiers drawn per trial."""
        return sum(t.lambda_open + t.lambda_closed for t in cfg.tiers) * self.window_area


def fitted_window_radius(cfg: NetworkConfig, min_expected_bs: float = DEFAULT_MIN_EXPECTED_BS) -> float:
    """Smallest whole-metre window holding ``min_expected_bs`` BSs of the sparsest tier.

    Falls back to ``DEFAULT_WINDOW_RADIUS`` when no tier is populated or no
    minimum is set.
    """
    densities = [
        d for t in cfg.tiers for d in (t.lambda_open, t.lambda_closed) if d > 0
    ]
    if not densities or min_expected_bs <= 0:
        return DEFAULT_WINDOW_RADIUS
    return float(math.ceil(math.sqrt(min_expected_bs / (math.pi * min(densities)))))


@dataclass(frozen=True, eq=False)
class Realization:
    """BSs around the typical user at the origin, ordered by tier."""

    trial_index: int
    positions: np.ndarray    # (n, 2), m
    tiers: np.ndarray        # 0..K, 0 = cluster center
    open_access: np.ndarray  # bool
    shadow: np.ndarray       # linear shadow gains
    fade: np.ndarray         # unit-mean exponential fading


@dataclass(frozen=True)
class TrialOutcome:
    serving_tier: int  # -1 when no open-access BS exists
    covered: bool
    sinr: float


@dataclass(frozen=True)
class SimEstimate:
    """Coverage frequency with its Wilson interval and per-tier breakdown."""

    tau: float
    mean: float
    half_width: float
    trials: int
    seed: int
    confidence: float
    per_tier_assoc_freq: Tuple[float, ...]
    per_tier_cov_freq: Tuple[float, ...]

    @property
    def interval(self) -> Tuple[float, float]:
        center, half = wilson_interval(
            round(self.mean * self.trials), self.trials, self.confidence
        )
        return max(0.0, center - half), min(1.0, center + half)

    def as_dict(self) -> dict:
        data = asdict(self)
        data["per_tier_assoc_freq"] = list(self.per_tier_assoc_freq)
        data["per_tier_cov_freq"] = list(self.per_tier_cov_freq)
        return data


# ----------------------------------------------------------------------
# Sampling
# ----------------------------------------------------------------------
def trial_generator(master_seed: int, trial_index: int) -> np.random.Generator:
    """Generator for one trial; a pure function of its two arguments."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial_index),))
    return np.random.default_rng(seq)


def _uniform_disc(rng: np.random.Generator, count: int, radius: float) -> np.ndarray:
    rho = radius * np.sqrt(rng.uniform(0.0, 1.0, count))
    phi = rng.uniform(0.0, 2.0 * math.pi, count)
    return np.column_stack((rho * np.cos(phi), rho * np.sin(phi)))


def _draw_realization(
    cfg: NetworkConfig, settings: SimSettings, trial_index: int
) -> Realization:
    rng = trial_generator(settings.master_seed, trial_index)
    radius = settings.window_radius
    blocks: List[Tuple[np.ndarray, int, bool]] = []

    if settings.user_mode == "clustered":
        offset = cfg.cluster.sample_offset(rng, 1)
        blocks.append((-offset, 0, True))
    for k, tier in enumerate(cfg.tiers, start=1):
        for density, is_open in ((tier.lambda_open, True), (tier.lambda_closed, False)):
            count = rng.poisson(density * settings.window_area) if density > 0 else 0
            blocks.append((_uniform_disc(rng, count, radius), k, is_open))

    positions = np.concatenate([b[0] for b in blocks]) if blocks else np.zeros((0, 2))
    tiers = np.concatenate([np.full(len(b[0]), b[1], dtype=int) for b in blocks])
    open_access = np.concatenate([np.full(len(b[0]), b[2], dtype=bool) for b in blocks])

    shadow_parts = []
    for block_positions, k, _ in blocks:
        tier = cfg.tier(k)
        n = len(block_positions)
        if tier.shadow_eta_db > 0:
            gains_db = rng.normal(tier.shadow_mu_db, tier.shadow_eta_db, n)
        else:
            gains_db = np.full(n, tier.shadow_mu_db)
        shadow_parts.append(10.0 ** (gains_db / 10.0))
    shadow = np.concatenate(shadow_parts) if shadow_parts else np.zeros(0)
    fade = rng.exponential(1.0, len(positions))

    return Realization(trial_index, positions, tiers, open_access, shadow, fade)


def sample_realization(
    cfg: NetworkConfig, settings: SimSettings, trial_index: int
) -> Realization:
    """Draw the BS fields, cluster center and link marks of one trial."""

    settings.check_window(cfg)
    if trial_index < 0:
        raise ConfigValidationError(f"trial_index must be non-negative (got {trial_index})")
    return _draw_realization(cfg, settings, trial_index)


# ----------------------------------------------------------------------
# Trials
# ----------------------------------------------------------------------
def _link_sinr(realization: Realization, cfg: NetworkConfig) -> Tuple[int, float]:
    """Serving tier under max average received power, and the resulting SINR."""

    if len(realization.positions) == 0 or not realization.open_access.any():
        return -1, 0.0
    distance = np.maximum(np.hypot(*realization.positions.T), MIN_LINK_DISTANCE)
    powers = np.array([cfg.power(k) for k in range(cfg.K + 1)])[realization.tiers]
    mean_rx = powers * realization.shadow * distance ** (-cfg.alpha)

    candidates = np.flatnonzero(realization.open_access)
    # argmax keeps the first maximum, i.e. the lowest tier index
    serving = int(candidates[np.argmax(mean_rx[candidates])])
    rx = mean_rx * realization.fade
    signal = float(rx[serving])
    others = np.ones(len(rx), dtype=bool)
    others[serving] = False
    denominator = cfg.noise_power + float(np.sum(rx[others]))
    sinr = math.inf if denominator == 0 else signal / denominator
    return int(realization.tiers[serving]), sinr


def run_trial(realization: Realization, tau: float, cfg: NetworkConfig) -> TrialOutcome:
    """Associate the typical user and test its SINR against ``tau``."""

    tier, sinr = _link_sinr(realization, cfg)
    return TrialOutcome(tier, tier >= 0 and sinr > tau, sinr)


def simulate_links(cfg: NetworkConfig, settings: SimSettings) -> Tuple[np.ndarray, np.ndarray]:
    """Serving tier and SINR of every trial, in trial-index order."""

    settings.check_window(cfg)
    trials = int(settings.trials)
    chunks = [
        range(start, min(start + TRIALS_PER_CHUNK, trials))
        for start in range(0, trials, TRIALS_PER_CHUNK)
    ]

    def work(chunk: range) -> List[Tuple[int, float]]:
        return [_link_sinr(_draw_realization(cfg, settings, t), cfg) for t in chunk]

    logger.info(
        "Simulating %d trials (seed %d, %d worker%s, %.0f BSs per trial in a %g m window)",
        trials,
        settings.master_seed,
        settings.workers,
        "" if settings.workers == 1 else "s",
        settings.expected_bs(cfg),
        settings.window_radius,
    )
    if settings.workers == 1:
        results = [work(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=int(settings.workers)) as pool:
            results = list(pool.map(work, chunks))

    outcomes = [item for chunk in results for item in chunk]
    serving = np.fromiter((o[0] for o in outcomes), dtype=int, count=trials)
    sinr = np.fromiter((o[1] for o in outcomes), dtype=float, count=trials)
    return serving, sinr


# ----------------------------------------------------------------------
# Aggregation
# ----------------------------------------------------------------------
def wilson_interval(successes: int, trials: int, confidence: float) -> Tuple[float, float]:
    """Center and half-width of the Wilson score interval."""

    if trials < 1:
        raise ValueError("Wilson interval needs at least one trial")
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    p = successes / trials
    z2n = z * z / trials
    denom = 1.0 + z2n
    center = (p + z2n / 2.0) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z2n / (4.0 * trials)) / denom
    return center, half


def _summarise(
    tau: float, serving: np.ndarray, sinr: np.ndarray, cfg: NetworkConfig, settings: SimSettings
) -> SimEstimate:
    covered = (serving >= 0) & (sinr > tau)
    trials = len(serving)
    hits = int(covered.sum())
    _, half = wilson_interval(hits, trials, settings.confidence)
    assoc, cov = [], []
    for j in range(cfg.K + 1):
        mask = serving == j
        served = int(mask.sum())
        assoc.append(served / trials)
        cov.append(int(covered[mask].sum()) / served if served else 0.0)
    return SimEstimate(
        tau=float(tau),
        mean=hits / trials,
        half_width=half,
        trials=trials,
        seed=int(settings.master_seed),
        confidence=settings.confidence,
        per_tier_assoc_freq=tuple(assoc),
        per_tier_cov_freq=tuple(cov),
    )


def estimate_many(
    cfg: NetworkConfig, taus: Sequence[float], settings: SimSettings
) -> List[SimEstimate]:
    """Coverage estimates for several thresholds from one set of trials."""

    serving, sinr = simulate_links(cfg, settings)
    return [_summarise(tau, serving, sinr, cfg, settings) for tau in taus]


def estimate(cfg: NetworkConfig, tau: float, settings: SimSettings) -> SimEstimate:
    """Monte Carlo coverage estimate at SINR threshold ``tau`` (linear)."""

    return estimate_many(cfg, [tau], settings)[0]


# ----------------------------------------------------------------------
# Diagnostics
# ----------------------------------------------------------------------
def nearest_distance_samples(
    cfg: NetworkConfig,
    settings: SimSettings,
    k: int,
    samples: int,
    shadowed: bool = True,
) -> np.ndarray:
    """Nearest distances to open BSs of tier ``k`` over independent realizations.

    With ``shadowed`` each distance is divided by ``V**(1/alpha)``, the
    equivalent distance of the displaced process.  Realizations without any
    BS yield ``inf``.
    """

    settings.check_window(cfg)
    tier = cfg.tier(k)
    if k == 0 or tier.lambda_open == 0:
        raise ConfigValidationError(f"tier {k} has no open-access PPP to sample")
    out = np.empty(samples)
    for s in range(samples):
        rng = trial_generator(settings.master_seed, s)
        count = rng.poisson(tier.lambda_open * settings.window_area)
        if count == 0:
            out[s] = math.inf
            continue
        distance = np.hypot(*_uniform_disc(rng, count, settings.window_radius).T)
        if shadowed and tier.shadow_eta_db > 0:
            gains = 10.0 ** (rng.normal(tier.shadow_mu_db, tier.shadow_eta_db, count) / 10.0)
            distance = distance * gains ** (-1.0 / cfg.alpha)
        elif shadowed:
            distance = distance * 10.0 ** (-tier.shadow_mu_db / (10.0 * cfg.alpha))
        out[s] = distance.min()
    return out


__all__ = [
    "Realization",
    "SimEstimate",
    "SimSettings",
    "TrialOutcome",
    "estimate",
    "estimate_many",
    "nearest_distance_samples",
    "run_trial",
    "sample_realization",
    "simulate_links",
    "trial_generator",
    "wilson_interval",
]
