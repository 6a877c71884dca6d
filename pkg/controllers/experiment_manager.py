"""Coordinate analytic evaluation and simulation over parameter sweeps."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from services.analytic_engine import CoverageReport, coverage
from services.monte_carlo import SimEstimate, SimSettings, estimate_many
from services.network_model import (
    ConfigValidationError,
    MaternCluster,
    NetworkConfig,
    ThomasCluster,
    effective_network,
)
from utils.special_math import DEFAULT_QUADRATURE, QuadratureSpec
from utils.units import db_to_linear

SWEEP_VARIABLES = (
    "tau_db",
    "sigma_m",
    "radius_m",
    "power_ratio_db",
    "eta_db",
    "zeta_scale",
)
SWEEP_OUTPUTS = ("analytic", "simulated", "bounds", "ppp_limit", "association")
DEFAULT_TOLERANCE = 0.01


@dataclass(frozen=True)
class SweepSpec:
    """One swept variable, its values and the quantities to report."""

    variable: str
    values: Tuple[float, ...]
    outputs: Tuple[str, ...] = SWEEP_OUTPUTS
    tau_db: float = 0.0        # threshold used when tau is not the swept variable
    reference_tier: int = 1    # denominator tier of power_ratio_db

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigValidationError(
                f"variable must be one of {', '.join(SWEEP_VARIABLES)} (got '{self.variable}')"
            )
        if not self.values:
            raise ConfigValidationError("values must not be empty")
        steps = [b - a for a, b in zip(self.values, self.values[1:])]
        if steps and not (all(s > 0 for s in steps) or all(s < 0 for s in steps)):
            raise ConfigValidationError("values must be strictly monotone")
        unknown = [o for o in self.outputs if o not in SWEEP_OUTPUTS]
        if unknown:
            raise ConfigValidationError(f"unknown outputs: {', '.join(unknown)}")
        if not math.isfinite(self.tau_db):
            raise ConfigValidationError(f"tau_db must be finite (got {self.tau_db})")

    def check_model(self, cfg: NetworkConfig) -> None:
        """Reject variables that do not apply to the configured network."""
        if self.variable == "sigma_m" and not isinstance(cfg.cluster, ThomasCluster):
            raise ConfigValidationError("sigma_m sweeps need a Thomas cluster model")
        if self.variable == "radius_m" and not isinstance(cfg.cluster, MaternCluster):
            raise ConfigValidationError("radius_m sweeps need a Matérn cluster model")
        if self.variable == "power_ratio_db":
            if not 1 <= self.reference_tier <= cfg.K:
                raise ConfigValidationError(
                    f"reference_tier must lie in 1..{cfg.K} (got {self.reference_tier})"
                )
            if self.reference_tier == cfg.cluster_tier:
                raise ConfigValidationError(
                    "power_ratio_db needs a reference tier other than the clustered tier"
                )
        if self.variable in ("zeta_scale", "sigma_m", "radius_m") and min(self.values) <= 0:
            raise ConfigValidationError(f"{self.variable} values must be positive")


@dataclass(frozen=True)
class SweepRow:
    variable: str
    value: float
    assoc: Tuple[float, ...]
    analytic: Optional[float]
    lower: Optional[float]
    upper: Optional[float]
    ppp_limit: Optional[float]
    sim_mean: Optional[float] = None
    sim_half_width: Optional[float] = None

    def as_dict(self) -> dict:
        data = asdict(self)
        data["assoc"] = list(self.assoc)
        return data


@dataclass(frozen=True)
class ValidationRow:
    tau_db: float
    analytic: float
    simulated: float
    half_width: float
    lower: float
    upper: float
    passed: bool
    wide_interval: bool


@dataclass(frozen=True)
class ValidationReport:
    rows: Tuple[ValidationRow, ...]
    seed: int
    trials: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def as_dict(self) -> dict:
        return {
            "master_seed": self.seed,
            "trials": self.trials,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "rows": [asdict(row) for row in self.rows],
        }


def apply_sweep_value(
    cfg: NetworkConfig, sweep: SweepSpec, value: float
) -> Tuple[NetworkConfig, float]:
    """Configuration and linear threshold for one point of ``sweep``."""

    tau = db_to_linear(sweep.tau_db)
    variable = sweep.variable
    if variable == "tau_db":
        tau = db_to_linear(value)
    elif variable == "sigma_m":
        cfg = cfg.with_cluster(ThomasCluster(value))
    elif variable == "radius_m":
        cfg = cfg.with_cluster(MaternCluster(value))
    elif variable == "zeta_scale":
        cfg = cfg.with_cluster(cfg.cluster.scaled(value))
    elif variable == "eta_db":
        for k in range(1, cfg.K + 1):
            cfg = cfg.with_tier(k, shadow_eta_db=value)
    elif variable == "power_ratio_db":
        # the clustered tier keeps its power; the reference tier moves
        cfg = cfg.with_tier(
            sweep.reference_tier, power=cfg.power(cfg.cluster_tier) / db_to_linear(value)
        )
    return cfg, tau


class ExperimentManager:
    """Run sweeps and cross-validation, keeping an in-memory event log.

    ``progress`` receives ``(stage, action, description)`` for every event.
    """

    def __init__(
        self,
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
        workers: int = 1,
        progress: Optional[Callable[[str, str, str], None]] = None,
    ) -> None:
        if workers < 1:
            raise ConfigValidationError(f"workers must be at least 1 (got {workers})")
        self.spec = spec
        self.workers = workers
        self._progress = progress
        self._event_log: List[Dict[str, object]] = []
        self._logger = logging.getLogger(__name__)

    # ------------------------------------------------------------------
    # Event log
    # ------------------------------------------------------------------
    def _log_event(self, stage: str, action: str, description: str) -> None:
        entry = {
            "time": time.time(),
            "stage": stage,
            "action": action,
            "description": description,
        }
        self._event_log.append(entry)
        self._logger.info("[%s] %s: %s", stage, action, description)
        if self._progress is not None:
            self._progress(stage, action, description)

    def get_event_log(self) -> List[Dict[str, object]]:
        """Return a copy of all recorded events."""
        return list(self._event_log)

    # ------------------------------------------------------------------
    # Analytic side
    # ------------------------------------------------------------------
    def _analytic_point(self, cfg: NetworkConfig, tau: float) -> CoverageReport:
        return coverage(tau, cfg, effective_network(cfg), self.spec)

    def _analytic_points(
        self, points: Sequence[Tuple[NetworkConfig, float]]
    ) -> List[CoverageReport]:
        if self.workers == 1:
            return [self._analytic_point(cfg, tau) for cfg, tau in points]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(lambda p: self._analytic_point(*p), points))

    # ------------------------------------------------------------------
    # Sweeps
    # ------------------------------------------------------------------
    def run_sweep(
        self,
        cfg: NetworkConfig,
        sweep: SweepSpec,
        settings: SimSettings,
        simulate: bool = True,
    ) -> List[SweepRow]:
        """Evaluate every sweep value in order."""

        sweep.check_model(cfg)
        points = [apply_sweep_value(cfg, sweep, v) for v in sweep.values]
        outputs = set(sweep.outputs)
        self._log_event(
            "sweep", "start", f"{sweep.variable} over {len(points)} values"
        )

        wants_analytic = outputs & {"analytic", "bounds", "ppp_limit", "association"}
        reports: List[Optional[CoverageReport]] = [None] * len(points)
        if wants_analytic:
            reports = self._analytic_points(points)
            self._log_event("sweep", "analytic", f"{len(points)} points evaluated")

        estimates: List[Optional[SimEstimate]] = [None] * len(points)
        if simulate and "simulated" in outputs:
            if sweep.variable == "tau_db":
                # one set of trials serves every threshold
                estimates = estimate_many(cfg, [tau for _, tau in points], settings)
            else:
                estimates = [estimate_many(c, [t], settings)[0] for c, t in points]
            self._log_event(
                "sweep", "simulated", f"{settings.trials} trials per point, seed {settings.master_seed}"
            )

        rows = []
        for value, report, est in zip(sweep.values, reports, estimates):
            rows.append(_sweep_row(sweep.variable, value, report, est, outputs))
        self._log_event("sweep", "done", f"{len(rows)} rows")
        return rows

    # ------------------------------------------------------------------
    def cross_validate(
        self,
        cfg: NetworkConfig,
        tau_list: Sequence[float],
        settings: SimSettings,
        tolerance: float = DEFAULT_TOLERANCE,
    ) -> ValidationReport:
        """Compare analytic and simulated coverage at each threshold (dB)."""

        if not tau_list:
            raise ConfigValidationError("tau_list must not be empty")
        taus = [db_to_linear(t) for t in tau_list]
        self._log_event("validate", "start", f"{len(taus)} thresholds")
        reports = self._analytic_points([(cfg, tau) for tau in taus])
        estimates = estimate_many(cfg, taus, settings)

        rows = []
        for tau_db, report, est in zip(tau_list, reports, estimates):
            lo, hi = est.interval
            gap = abs(report.total - est.mean)
            row = ValidationRow(
                tau_db=float(tau_db),
                analytic=report.total,
                simulated=est.mean,
                half_width=est.half_width,
                lower=lo,
                upper=hi,
                passed=gap <= max(tolerance, est.half_width),
                wide_interval=est.half_width > tolerance,
            )
            if row.wide_interval:
                self._logger.warning(
                    "tau=%g dB: half-width %.4f exceeds tolerance %.4f",
                    tau_db,
                    est.half_width,
                    tolerance,
                )
            rows.append(row)
        report = ValidationReport(tuple(rows), int(settings.master_seed), int(settings.trials), tolerance)
        self._log_event(
            "validate", "done", "all rows passed" if report.passed else "some rows failed"
        )
        return report


def _sweep_row(
    variable: str,
    value: float,
    report: Optional[CoverageReport],
    est: Optional[SimEstimate],
    outputs: set,
) -> SweepRow:
    nan = float("nan")
    assoc: Tuple[float, ...] = ()
    analytic = lower = upper = ppp = None
    if report is not None:
        if "association" in outputs:
            assoc = report.assoc
        else:
            assoc = tuple(nan for _ in report.assoc)
        if "analytic" in outputs:
            analytic = report.total
        if "bounds" in outputs:
            lower, upper = report.lower_bound, report.upper_bound
        if "ppp_limit" in outputs:
            ppp = report.ppp_limit
    return SweepRow(
        variable=variable,
        value=float(value),
        assoc=assoc,
        analytic=analytic,
        lower=lower,
        upper=upper,
        ppp_limit=ppp,
        sim_mean=est.mean if est is not None else None,
        sim_half_width=est.half_width if est is not None else None,
    )


def run_sweep(
    cfg: NetworkConfig,
    sweep: SweepSpec,
    settings: SimSettings,
    simulate: bool = True,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> List[SweepRow]:
    return ExperimentManager(spec, workers=settings.workers).run_sweep(
        cfg, sweep, settings, simulate
    )


def cross_validate(
    cfg: NetworkConfig,
    tau_list: Sequence[float],
    settings: SimSettings,
    tolerance: float = DEFAULT_TOLERANCE,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> ValidationReport:
    return ExperimentManager(spec, workers=settings.workers).cross_validate(
        cfg, tau_list, settings, tolerance
    )


__all__ = [
    "ExperimentManager",
    "SWEEP_OUTPUTS",
    "SWEEP_VARIABLES",
    "SweepRow",
    "SweepSpec",
    "ValidationReport",
    "ValidationRow",
    "apply_sweep_value",
    "cross_validate",
    "run_sweep",
]
