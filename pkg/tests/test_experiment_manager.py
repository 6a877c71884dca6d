import math

import pytest

import controllers.experiment_manager as em
from conftest import two_tier
from controllers.experiment_manager import (
    ExperimentManager,
    SweepSpec,
    apply_sweep_value,
    cross_validate,
    run_sweep,
)
from services.monte_carlo import SimEstimate, SimSettings
from services.network_model import ConfigValidationError, MaternCluster, ThomasCluster
from utils.units import db_to_linear

SETTINGS = SimSettings(trials=100, master_seed=5, window_radius=1500.0, min_expected_bs=5.0)


class DummySimulator:
    """Stand-in for ``estimate_many`` returning fixed means."""

    def __init__(self, means, half_width=0.005):
        self.means = list(means)
        self.half_width = half_width
        self.calls = []

    def __call__(self, cfg, taus, settings):
        self.calls.append((cfg, list(taus)))
        return [
            SimEstimate(
                tau=tau,
                mean=mean,
                half_width=self.half_width,
                trials=settings.trials,
                seed=settings.master_seed,
                confidence=settings.confidence,
                per_tier_assoc_freq=(0.5, 0.2, 0.3),
                per_tier_cov_freq=(0.9, 0.1, 0.2),
            )
            for tau, mean in zip(taus, self.means)
        ]


class DummyReport:
    def __init__(self, total):
        self.total = total


# ----------------------------------------------------------------------
# Sweep definition
# ----------------------------------------------------------------------
def test_sweep_spec_validation(thomas_cfg, matern_cfg):
    with pytest.raises(ConfigValidationError):
        SweepSpec("altitude", (1.0,))
    with pytest.raises(ConfigValidationError):
        SweepSpec("tau_db", ())
    with pytest.raises(ConfigValidationError, match="monotone"):
        SweepSpec("tau_db", (1.0, 1.0))
    with pytest.raises(ConfigValidationError):
        SweepSpec("tau_db", (1.0,), outputs=("everything",))
    with pytest.raises(ConfigValidationError):
        SweepSpec("radius_m", (10.0, 20.0)).check_model(thomas_cfg)
    with pytest.raises(ConfigValidationError):
        SweepSpec("power_ratio_db", (-10.0, 0.0), reference_tier=2).check_model(thomas_cfg)
    SweepSpec("radius_m", (10.0, 20.0)).check_model(matern_cfg)


def test_apply_sweep_value(thomas_cfg):
    cfg, tau = apply_sweep_value(thomas_cfg, SweepSpec("tau_db", (10.0,)), 10.0)
    assert tau == pytest.approx(10.0) and cfg is thomas_cfg

    cfg, tau = apply_sweep_value(thomas_cfg, SweepSpec("sigma_m", (40.0,), tau_db=3.0), 40.0)
    assert cfg.cluster == ThomasCluster(40.0)
    assert tau == pytest.approx(db_to_linear(3.0))

    cfg, _ = apply_sweep_value(thomas_cfg, SweepSpec("zeta_scale", (4.0,)), 4.0)
    assert cfg.cluster == ThomasCluster(80.0)

    cfg, _ = apply_sweep_value(thomas_cfg, SweepSpec("eta_db", (6.0,)), 6.0)
    assert [t.shadow_eta_db for t in cfg.tiers] == [6.0, 6.0]

    cfg, _ = apply_sweep_value(thomas_cfg, SweepSpec("power_ratio_db", (-20.0,)), -20.0)
    assert cfg.power(2) / cfg.power(1) == pytest.approx(db_to_linear(-20.0))
    assert cfg.power(2) == thomas_cfg.power(2)

    matern = two_tier(MaternCluster(40.0))
    cfg, _ = apply_sweep_value(matern, SweepSpec("radius_m", (70.0,)), 70.0)
    assert cfg.cluster == MaternCluster(70.0)


# ----------------------------------------------------------------------
# Sweeps
# ----------------------------------------------------------------------
def test_threshold_sweep_without_simulation(thomas_cfg):
    sweep = SweepSpec("tau_db", (-10.0, -5.0, 0.0, 5.0, 10.0))
    events = []
    manager = ExperimentManager(progress=lambda *event: events.append(event))
    rows = manager.run_sweep(thomas_cfg, sweep, SETTINGS, simulate=False)

    assert [r.value for r in rows] == list(sweep.values)
    totals = [r.analytic for r in rows]
    assert all(b <= a + 1e-9 for a, b in zip(totals, totals[1:]))
    for row in rows:
        assert row.sim_mean is None
        assert sum(row.assoc) == pytest.approx(1.0, abs=1e-6)
        assert row.lower <= row.analytic + 1e-7 and row.analytic <= row.upper + 1e-7
    assert events[0][:2] == ("sweep", "start")
    assert manager.get_event_log()[-1]["action"] == "done"


def test_threshold_sweep_simulates_once(monkeypatch, thomas_cfg):
    fake = DummySimulator([0.8, 0.6, 0.4])
    monkeypatch.setattr(em, "estimate_many", fake)
    sweep = SweepSpec("tau_db", (-5.0, 0.0, 5.0), outputs=("simulated",))
    rows = run_sweep(thomas_cfg, sweep, SETTINGS)
    assert len(fake.calls) == 1
    assert [r.sim_mean for r in rows] == [0.8, 0.6, 0.4]
    assert all(r.analytic is None for r in rows)


def test_cluster_sweep_simulates_every_point(monkeypatch, thomas_cfg):
    fake = DummySimulator([0.5])
    monkeypatch.setattr(em, "estimate_many", fake)
    sweep = SweepSpec("sigma_m", (10.0, 20.0), outputs=("simulated", "association"))
    rows = ExperimentManager(workers=2).run_sweep(thomas_cfg, sweep, SETTINGS)
    assert [call[0].cluster for call in fake.calls] == [ThomasCluster(10.0), ThomasCluster(20.0)]
    assert all(not math.isnan(r.assoc[0]) for r in rows)


def test_outputs_not_requested_stay_empty(thomas_cfg):
    sweep = SweepSpec("tau_db", (0.0,), outputs=("analytic",))
    (row,) = run_sweep(thomas_cfg, sweep, SETTINGS, simulate=False)
    assert row.lower is None and row.ppp_limit is None
    assert all(math.isnan(a) for a in row.assoc)


@pytest.mark.slow
def test_cluster_scaling_approaches_ppp_limit(thomas_cfg):
    sweep = SweepSpec("zeta_scale", (1.0, 2.0, 4.0, 8.0, 16.0))
    rows = run_sweep(thomas_cfg, sweep, SETTINGS, simulate=False)
    assert abs(rows[-1].analytic - rows[-1].ppp_limit) < 0.01


@pytest.mark.slow
def test_power_ratio_sweep_saturates():
    values = tuple(-100.0 + 100.0 * i / 19 for i in range(20))
    results = {}
    for sigma in (20.0, 40.0):
        cfg = two_tier(ThomasCluster(sigma), closed=0.0)
        sweep = SweepSpec("power_ratio_db", values, reference_tier=1)
        results[sigma] = run_sweep(cfg, sweep, SETTINGS, simulate=False)

    rows = results[20.0]
    totals = [r.analytic for r in rows]
    assert all(b >= a - 1e-6 for a, b in zip(totals, totals[1:]))
    assert abs(totals[0] - rows[0].ppp_limit) < 0.02
    assert totals[-1] - totals[-2] < 0.005
    mid = len(values) // 2
    slope = {s: results[s][mid + 1].analytic - results[s][mid - 1].analytic for s in results}
    assert slope[20.0] >= slope[40.0]


# ----------------------------------------------------------------------
# Cross-validation
# ----------------------------------------------------------------------
def test_cross_validation_passes_within_tolerance(monkeypatch, thomas_cfg):
    monkeypatch.setattr(em, "estimate_many", DummySimulator([0.705, 0.5]))
    monkeypatch.setattr(
        ExperimentManager, "_analytic_point", lambda self, cfg, tau: DummyReport(0.7 if tau < 1 else 0.508)
    )
    report = cross_validate(thomas_cfg, [-5.0, 0.0], SETTINGS, tolerance=0.01)
    assert report.passed
    assert report.as_dict()["master_seed"] == 5
    assert [row.wide_interval for row in report.rows] == [False, False]


def test_cross_validation_flags_failures(monkeypatch, thomas_cfg):
    monkeypatch.setattr(em, "estimate_many", DummySimulator([0.6]))
    monkeypatch.setattr(ExperimentManager, "_analytic_point", lambda self, cfg, tau: DummyReport(0.7))
    report = cross_validate(thomas_cfg, [0.0], SETTINGS, tolerance=0.01)
    assert not report.passed
    assert report.as_dict()["rows"][0]["passed"] is False


def test_wide_intervals_are_flagged_not_failed(monkeypatch, thomas_cfg):
    monkeypatch.setattr(em, "estimate_many", DummySimulator([0.66], half_width=0.08))
    monkeypatch.setattr(ExperimentManager, "_analytic_point", lambda self, cfg, tau: DummyReport(0.7))
    report = cross_validate(thomas_cfg, [0.0], SETTINGS, tolerance=0.01)
    assert report.passed
    assert report.rows[0].wide_interval


def test_cross_validation_needs_thresholds(thomas_cfg):
    with pytest.raises(ConfigValidationError):
        cross_validate(thomas_cfg, [], SETTINGS)


@pytest.mark.slow
@pytest.mark.parametrize("cluster", [ThomasCluster(20.0), ThomasCluster(40.0)])
def test_reference_network_validates(cluster):
    settings = SimSettings(
        trials=20_000, master_seed=3, window_radius=2000.0, min_expected_bs=10.0, workers=4
    )
    report = cross_validate(two_tier(cluster), [-10.0, 0.0, 10.0], settings, tolerance=0.015)
    assert report.passed


@pytest.mark.slow
def test_shadowed_matern_network_validates():
    settings = SimSettings(
        trials=20_000, master_seed=11, window_radius=3000.0, min_expected_bs=10.0, workers=4
    )
    cfg = two_tier(MaternCluster(40.0), eta_db=8.0)
    report = cross_validate(cfg, [-10.0, 0.0, 10.0], settings, tolerance=0.015)
    assert report.passed
