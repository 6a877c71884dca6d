import logging
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate

import services.analytic_engine as engine
from conftest import SMALL_DENSITY, two_tier
from services.analytic_engine import (
    DegenerateConditioningError,
    MixedWeightsError,
    ModelMismatchError,
    assoc_conditional,
    assoc_matern_closed,
    assoc_prob_conditional,
    assoc_thomas_closed,
    coverage,
    coverage_bounds,
    laplace_center,
    laplace_closed,
    laplace_open,
    mixed_coverage,
    mixed_weights,
    per_tier_coverage_conditional,
    ppp_limit_coverage,
    serving_dist_pdf,
)
from services.network_model import (
    ConfigValidationError,
    MaternCluster,
    NetworkConfig,
    ThomasCluster,
    TierParams,
    cell_edge_noise_power,
    effective_network,
)
from utils.units import db_to_linear


def single_tier(cluster=None, lambda_open=1.0 / math.pi, lambda_closed=0.0):
    cluster = cluster or ThomasCluster(20.0)
    return NetworkConfig(4.0, (TierParams(1.0, lambda_open, lambda_closed),), 1, cluster)


# ----------------------------------------------------------------------
# Association
# ----------------------------------------------------------------------
def test_balanced_single_tier_association_is_even():
    sigma = 20.0
    cfg = single_tier(ThomasCluster(sigma), lambda_open=1.0 / (2.0 * math.pi * sigma ** 2))
    net = effective_network(cfg)
    assert assoc_thomas_closed(0, 1.0, cfg, net) == pytest.approx(0.5)
    assert assoc_thomas_closed(1, 1.0, cfg, net) == pytest.approx(0.5)
    assert assoc_prob_conditional(0, 1.0, cfg, net) == pytest.approx(0.5, abs=1e-8)


def test_tight_thomas_cluster_always_serves_from_center(thomas_cfg):
    cfg = thomas_cfg.with_cluster(ThomasCluster(1e-3))
    assert assoc_thomas_closed(0, 1.0, cfg, effective_network(cfg)) == pytest.approx(1.0, abs=1e-6)


def test_tiny_matern_cluster_always_serves_from_center(matern_cfg):
    cfg = matern_cfg.with_cluster(MaternCluster(1e-3))
    assert assoc_matern_closed(0, 1.0, cfg, effective_network(cfg)) == pytest.approx(1.0, abs=1e-6)


def test_huge_matern_cluster_rarely_serves_from_center(matern_cfg):
    cfg = matern_cfg.with_cluster(MaternCluster(1e5))
    assert assoc_matern_closed(0, 1.0, cfg, effective_network(cfg)) < 1e-3


@pytest.mark.parametrize("sigma", [10.0, 20.0, 40.0])
@pytest.mark.parametrize("v0", [0.3, 1.0, 4.0])
def test_thomas_association_closed_form_matches_quadrature(thomas_cfg, sigma, v0):
    cfg = thomas_cfg.with_cluster(ThomasCluster(sigma))
    net = effective_network(cfg)
    for j in range(cfg.K + 1):
        assert assoc_thomas_closed(j, v0, cfg, net) == pytest.approx(
            assoc_prob_conditional(j, v0, cfg, net), abs=1e-7
        )


@pytest.mark.parametrize("radius", [40.0, 70.0])
@pytest.mark.parametrize("v0", [0.3, 1.0, 4.0])
def test_matern_association_closed_form_matches_quadrature(matern_cfg, radius, v0):
    cfg = matern_cfg.with_cluster(MaternCluster(radius))
    net = effective_network(cfg)
    for j in range(cfg.K + 1):
        assert assoc_matern_closed(j, v0, cfg, net) == pytest.approx(
            assoc_prob_conditional(j, v0, cfg, net), abs=1e-7
        )


@pytest.mark.parametrize(
    "cluster", [ThomasCluster(5.0), ThomasCluster(20.0), MaternCluster(40.0), MaternCluster(150.0)]
)
@pytest.mark.parametrize("ratio_db", [-60.0, -30.0, 0.0])
@pytest.mark.parametrize("v0", [0.5, 1.0, 2.0])
def test_association_sums_to_one(cluster, ratio_db, v0):
    cfg = two_tier(cluster)
    cfg = cfg.with_tier(1, power=cfg.power(2) / db_to_linear(ratio_db))
    net = effective_network(cfg)
    closed = sum(assoc_conditional(j, v0, cfg, net) for j in range(cfg.K + 1))
    general = sum(assoc_prob_conditional(j, v0, cfg, net) for j in range(cfg.K + 1))
    assert closed == pytest.approx(1.0, abs=1e-6)
    assert general == pytest.approx(1.0, abs=1e-6)


def test_closed_forms_reject_wrong_model(thomas_cfg, thomas_net, matern_cfg, matern_net):
    with pytest.raises(ModelMismatchError):
        assoc_matern_closed(0, 1.0, thomas_cfg, thomas_net)
    with pytest.raises(ModelMismatchError):
        assoc_thomas_closed(0, 1.0, matern_cfg, matern_net)


# ----------------------------------------------------------------------
# Serving distance
# ----------------------------------------------------------------------
@pytest.mark.parametrize("cfg_name", ["thomas_cfg", "matern_cfg"])
def test_serving_distance_pdf_is_normalised(request, cfg_name):
    cfg = request.getfixturevalue(cfg_name)
    net = effective_network(cfg)
    for j in range(cfg.K + 1):
        if isinstance(cfg.cluster, MaternCluster):
            ratio = 1.0 if j == 0 else net.power_ratio(j, 0)
            upper = cfg.cluster.radius / ratio
        else:
            upper = np.inf
        mass, _ = integrate.quad(
            lambda w: serving_dist_pdf(j, w, 1.0, cfg, net), 0.0, upper, limit=200
        )
        assert mass == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("cfg_name", ["thomas_cfg", "matern_cfg"])
@pytest.mark.parametrize("w", [5.0, 20.0, 80.0])
def test_serving_distance_closed_form_matches_quadrature(request, cfg_name, w):
    cfg = request.getfixturevalue(cfg_name)
    net = effective_network(cfg)
    for j in range(cfg.K + 1):
        closed = serving_dist_pdf(j, w, 1.0, cfg, net, method="closed")
        general = serving_dist_pdf(j, w, 1.0, cfg, net, method="quadrature")
        assert closed == pytest.approx(general, rel=1e-6, abs=1e-12)


def test_matern_serving_distance_vanishes_outside_support(matern_cfg, matern_net):
    limit = matern_cfg.cluster.radius / matern_net.power_ratio(1, 0)
    assert serving_dist_pdf(1, limit * 1.01, 1.0, matern_cfg, matern_net) == 0.0
    assert serving_dist_pdf(0, 41.0, 1.0, matern_cfg, matern_net) == 0.0


# ----------------------------------------------------------------------
# Laplace transforms
# ----------------------------------------------------------------------
def test_laplace_open_and_closed_spot_values():
    cfg = single_tier(lambda_closed=1.0 / math.pi)
    net = effective_network(cfg)
    assert laplace_open(1, 1, 1.0, 1.0, cfg, net) == pytest.approx(math.exp(-math.pi / 4.0))
    assert laplace_closed(1, 1, 1.0, 1.0, cfg, net) == pytest.approx(math.exp(-math.pi / 2.0))
    assert laplace_open(1, 1, 0.0, 1.0, cfg, net) == 1.0
    assert laplace_open(1, 1, 1.0, 0.0, cfg, net) == 1.0
    assert laplace_closed(1, 1, 1.0, 0.0, cfg, net) == 1.0
    assert laplace_closed(1, 1, 1.0, 1.0, single_tier(), effective_network(single_tier())) == 1.0


def test_laplace_center_matches_conditional_expectation():
    sigma, w, tau = 20.0, 10.0, 1.0
    cfg = single_tier(ThomasCluster(sigma))
    rng = np.random.default_rng(11)
    # Y0 given Y0 > w for a Rayleigh law
    y = np.sqrt(w * w + 2.0 * sigma ** 2 * rng.exponential(1.0, 1_000_000))
    expected = np.mean(1.0 / (1.0 + tau * (w / y) ** 4))
    value = laplace_center(1, w, tau, 1.0, cfg)
    assert 0.5 <= value <= 1.0
    assert value == pytest.approx(expected, abs=1e-3)


def test_laplace_center_limits(thomas_cfg):
    tau = 3.0
    assert laplace_center(1, 10.0, 0.0, 1.0, thomas_cfg) == 1.0
    assert laplace_center(1, 1e-6, tau, 1.0, thomas_cfg) == pytest.approx(1.0, abs=1e-6)
    # the conditioned center sits just past the exclusion radius
    far = laplace_center(2, 1e4, tau, 1.0, thomas_cfg)
    assert far == pytest.approx(1.0 / (1.0 + tau), abs=1e-3)
    wide = thomas_cfg.with_cluster(ThomasCluster(1e5))
    assert laplace_center(2, 10.0, tau, 1.0, wide) == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("w", [1.0, 10.0, 30.0, 100.0])
@pytest.mark.parametrize("tau", [0.1, 1.0, 10.0])
def test_laplace_center_stays_within_its_bounds(matern_cfg, thomas_cfg, w, tau):
    for cfg in (thomas_cfg, matern_cfg):
        for j in (1, 2):
            value = laplace_center(j, w, tau, 1.0, cfg)
            assert 1.0 / (1.0 + tau) <= value <= 1.0


def test_laplace_center_degenerate_conditioning(matern_cfg):
    assert laplace_center(2, 50.0, 1.0, 1.0, matern_cfg) == 1.0
    with pytest.raises(DegenerateConditioningError):
        laplace_center(2, 50.0, 1.0, 1.0, matern_cfg, strict=True)


@pytest.mark.parametrize("raw, expected", [(1.2, 1.0), (0.1, 0.5)])
def test_laplace_center_clamp_is_logged(monkeypatch, caplog, matern_cfg, raw, expected):
    monkeypatch.setattr(engine, "integrate_interval", lambda *args, **kwargs: raw)
    with caplog.at_level(logging.DEBUG, logger="services.analytic_engine"):
        assert laplace_center(2, 5.0, 1.0, 1.0, matern_cfg) == expected
    assert "clamped" in caplog.text


def test_laplace_center_in_range_is_not_logged(caplog, matern_cfg):
    with caplog.at_level(logging.DEBUG, logger="services.analytic_engine"):
        laplace_center(2, 5.0, 1.0, 1.0, matern_cfg)
    assert "clamped" not in caplog.text


# ----------------------------------------------------------------------
# Coverage
# ----------------------------------------------------------------------
def test_zero_threshold_means_full_coverage(thomas_cfg, thomas_net):
    for j in range(thomas_cfg.K + 1):
        assert per_tier_coverage_conditional(j, 0.0, 1.0, thomas_cfg, thomas_net) == pytest.approx(
            1.0, abs=1e-6
        )
    report = coverage(0.0, thomas_cfg, thomas_net)
    assert report.total == pytest.approx(1.0, abs=1e-6)
    assert report.lower_bound == pytest.approx(1.0, abs=1e-6)
    assert report.upper_bound == pytest.approx(1.0, abs=1e-6)


def test_lone_cluster_center_always_covers():
    cfg = single_tier(lambda_open=0.0)
    net = effective_network(cfg)
    assert per_tier_coverage_conditional(0, 10.0, 1.0, cfg, net) == pytest.approx(1.0, abs=1e-6)
    report = coverage(10.0, cfg, net)
    assert report.total == pytest.approx(1.0, abs=1e-6)
    assert math.isnan(report.ppp_limit)


@pytest.mark.parametrize("cfg_name", ["thomas_cfg", "matern_cfg"])
def test_report_is_consistent(request, cfg_name):
    cfg = request.getfixturevalue(cfg_name)
    report = coverage(1.0, cfg)
    assert sum(report.assoc) == pytest.approx(1.0, abs=1e-6)
    assert all(0.0 <= p <= 1.0 for p in report.assoc + report.per_tier_coverage)
    weighted = sum(a * c for a, c in zip(report.assoc, report.per_tier_coverage))
    assert report.total == pytest.approx(weighted, abs=1e-6)
    assert report.lower_bound - 1e-7 <= report.total <= report.upper_bound + 1e-7
    # the upper bound drops the center BS, its gap peaks near these cluster sizes
    assert report.upper_bound - report.total <= 0.035
    assert report.bound_residual is not None and report.bound_residual < 1e-6


def test_coverage_decreases_with_threshold(thomas_cfg, thomas_net):
    totals = [coverage(db_to_linear(t), thomas_cfg, thomas_net).total for t in (-10.0, 0.0, 10.0)]
    assert totals[0] >= totals[1] >= totals[2]


def test_coverage_decreases_with_closed_access_density():
    base = coverage(1.0, two_tier(ThomasCluster(20.0), closed=0.0)).total
    dense = coverage(1.0, two_tier(ThomasCluster(20.0), closed=2.0 * SMALL_DENSITY)).total
    assert dense < base


@pytest.mark.parametrize("cluster", [ThomasCluster(40.0), MaternCluster(70.0)])
@pytest.mark.parametrize("tau", [0.1, 1.0, 10.0])
def test_closed_form_bounds_match_general_path(cluster, tau):
    cfg = two_tier(cluster)
    net = effective_network(cfg)
    closed = coverage_bounds(tau, cfg, net, method="closed")
    general = coverage_bounds(tau, cfg, net, method="general")
    assert closed[0] == pytest.approx(general[0], abs=1e-6)
    assert closed[1] == pytest.approx(general[1], abs=1e-6)


def test_closed_form_bounds_need_clean_conditions(thomas_cfg):
    noisy = two_tier(ThomasCluster(20.0), noise_power=1e-12)
    with pytest.raises(ModelMismatchError):
        coverage_bounds(1.0, noisy, effective_network(noisy), method="closed")
    lower, upper = coverage_bounds(1.0, noisy, effective_network(noisy))
    assert 0.0 <= lower <= upper <= 1.0


GRID_SIZES = [ThomasCluster(s) for s in (10.0, 20.0, 40.0, 80.0, 160.0)] + [
    MaternCluster(r) for r in (20.0, 40.0, 70.0, 100.0, 150.0)
]


@pytest.mark.slow
@pytest.mark.parametrize("cluster", GRID_SIZES, ids=lambda c: c.describe())
@pytest.mark.parametrize("ratio_db", [-40.0, -35.0, -30.0, -25.0, -20.0])
def test_closed_forms_agree_with_quadrature_across_the_grid(cluster, ratio_db):
    cfg = two_tier(cluster)
    cfg = cfg.with_tier(1, power=cfg.power(2) / db_to_linear(ratio_db))
    net = effective_network(cfg)
    if isinstance(cluster, ThomasCluster):
        assoc_closed, size = assoc_thomas_closed, cluster.sigma
    else:
        assoc_closed, size = assoc_matern_closed, cluster.radius
    for j in range(cfg.K + 1):
        assert assoc_closed(j, 1.0, cfg, net) == pytest.approx(
            assoc_prob_conditional(j, 1.0, cfg, net), abs=1e-6
        )
    w = size / 2.0
    for j in range(cfg.K + 1):
        closed = serving_dist_pdf(j, w, 1.0, cfg, net, method="closed")
        general = serving_dist_pdf(j, w, 1.0, cfg, net, method="quadrature")
        assert closed == pytest.approx(general, rel=1e-6, abs=1e-12)
    for tau_db in (-10.0, 0.0, 10.0):
        tau = db_to_linear(tau_db)
        closed = coverage_bounds(tau, cfg, net, method="closed")
        general = coverage_bounds(tau, cfg, net, method="general")
        assert closed[0] == pytest.approx(general[0], abs=1e-6)
        assert closed[1] == pytest.approx(general[1], abs=1e-6)


def test_ppp_limit_single_tier():
    cfg = single_tier()
    assert ppp_limit_coverage(1.0, cfg, effective_network(cfg)) == pytest.approx(
        1.0 / (1.0 + math.pi / 4.0), abs=1e-6
    )
    assert ppp_limit_coverage(1.0, cfg, effective_network(cfg)) == pytest.approx(0.56010, abs=1e-5)


def test_ppp_limit_needs_an_open_tier():
    cfg = single_tier(lambda_open=0.0, lambda_closed=1e-5)
    with pytest.raises(ConfigValidationError):
        ppp_limit_coverage(1.0, cfg, effective_network(cfg))


def test_ppp_limit_with_noise_is_lower(thomas_cfg, thomas_net):
    noise = cell_edge_noise_power(thomas_cfg.tiers, 4.0, 0.0)
    noisy = two_tier(ThomasCluster(20.0), noise_power=noise)
    quiet = ppp_limit_coverage(1.0, thomas_cfg, thomas_net)
    loud = ppp_limit_coverage(1.0, noisy, effective_network(noisy))
    assert loud < quiet


@pytest.mark.slow
def test_large_clusters_converge_to_ppp_limit(thomas_cfg, thomas_net):
    ppp = ppp_limit_coverage(1.0, thomas_cfg, thomas_net)
    gaps = []
    for zeta in (1, 2, 4, 8, 16):
        cfg = thomas_cfg.with_cluster(thomas_cfg.cluster.scaled(zeta))
        gaps.append(abs(coverage(1.0, cfg).total - ppp))
    assert all(b <= a + 1e-6 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.01


@pytest.mark.slow
def test_cell_edge_noise_barely_changes_coverage(thomas_cfg):
    noise = cell_edge_noise_power(thomas_cfg.tiers, 4.0, 0.0)
    noisy = two_tier(ThomasCluster(20.0), noise_power=noise)
    for tau_db in (-10.0, 0.0, 10.0):
        tau = db_to_linear(tau_db)
        assert coverage(tau, noisy).total == pytest.approx(coverage(tau, thomas_cfg).total, abs=0.005)


@pytest.mark.slow
def test_shadowed_report_is_consistent():
    cfg = two_tier(MaternCluster(40.0), eta_db=4.0)
    report = coverage(1.0, cfg)
    assert sum(report.assoc) == pytest.approx(1.0, abs=1e-6)
    assert report.lower_bound - 1e-7 <= report.total <= report.upper_bound + 1e-7
    assert report.bound_residual is None


@pytest.mark.slow
@pytest.mark.parametrize(
    "sizes",
    [
        [ThomasCluster(s) for s in (5.0, 10.0, 20.0, 40.0, 80.0)],
        [MaternCluster(r) for r in (10.0, 20.0, 40.0, 70.0, 100.0)],
    ],
    ids=["thomas", "matern"],
)
def test_bounds_across_cluster_sizes(sizes):
    lower_gaps = []
    for cluster in sizes:
        cfg = two_tier(cluster)
        for tau_db in (-10.0, 0.0, 10.0):
            report = coverage(db_to_linear(tau_db), cfg)
            assert report.lower_bound - 1e-7 <= report.total <= report.upper_bound + 1e-7
            if tau_db == 0.0:
                assert report.upper_bound - report.total <= 0.035
                lower_gaps.append(report.total - report.lower_bound)
    # the lower bound loosens as the cluster widens
    assert lower_gaps[-1] > lower_gaps[0]


# ----------------------------------------------------------------------
# Mixed populations
# ----------------------------------------------------------------------
def test_mixed_coverage_without_ppp_users(thomas_cfg):
    assert mixed_coverage(1.0, thomas_cfg) == pytest.approx(coverage(1.0, thomas_cfg).total, abs=1e-12)


def test_mixed_coverage_without_clustered_users(thomas_cfg, thomas_net):
    cfg = replace(thomas_cfg, mean_users_per_cluster=0.0, ppp_user_density=1e-4)
    assert mixed_weights(cfg) == (1.0, (0.0,))
    assert mixed_coverage(1.0, cfg) == pytest.approx(ppp_limit_coverage(1.0, cfg, thomas_net), abs=1e-12)


def test_even_mix_is_the_arithmetic_mean(thomas_cfg, thomas_net):
    cfg = replace(thomas_cfg, ppp_user_density=SMALL_DENSITY)
    p0, (p1,) = mixed_weights(cfg)
    assert p0 == pytest.approx(0.5) and p1 == pytest.approx(0.5)
    expected = 0.5 * (ppp_limit_coverage(1.0, cfg, thomas_net) + coverage(1.0, thomas_cfg).total)
    assert mixed_coverage(1.0, cfg) == pytest.approx(expected, abs=1e-12)


def test_mixed_weights_need_some_users(thomas_cfg):
    with pytest.raises(MixedWeightsError):
        mixed_weights(replace(thomas_cfg, mean_users_per_cluster=0.0))
