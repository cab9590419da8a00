import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prl.perturb import NormKind, PerturbationSpec, sample_perturbation
from prl.riskcore import LossSample, rho_esssup
from prl.vcsim import (behavior_set, build_class, canonical_points, error_measures,
                       growth_estimate, h_b_predict, loss_matrix, report_json, rhosup_01_loss,
                       shatter_report)


@pytest.fixture(scope="module")
def small():
    return build_class(0.25)


def test_construction_sizes():
    c = build_class(0.25)
    assert c.m == 3 and c.n_hypotheses == 8
    assert np.all(np.sum(~np.isnan(c.lows), axis=1) == 4)
    c = build_class(0.01)
    assert c.m == 8
    assert np.all(np.sum(~np.isnan(c.lows), axis=1) == 128)
    assert c.set_length / (2 * c.eps) == pytest.approx(0.00125)


@pytest.mark.parametrize("rho_o", [0.25, 0.1, 0.01])
def test_intervals_disjoint_and_inside(rho_o):
    c = build_class(rho_o)
    for i in range(c.m):
        ok = ~np.isnan(c.lows[i])
        lo, hi = c.lows[i, ok], c.highs[i, ok]
        order = np.argsort(lo)
        assert np.all(lo[order][1:] >= hi[order][:-1])
        assert np.all(lo >= c.centers[i] - c.eps) and np.all(hi <= c.centers[i] + c.eps)
        assert np.all(np.flatnonzero(ok) >> i & 1)
        total = np.sum(hi - lo) / (2 * c.eps)
        assert abs(total - 2 ** (c.m - 1) * rho_o / c.m) < 1e-15
        assert total < 1


def test_predictions(small):
    c = small
    assert all(h_b_predict(c, b, 1000.0) == 1 for b in range(8))
    b = c.signature([1, 0, 0])
    x = 0.5 * (c.lows[0, b] + c.highs[0, b])
    assert h_b_predict(c, b, x) == 0
    assert all(h_b_predict(c, other, x) == 1 for other in range(8) if other != b)


def test_signature_encoding(small):
    assert small.signature([1, 0, 1]) == 5
    assert small.signature(6) == 6
    with pytest.raises(ValueError):
        small.signature([1, 0])
    with pytest.raises(ValueError):
        small.signature(8)


@pytest.mark.parametrize("rho_o", [0.25, 0.01])
def test_centre_losses(rho_o):
    c = build_class(rho_o)
    for i in range(c.m):
        for b in range(c.n_hypotheses):
            assert rhosup_01_loss(c, b, c.centers[i], 1, 0.0) == (b >> i & 1)
            assert rhosup_01_loss(c, b, c.centers[i], 1, rho_o) == 0
            assert rhosup_01_loss(c, b, c.centers[i], 0, rho_o) == 1
            assert rhosup_01_loss(c, b, c.centers[i], 0, 0.9 * (1 - rho_o)) == 1


def test_canonical_points_shattered(small):
    assert len(behavior_set(small, canonical_points(small), 0.0)) == 8


@pytest.mark.parametrize("rho", [0.25, 0.5, 0.675])
def test_no_pair_shattered_in_robust_regime(small, rho):
    assert growth_estimate(small, rho, 2) <= 3
    assert growth_estimate(small, rho, 1) == 1


def test_growth_values(small):
    assert [growth_estimate(small, 0.0, k) for k in (1, 2, 3)] == [2, 4, 8]
    assert [growth_estimate(small, None, k) for k in (1, 2, 3)] == [2, 3, 4]
    assert growth_estimate(small, 0.5, 3) == 1


def test_nominal_pair_of_three_patterns(small):
    c = small
    b1, b2 = c.signature([1, 0, 0]), c.signature([0, 1, 0])
    x1 = 0.5 * (c.lows[0, b1] + c.highs[0, b1])
    x2 = 0.5 * (c.lows[1, b2] + c.highs[1, b2])
    pats = behavior_set(c, [(x1, 1), (x2, 1)], None)
    assert pats == {(1, 0), (0, 1), (0, 0)}


def test_grid_is_a_case_cover(small):
    # a dense uniform grid never finds more patterns than the breakpoint grid
    dense = np.linspace(-2, small.centers[-1] + 2, 4001)
    for rho in (0.0, 0.25, None):
        assert growth_estimate(small, rho, 2, grid=dense) <= growth_estimate(small, rho, 2)


def test_budget_guard(small):
    with pytest.raises(RuntimeError):
        growth_estimate(small, 0.0, 3, budget=10)
    with pytest.raises(ValueError):
        growth_estimate(small, 0.0, 0)


def test_behavior_set_limits(small):
    assert behavior_set(small, [], 0.0) == {()}
    with pytest.raises(ValueError):
        behavior_set(small, [(0.0, 1)] * 21, 0.0)
    with pytest.raises(ValueError):
        loss_matrix(small, [0.0], [2], 0.0)
    with pytest.raises(ValueError):
        loss_matrix(small, [0.0], [1], 1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 7), st.floats(-2, 10), st.integers(0, 1))
def test_loss_monotone_in_rho(b, x, y):
    c = build_class(0.25)
    losses = [rhosup_01_loss(c, b, x, y, r) for r in (0.0, 0.05, 0.2, 0.5, 0.9)]
    assert all(v <= u for u, v in zip(losses, losses[1:]))


def test_exact_measure_matches_monte_carlo(small):
    # 1000 random queries; each exact measure against a binomial 3-sigma band
    c = small
    rng = np.random.default_rng(0)
    pert = PerturbationSpec(NormKind.LINF, c.eps, 1)
    n_draws, outside = 4000, 0
    for _ in range(1000):
        i = int(rng.integers(c.m))
        x = float(c.centers[i] + rng.uniform(-1.5, 1.5) * c.eps)
        y = int(rng.integers(2))
        b = int(rng.integers(c.n_hypotheses))
        exact = error_measures(c, [x], [y])[0, b]
        xp = x + sample_perturbation(pert, rng, n_draws)[:, 0]
        lo, hi = c.lows[:, b], c.highs[:, b]
        pred = np.where(np.any((lo <= xp[:, None]) & (xp[:, None] < hi), axis=1), 0, 1)
        wrong = (pred != y).astype(float)
        frac = wrong.mean()
        sigma = math.sqrt(max(exact * (1 - exact), 1e-12) / n_draws)
        if abs(frac - exact) > 3 * sigma + 1e-12:
            outside += 1
        # the MC rho-esssup of the 0-1 loss is the strict exceedance of the MC fraction
        rho = 0.1
        assert rho_esssup(LossSample(wrong), rho) == float(frac > rho + 1e-12)
    assert outside <= 10


def test_report_shape(small):
    rep = shatter_report(small, [0.0, 0.25])
    assert rep["m"] == 3 and rep["shatter_counts"] == {"0.0": 8, "0.25": 1}
    assert rep["vc_estimates"]["growth"] == {"0.0": 4, "0.25": 1}
    assert rep["vc_estimates"]["nominal_vc_at_most_1"] is True
    assert '"rho_o": 0.25' in report_json(rep)


def test_invalid_class():
    for bad in (0.0, 0.5, -0.1):
        with pytest.raises(ValueError):
            build_class(bad)
