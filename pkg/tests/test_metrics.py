import csv
import io
import json
import math

import numpy as np
import pytest

from prl.gaussmix import GaussianMixtureSpec, LinearHypothesis, prob_risk, prob_robust_hypothesis
from prl.metrics import MetricsReport, accuracies, correct_counts, cvar_test, min_draws, prob_acc
from prl.models import Model, ModelKind
from prl.perturb import NormKind, PerturbationSpec


def linear(w, b):
    return Model(ModelKind.LINEAR_LOGISTIC, len(w), [*w, b])


def wide_margin_data(n=200):
    rng = np.random.default_rng(0)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    x = np.column_stack([y * rng.uniform(2.0, 3.0, n), rng.standard_normal(n)])
    return x, y


def test_wide_margin_model_is_perfect():
    x, y = wide_margin_data()
    model = linear([1.0, 0.0], 0.0)
    pert = PerturbationSpec(NormKind.L2, 1.0, 2)
    rep = accuracies(model, x, y, pert, 20, 10, 0.5, np.random.default_rng(1),
                     rhos=(0.0, 0.1), tails=(0.05,))
    assert rep.clean_acc == rep.aug_acc == rep.adv_acc == 1.0
    assert rep.prob_acc == {0.0: 1.0, 0.1: 1.0}


def test_rho_one_is_vacuous():
    x, y = wide_margin_data()
    model = linear([-1.0, 0.0], 0.0)  # wrong everywhere
    pert = PerturbationSpec(NormKind.L2, 1.0, 2)
    assert prob_acc(model, x, y, pert, 1.0, 10, np.random.default_rng(0)) == 1.0
    assert prob_acc(model, x, y, pert, 0.5, 10, np.random.default_rng(0)) == 0.0


def test_zero_radius_collapses_columns():
    spec = GaussianMixtureSpec.isotropic(3, 1.0)
    x, y = spec.sample(500, np.random.default_rng(0))
    model = linear([0.5, 0.2, 0.1], 0.05)
    rep = accuracies(model, x, y, PerturbationSpec(NormKind.L2, 0.0, 3), 5, 5, 0.1,
                     np.random.default_rng(1))
    assert rep.clean_acc == rep.aug_acc == rep.adv_acc


def test_prob_acc_matches_closed_form():
    spec = GaussianMixtureSpec.isotropic(2, 2.0)
    x, y = spec.sample(10_000, np.random.default_rng(0))
    hp = prob_robust_hypothesis(spec, 1.0, 0.1)
    model = linear(hp.w, -hp.c)
    pert = PerturbationSpec(NormKind.L2, 1.0, 2)
    est = prob_acc(model, x, y, pert, 0.1, 400, np.random.default_rng(1))
    p = 1 - prob_risk(hp, spec, 1.0, 0.1)
    # sampling of the points plus the finite-N_mc threshold bias
    assert abs(est - p) <= 3 * math.sqrt(p * (1 - p) / 10_000) + 0.01


def test_prob_acc_non_decreasing_in_rho_and_margin():
    spec = GaussianMixtureSpec.isotropic(2, 1.5)
    x, y = spec.sample(2000, np.random.default_rng(0))
    pert = PerturbationSpec(NormKind.L2, 1.0, 2)
    model = linear([1.0, 1.0], 0.0)
    k = correct_counts(model, x, y, pert, 50, np.random.default_rng(1))
    vals = [np.mean(k >= (1 - r) * 50 - 1e-9) for r in (0.0, 0.1, 0.3, 0.5, 1.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    # shifting the boundary away from every point of one class never lowers that class
    pos = y > 0
    near = prob_acc(model, x[pos], y[pos], pert, 0.1, 50, np.random.default_rng(2))
    far = prob_acc(linear([1.0, 1.0], 1.0), x[pos], y[pos], pert, 0.1, 50,
                   np.random.default_rng(2))
    assert far >= near


def test_cvar_constant_loss_and_full_tail():
    x, y = wide_margin_data(50)
    pert = PerturbationSpec(NormKind.L2, 1.0, 2)
    const = linear([0.0, 0.0], 0.0)
    assert cvar_test(const, x, y, pert, 0.05, 20, np.random.default_rng(0)) == pytest.approx(
        math.log(2))
    model = linear([0.7, -0.2], 0.1)
    full = cvar_test(model, x, y, pert, 1.0, 30, np.random.default_rng(1))
    rng = np.random.default_rng(1)
    from prl.perturb import sample_perturbation
    d = sample_perturbation(pert, rng, (50, 30))
    mean_aug = model.losses((x[:, None] + d).reshape(-1, 2), np.repeat(y, 30)).mean()
    assert full == pytest.approx(mean_aug, rel=1e-12)
    tail = cvar_test(model, x, y, pert, 0.05, 30, np.random.default_rng(1))
    assert tail >= full


def test_cvar_needs_enough_draws():
    assert min_draws(0.05) == 20
    assert min_draws(0.3) == 4
    x, y = wide_margin_data(5)
    with pytest.raises(ValueError):
        cvar_test(linear([1.0, 0.0], 0.0), x, y, PerturbationSpec(NormKind.L2, 1.0, 2), 0.05, 19,
                  np.random.default_rng(0))


def test_adversary_dominates_random_draws():
    spec = GaussianMixtureSpec.isotropic(2, 1.0)
    x, y = spec.sample(3000, np.random.default_rng(0))
    model = linear([1.0, 0.8], -0.1)
    rep = accuracies(model, x, y, PerturbationSpec(NormKind.LINF, 0.4, 2), 20, 10, 0.1,
                     np.random.default_rng(2))
    assert rep.adv_acc <= rep.aug_acc + 0.01
    assert rep.adv_acc <= rep.clean_acc + 0.01
    assert 0 <= rep.aug_acc <= 1


def test_metrics_are_deterministic():
    spec = GaussianMixtureSpec.isotropic(2, 1.0)
    x, y = spec.sample(500, np.random.default_rng(0))
    model = linear([1.0, 0.0], 0.0)
    pert = PerturbationSpec(NormKind.L2, 0.5, 2)
    a = accuracies(model, x, y, pert, 5, 3, 0.2, np.random.default_rng(9), (0.1,), (0.1,))
    b = accuracies(model, x, y, pert, 5, 3, 0.2, np.random.default_rng(9), (0.1,), (0.1,))
    assert a == b


def test_prob_acc_needs_rng_and_draws():
    x, y = wide_margin_data(5)
    pert = PerturbationSpec(NormKind.L2, 1.0, 2)
    with pytest.raises(ValueError):
        prob_acc(linear([1.0, 0.0], 0.0), x, y, pert, 0.1, 10)
    with pytest.raises(ValueError):
        prob_acc(linear([1.0, 0.0], 0.0), x, y, pert, 0.1, 0, np.random.default_rng(0))


def test_report_serialization():
    rep = MetricsReport(0.9, 0.85, 0.6, {0.1: 0.8}, {0.05: 0.4}, n_points=10, aug_M=5)
    d = json.loads(rep.to_json())
    assert d["prob_acc"] == {"0.1": 0.8} and d["clean_acc"] == 0.9
    rows = list(csv.DictReader(io.StringIO(rep.csv_row(header=True, method="prl"))))
    assert rows[0]["method"] == "prl"
    assert float(rows[0]["prob_acc@0.1"]) == 0.8
    assert rep.csv_row().count("\n") == 1


def test_hypothesis_and_model_agree_on_labels():
    h = LinearHypothesis([1.0, -2.0], 0.5)
    m = linear([1.0, -2.0], -0.5)
    x = np.random.default_rng(0).standard_normal((100, 2))
    np.testing.assert_array_equal(h.predict(x), m.predict(x))
