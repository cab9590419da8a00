import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prl.gaussmix import cap_measure
from prl.perturb import NormKind, PerturbationSpec, contains, sample_perturbation


def test_l2_samples_inside_ball():
    spec = PerturbationSpec(NormKind.L2, 1.0, 3)
    d = sample_perturbation(spec, np.random.default_rng(0))
    assert d.shape == (3,)
    assert np.linalg.norm(d) <= 1.0


def test_linf_samples_inside_box():
    spec = PerturbationSpec(NormKind.LINF, 0.3, 2)
    d = sample_perturbation(spec, np.random.default_rng(1), 1000)
    assert d.shape == (1000, 2)
    assert np.all(np.abs(d) <= 0.3)


def test_l2_second_moment():
    spec = PerturbationSpec(NormKind.L2, 1.0, 2)
    d = sample_perturbation(spec, np.random.default_rng(2), 10**6)
    assert abs(np.mean(np.sum(d**2, axis=1)) - 0.5) < 0.01


def test_l2_second_moment_matches_rejection_sampling():
    # independent oracle: uniform points of the bounding box kept if inside
    rng = np.random.default_rng(3)
    box = rng.uniform(-1, 1, (400_000, 2))
    kept = box[np.sum(box**2, axis=1) <= 1]
    spec = PerturbationSpec(NormKind.L2, 1.0, 2)
    d = sample_perturbation(spec, rng, kept.shape[0])
    a, b = np.sum(kept**2, axis=1), np.sum(d**2, axis=1)
    se = np.sqrt(a.var() / a.size + b.var() / b.size)
    assert abs(a.mean() - b.mean()) < 4 * se


def test_l2_radial_distribution_d3():
    # P(||delta|| <= r) = (r / eps)^d
    spec = PerturbationSpec(NormKind.L2, 2.0, 3)
    d = sample_perturbation(spec, np.random.default_rng(4), 200_000)
    frac = np.mean(np.linalg.norm(d, axis=1) <= 1.0)
    p = 1 / 8
    assert abs(frac - p) < 4 * np.sqrt(p * (1 - p) / 200_000)


def test_contains_examples():
    assert contains(PerturbationSpec(NormKind.L2, 1, 2), [0, 0])
    assert contains(PerturbationSpec(NormKind.L2, 1, 2), [1, 0])
    assert not contains(PerturbationSpec(NormKind.LINF, 0.3, 2), [0.31, 0])


def test_contains_dimension_mismatch():
    with pytest.raises(ValueError):
        contains(PerturbationSpec(NormKind.L2, 1, 2), [0, 0, 0])


@pytest.mark.parametrize("kind", list(NormKind))
@pytest.mark.parametrize("dim", [1, 2, 7, 100])
def test_all_samples_contained(kind, dim):
    spec = PerturbationSpec(kind, 0.7, dim)
    d = sample_perturbation(spec, np.random.default_rng(dim), 100_000 // dim)
    assert np.all(contains(spec, d))


def test_cap_fraction_matches_exact_measure():
    spec = PerturbationSpec(NormKind.L2, 1.0, 5)
    n = 400_000
    d = sample_perturbation(spec, np.random.default_rng(5), n)
    for h in (-0.4, 0.0, 0.3, 0.6):
        p = cap_measure(5, h)
        frac = np.mean(d[:, 0] >= h)
        assert abs(frac - p) <= 3 * np.sqrt(p * (1 - p) / n) + 1e-12


def test_same_seed_same_stream():
    spec = PerturbationSpec(NormKind.L2, 1.0, 4)
    a = sample_perturbation(spec, np.random.default_rng(42), (10, 3))
    b = sample_perturbation(spec, np.random.default_rng(42), (10, 3))
    assert a.shape == (10, 3, 4)
    np.testing.assert_array_equal(a, b)


def test_zero_radius_is_degenerate():
    spec = PerturbationSpec(NormKind.L2, 0.0, 3)
    np.testing.assert_array_equal(sample_perturbation(spec, np.random.default_rng(0), 5), 0)


@pytest.mark.parametrize("bad", [dict(radius=-1.0, dim=2), dict(radius=np.inf, dim=2),
                                 dict(radius=1.0, dim=0), dict(radius=1.0, dim=1.5)])
def test_invalid_spec(bad):
    with pytest.raises(ValueError):
        PerturbationSpec(NormKind.L2, **bad)


def test_roundtrip_dict():
    spec = PerturbationSpec(NormKind.LINF, 0.25, 6)
    assert PerturbationSpec.from_dict(spec.to_dict()) == spec


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(list(NormKind)), st.floats(0.01, 10), st.integers(1, 30),
       st.lists(st.floats(-100, 100), min_size=1, max_size=30))
def test_projection_lands_in_ball_and_is_idempotent(kind, radius, dim, raw):
    spec = PerturbationSpec(kind, radius, dim)
    v = np.resize(np.array(raw), dim)
    p = spec.project(v)
    assert contains(spec, p)
    np.testing.assert_allclose(spec.project(p), p, rtol=1e-12, atol=1e-12)
    if contains(spec, v):
        np.testing.assert_allclose(p, v, rtol=1e-12)
