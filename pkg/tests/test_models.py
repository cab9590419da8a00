import numpy as np
import pytest

from prl.models import Model, ModelKind, loss, loss_grad, param_count, predict_label

KINDS = [(ModelKind.LINEAR_LOGISTIC, None), (ModelKind.LINEAR_SQUARED, None),
         (ModelKind.MLP_LOGISTIC, 5)]


def labels(kind, rng, n):
    if kind is ModelKind.LINEAR_SQUARED:
        return rng.standard_normal(n)
    return np.where(rng.random(n) < 0.5, 1.0, -1.0)


def fd_param_grad(model, x, y, h=1e-6):
    g = np.zeros_like(model.params)
    for i in range(g.size):
        p = model.params.copy()
        p[i] += h
        up = model.with_params(p).loss(x, y)
        p[i] -= 2 * h
        down = model.with_params(p).loss(x, y)
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8)


@pytest.mark.parametrize("kind,h", KINDS)
def test_loss_grad_matches_finite_differences(kind, h):
    rng = np.random.default_rng(0)
    for _ in range(20):
        model = Model.init(kind, 4, h, rng=rng)
        x, y = rng.standard_normal(4), labels(kind, rng, 1)[0]
        assert rel_err(loss_grad(model, x, y), fd_param_grad(model, x, y)) <= 1e-5


@pytest.mark.parametrize("kind,h", KINDS)
def test_input_grads_match_finite_differences(kind, h):
    rng = np.random.default_rng(1)
    model = Model.init(kind, 3, h, rng=rng)
    x, y = rng.standard_normal((6, 3)), labels(kind, rng, 6)
    g = model.input_grads(x, y)
    for i in range(6):
        fd = np.zeros(3)
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1e-6
            fd[j] = (model.loss(x[i] + e, y[i]) - model.loss(x[i] - e, y[i])) / 2e-6
        assert rel_err(g[i], fd) <= 1e-5


@pytest.mark.parametrize("kind,h", KINDS)
def test_weighted_gradient_equals_weighted_sum(kind, h):
    rng = np.random.default_rng(2)
    model = Model.init(kind, 3, h, rng=rng)
    x, y = rng.standard_normal((10, 3)), labels(kind, rng, 10)
    coef = rng.random(10)
    np.testing.assert_allclose(model.grad_weighted(x, y, coef), coef @ model.grads(x, y),
                               rtol=1e-12, atol=1e-14)


def test_zero_model_examples():
    m = Model.init(ModelKind.LINEAR_LOGISTIC, 2)
    np.testing.assert_array_equal(m.params, 0.0)
    assert loss(m, [1.0, 1.0], 1) == pytest.approx(np.log(2))
    np.testing.assert_allclose(loss_grad(m, [1.0, 1.0], 1), [-0.5, -0.5, -0.5])
    assert predict_label(m, [3.0, -1.0]) == 1


def test_squared_loss_example():
    m = Model(ModelKind.LINEAR_SQUARED, 2, [1.0, 2.0])
    assert loss(m, [1.0, 1.0], 1.0) == 4.0
    np.testing.assert_allclose(loss_grad(m, [1.0, 1.0], 1.0), [4.0, 4.0])


def test_logistic_loss_is_stable_for_large_margins():
    m = Model(ModelKind.LINEAR_LOGISTIC, 1, [1000.0, 0.0])
    assert loss(m, [1.0], -1) == pytest.approx(1000.0)
    assert loss(m, [1.0], 1) == 0.0
    assert np.all(np.isfinite(loss_grad(m, [1.0], -1)))


def test_param_counts():
    assert param_count(ModelKind.LINEAR_LOGISTIC, 5) == 6
    assert param_count(ModelKind.LINEAR_SQUARED, 5) == 5
    assert param_count(ModelKind.MLP_LOGISTIC, 5, 3) == 22
    with pytest.raises(ValueError):
        param_count(ModelKind.MLP_LOGISTIC, 5)


def test_wrong_param_length():
    with pytest.raises(ValueError):
        Model(ModelKind.LINEAR_LOGISTIC, 2, [1.0, 2.0])


def test_bad_labels():
    m = Model.init(ModelKind.LINEAR_LOGISTIC, 2)
    with pytest.raises(ValueError):
        m.losses(np.ones((1, 2)), [0.0])


def test_mlp_needs_rng():
    with pytest.raises(ValueError):
        Model.init(ModelKind.MLP_LOGISTIC, 2, 4)


def test_uniform_init_scale():
    m = Model.init(ModelKind.LINEAR_LOGISTIC, 4, rng=np.random.default_rng(0))
    assert np.all(np.abs(m.params) <= 0.5)
    assert np.any(m.params != 0)


@pytest.mark.parametrize("kind,h", KINDS)
def test_json_roundtrip(kind, h):
    m = Model.init(kind, 3, h, rng=np.random.default_rng(4))
    back = Model.from_json(m.to_json())
    assert back.kind is m.kind and back.hidden_width == m.hidden_width
    np.testing.assert_array_equal(back.params, m.params)


def test_copy_is_independent():
    m = Model.init(ModelKind.LINEAR_LOGISTIC, 2)
    c = m.copy()
    c.params[0] = 1.0
    assert m.params[0] == 0.0


def test_mlp_has_no_weight_direction():
    m = Model.init(ModelKind.MLP_LOGISTIC, 2, 3, rng=np.random.default_rng(0))
    with pytest.raises(AttributeError):
        m.weights
