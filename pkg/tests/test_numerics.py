import numpy as np
import pytest

from distortlab.numerics import (
    Dataset,
    DimensionError,
    Model,
    NonFiniteError,
    finite_diff_grad,
    gd_step,
    grad_inputs,
    grad_params,
    grad_params_input_vjp,
    init_model,
    input_gradients,
    loss_mean,
    per_sample_loss,
    predict,
    project_inside_ball,
    project_outside_ball,
    sigmoid,
)

KINDS = [("linear", 0), ("logistic", 0), ("mlp", 3)]


def _instance(kind, hidden, seed, n=4, d=3):
    rng = np.random.default_rng(seed)
    model = init_model(kind, d, hidden, rng, scale=0.7)
    X = rng.uniform(0, 1, size=(n, d))
    y = rng.normal(size=n) if kind == "linear" else rng.integers(0, 2, size=n).astype(float)
    return model, Dataset(X, y)


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)


@pytest.mark.parametrize("kind,hidden", KINDS)
def test_param_gradient_matches_finite_differences(kind, hidden):
    for seed in range(5):
        model, data = _instance(kind, hidden, seed)
        fd = finite_diff_grad(lambda p: loss_mean(model.with_params(p), data), model.params)
        assert _rel(grad_params(model, data), fd) < 1e-6


@pytest.mark.parametrize("kind,hidden", KINDS)
def test_input_gradients_match_finite_differences(kind, hidden):
    model, data = _instance(kind, hidden, 11)
    G = input_gradients(model, data.features, data.labels)
    for i in range(data.n):
        fd = finite_diff_grad(lambda x: per_sample_loss(model, x[None, :], data.labels[i:i + 1])[0],
                              data.features[i])
        assert _rel(G[i], fd) < 1e-6
        assert np.allclose(grad_inputs(model, data.features[i], data.labels[i]), G[i])


@pytest.mark.parametrize("kind,hidden", KINDS)
def test_gradient_matching_vjp(kind, hidden):
    model, data = _instance(kind, hidden, 5)
    v = np.random.default_rng(9).normal(size=model.params.size)

    def objective(X):
        # Bypass Dataset clamping so the finite difference sees the raw function.
        return float(v @ grad_params(model, Dataset(np.clip(X, 1e-6, 1 - 1e-6), data.labels)))

    X = np.clip(data.features, 0.05, 0.95)
    fd = finite_diff_grad(objective, X)
    assert _rel(grad_params_input_vjp(model, Dataset(X, data.labels), v), fd) < 1e-6


def test_dataset_clamps_and_counts():
    ds = Dataset([[1.5, -0.2], [0.3, 0.4]], [0, 1])
    assert ds.features.max() <= 1 and ds.features.min() >= 0
    assert ds.clamp_events == 2
    with pytest.raises(DimensionError):
        Dataset(np.zeros((2, 2)), [0])
    with pytest.raises(NonFiniteError):
        Dataset([[np.nan]], [0])


def test_model_validation():
    with pytest.raises(ValueError):
        Model("linear", np.zeros(3), input_dim=3)
    with pytest.raises(ValueError):
        init_model("mlp", 2, hidden=17)
    with pytest.raises(ValueError):
        init_model("svm", 2)
    assert init_model("linear", 3).params.tolist() == [0, 0, 0, 0]


def test_predict_shapes_and_sigmoid_stability():
    model, data = _instance("logistic", 0, 0)
    assert np.ndim(predict(model, data.features[0])) == 0
    assert predict(model, data.features).shape == (data.n,)
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert s.tolist() == [0.0, 0.5, 1.0]


def test_gd_step():
    assert gd_step([1.0, 2.0], [1.0, -1.0], 0.5).tolist() == [0.5, 2.5]
    with pytest.raises(DimensionError):
        gd_step([1.0], [1.0, 2.0], 0.1)


def test_finite_diff_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        with np.errstate(all="ignore"):
            finite_diff_grad(lambda x: np.log(x[0]), np.array([0.0]))


def test_ball_projections():
    v = np.array([0.3, 0.4])
    assert np.allclose(project_outside_ball(v, 1.0, [1, 0]), [0.6, 0.8])
    assert np.allclose(project_outside_ball(v, 0.1, [1, 0]), v)
    assert np.allclose(project_outside_ball(np.zeros(2), 2.0, [0, 1]), [0, 2])
    assert np.allclose(project_inside_ball(v, 0.25), [0.15, 0.2])
    assert np.allclose(project_inside_ball(v, 1.0), v)
