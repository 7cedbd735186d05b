"""Small differentiable models with hand-derived gradients.

Three model kinds are supported, all operating on a flat parameter vector:

``linear``
    ``f(x) = w.x + b`` trained with squared error.
``logistic``
    ``f(x) = sigmoid(w.x + b)`` trained with binary cross-entropy.
``mlp``
    one tanh hidden layer followed by a sigmoid output unit, binary
    cross-entropy.  Parameters are laid out as ``W1 (H*d, row-major), b1 (H),
    w2 (H), b2``.

Every gradient here has a central finite-difference counterpart in the test
suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MODEL_KINDS = ("linear", "logistic", "mlp")
MAX_HIDDEN = 16


class DimensionError(ValueError):
    """Array shapes disagree with model or dataset metadata."""


class NonFiniteError(FloatingPointError):
    """A NaN or infinity escaped a numerical routine."""


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")


@dataclass(frozen=True, eq=False)
class Model:
    kind: str
    params: np.ndarray
    input_dim: int
    hidden: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.kind == "mlp" and not 1 <= self.hidden <= MAX_HIDDEN:
            raise ValueError(f"mlp hidden width must be in [1, {MAX_HIDDEN}]")
        params = np.asarray(self.params, dtype=float).reshape(-1)
        expected = param_count(self.kind, self.input_dim, self.hidden)
        if params.size != expected:
            raise DimensionError(
                f"{self.kind} model with input_dim={self.input_dim} needs "
                f"{expected} params, got {params.size}"
            )
        _check_finite(params, "model params")
        object.__setattr__(self, "params", params)

    def with_params(self, params) -> "Model":
        return Model(self.kind, params, self.input_dim, self.hidden)

    @property
    def is_binary(self) -> bool:
        return self.kind != "linear"


def param_count(kind, input_dim, hidden=0):
    if kind in ("linear", "logistic"):
        return input_dim + 1
    if kind == "mlp":
        return hidden * input_dim + 2 * hidden + 1
    raise ValueError(f"unknown model kind {kind!r}")


def init_model(kind, input_dim, hidden=0, rng=None, scale=0.1) -> Model:
    """Small random initialisation (all zeros when ``rng`` is None)."""
    n = param_count(kind, input_dim, hidden)
    params = np.zeros(n) if rng is None else scale * rng.standard_normal(n)
    return Model(kind, params, input_dim, hidden)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix (rows in [0, 1]^d) plus labels.

    Features are clamped to the unit box on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    clamp_events: int = field(default=0, compare=False)

    def __post_init__(self):
        x = np.array(self.features, dtype=float, ndmin=2)
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if x.ndim != 2 or x.shape[0] < 1:
            raise DimensionError("features must be a non-empty n x d matrix")
        if y.size != x.shape[0]:
            raise DimensionError(f"{x.shape[0]} feature rows but {y.size} labels")
        _check_finite(x, "features")
        _check_finite(y, "labels")
        outside = int(np.count_nonzero((x < 0.0) | (x > 1.0)))
        object.__setattr__(self, "features", np.clip(x, 0.0, 1.0))
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "clamp_events", outside)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def with_features(self, features) -> "Dataset":
        return Dataset(features, self.labels)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def _unpack_mlp(model):
    d, h = model.input_dim, model.hidden
    p = model.params
    W1 = p[: h * d].reshape(h, d)
    b1 = p[h * d: h * d + h]
    w2 = p[h * d + h: h * d + 2 * h]
    b2 = p[-1]
    return W1, b1, w2, b2


def _as_rows(model, x):
    x = np.asarray(x, dtype=float)
    rows = x.reshape(1, -1) if x.ndim == 1 else x
    if rows.ndim != 2 or rows.shape[1] != model.input_dim:
        raise DimensionError(
            f"input has dimension {rows.shape[-1]}, model expects {model.input_dim}"
        )
    return rows


def _logits(model, X):
    """Pre-activation output per row (and hidden activations for the mlp)."""
    if model.kind == "mlp":
        W1, b1, w2, b2 = _unpack_mlp(model)
        H = np.tanh(X @ W1.T + b1)
        return H @ w2 + b2, H
    w, b = model.params[:-1], model.params[-1]
    return X @ w + b, None


def predict(model: Model, x) -> np.ndarray:
    """Model output for one sample (shape ``()``) or a batch of rows."""
    X = _as_rows(model, x)
    z, _ = _logits(model, X)
    out = z if model.kind == "linear" else sigmoid(z)
    return out[0] if np.asarray(x).ndim == 1 else out


def per_sample_loss(model: Model, X, y) -> np.ndarray:
    X = _as_rows(model, X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != X.shape[0]:
        raise DimensionError("label count does not match rows")
    z, _ = _logits(model, X)
    if model.kind == "linear":
        return (z - y) ** 2
    # BCE on logits: log(1 + e^z) - y z
    return np.logaddexp(0.0, z) - y * z


def loss_mean(model: Model, data: Dataset) -> float:
    """Mean per-sample loss: squared error (linear) or BCE (others)."""
    if data.n < 1:
        raise ValueError("empty dataset")
    return float(np.mean(per_sample_loss(model, data.features, data.labels)))


def _output_residual(model, z, y):
    """dL/dz per sample."""
    if model.kind == "linear":
        return 2.0 * (z - y)
    return sigmoid(z) - y


def grad_params(model: Model, data: Dataset) -> np.ndarray:
    """Gradient of ``loss_mean`` with respect to the flat parameter vector."""
    X = _as_rows(model, data.features)
    y = data.labels
    n = X.shape[0]
    z, H = _logits(model, X)
    e = _output_residual(model, z, y) / n
    if model.kind == "mlp":
        W1, b1, w2, b2 = _unpack_mlp(model)
        back = (e[:, None] * w2[None, :]) * (1.0 - H**2)  # n x H
        g = np.concatenate([
            (back.T @ X).reshape(-1),
            back.sum(axis=0),
            H.T @ e,
            [e.sum()],
        ])
    else:
        g = np.concatenate([X.T @ e, [e.sum()]])
    _check_finite(g, "parameter gradient")
    return g


def input_gradients(model: Model, X, y) -> np.ndarray:
    """Row-wise gradient of each sample's own loss w.r.t. its features."""
    X = _as_rows(model, X)
    y = np.asarray(y, dtype=float).reshape(-1)
    z, H = _logits(model, X)
    e = _output_residual(model, z, y)
    if model.kind == "mlp":
        W1, b1, w2, b2 = _unpack_mlp(model)
        a = w2[None, :] * (1.0 - H**2)
        G = e[:, None] * (a @ W1)
    else:
        G = e[:, None] * model.params[:-1][None, :]
    _check_finite(G, "input gradient")
    return G


def grad_inputs(model: Model, x, y) -> np.ndarray:
    """Gradient of the single-sample loss ``L(f(x), y)`` w.r.t. ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError("grad_inputs takes a single sample vector")
    return input_gradients(model, x, [y])[0]


def grad_params_input_vjp(model: Model, data: Dataset, v) -> np.ndarray:
    """``d/dX [v . grad_params(model, data)]`` as an n x d matrix.

    This is the transpose Jacobian of the parameter gradient with respect to
    the inputs applied to ``v``; gradient-matching attacks need it to descend
    on ``||grad_params(d) - target||^2``.
    """
    X = _as_rows(model, data.features)
    y = data.labels
    n = X.shape[0]
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != model.params.size:
        raise DimensionError("v must have one entry per parameter")
    z, H = _logits(model, X)
    e = _output_residual(model, z, y)
    if model.kind == "linear" or model.kind == "logistic":
        w = model.params[:-1]
        vw, vb = v[:-1], v[-1]
        s = X @ vw + vb
        de_dz = 2.0 * np.ones_like(z) if model.kind == "linear" else sigmoid(z) * (1 - sigmoid(z))
        out = (de_dz * s)[:, None] * w[None, :] + e[:, None] * vw[None, :]
        return out / n
    d, h = model.input_dim, model.hidden
    W1, b1, w2, b2 = _unpack_mlp(model)
    V1 = v[: h * d].reshape(h, d)
    vb1 = v[h * d: h * d + h]
    vw2 = v[h * d + h: h * d + 2 * h]
    vb2 = v[-1]
    p = sigmoid(z)
    dh = 1.0 - H**2                      # n x H
    a = w2[None, :] * dh                 # n x H, dz/d(pre-activation)
    u = X @ V1.T + vb1                   # n x H
    s = H @ vw2 + vb2 + np.sum(a * u, axis=1)
    dz_dx = a @ W1                       # n x d
    ds_dx = (vw2[None, :] * dh + u * w2[None, :] * (-2.0 * H) * dh) @ W1 + a @ V1
    out = (p * (1 - p) * s)[:, None] * dz_dx + e[:, None] * ds_dx
    return out / n


def finite_diff_grad(fn: Callable[[np.ndarray], float], point, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(point, dtype=float)
    flat = x.reshape(-1)
    grad = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(fn(x))
        flat[i] = orig - h
        fm = float(fn(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"function not finite near coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def gd_step(params, grad, lr: float) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape:
        raise DimensionError(f"params {params.shape} vs grad {grad.shape}")
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    return params - lr * grad


def project_outside_ball(delta, eps1: float, fallback_direction) -> np.ndarray:
    """Push ``delta`` out to norm ``eps1`` if it lies strictly inside the ball.

    A zero vector has no direction, so ``fallback_direction`` (unit norm) is
    used instead.
    """
    if eps1 < 0:
        raise ValueError("eps1 must be non-negative")
    delta = np.asarray(delta, dtype=float)
    norm = float(np.linalg.norm(delta))
    if norm >= eps1:
        return delta.copy()
    if norm == 0.0:
        return eps1 * np.asarray(fallback_direction, dtype=float)
    return delta * (eps1 / norm)


def project_inside_ball(delta, eps: float) -> np.ndarray:
    if eps < 0:
        raise ValueError("eps must be non-negative")
    delta = np.asarray(delta, dtype=float)
    norm = float(np.linalg.norm(delta))
    if norm <= eps:
        return delta.copy()
    return delta * (eps / norm)
