"""Small differentiable hypotheses with hand-written gradients.

Labels are ``+1``/``-1`` for the logistic kinds and real numbers for the
squared-loss kind. All batched methods take ``x`` of shape ``(n, d)``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class ModelKind(str, enum.Enum):
    LINEAR_LOGISTIC = "linear_logistic"
    LINEAR_SQUARED = "linear_squared"
    MLP_LOGISTIC = "mlp_logistic"


def param_count(kind: ModelKind, dim: int, hidden_width: int | None = None) -> int:
    kind = ModelKind(kind)
    if kind is ModelKind.LINEAR_LOGISTIC:
        return dim + 1
    if kind is ModelKind.LINEAR_SQUARED:
        return dim
    if not hidden_width:
        raise ValueError("mlp_logistic needs a positive hidden_width")
    return hidden_width * dim + 2 * hidden_width + 1


@dataclass
class Model:
    """Flat-parameter model.

    Layouts of ``params``:

    * ``linear_logistic``: ``[w (d), b]``, logit ``w.x + b``
    * ``linear_squared``: ``theta (d)``, prediction ``theta.x``
    * ``mlp_logistic``: ``[W1 (h*d, row-major), b1 (h), w2 (h), b2]``,
      logit ``w2.tanh(W1 x + b1) + b2``
    """

    kind: ModelKind
    dim: int
    params: np.ndarray
    hidden_width: int | None = None
    _n: int = field(init=False, repr=False)

    def __post_init__(self):
        self.kind = ModelKind(self.kind)
        self.params = np.array(self.params, dtype=float).ravel()
        self._n = param_count(self.kind, self.dim, self.hidden_width)
        if self.params.size != self._n:
            raise ValueError(f"{self.kind.value} with d={self.dim} needs {self._n} params, "
                             f"got {self.params.size}")

    # construction -----------------------------------------------------------

    @classmethod
    def init(cls, kind, dim: int, hidden_width: int | None = None,
             rng: np.random.Generator | None = None) -> "Model":
        """Zero parameters for linear kinds without ``rng``; otherwise every layer
        is drawn from ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``. The MLP needs ``rng``.
        """
        kind = ModelKind(kind)
        n = param_count(kind, dim, hidden_width)
        if kind is not ModelKind.MLP_LOGISTIC:
            if rng is None:
                return cls(kind, dim, np.zeros(n))
            return cls(kind, dim, rng.uniform(-1, 1, n) / math.sqrt(dim))
        if rng is None:
            raise ValueError("mlp initialisation needs an rng")
        h = hidden_width
        w1 = rng.uniform(-1, 1, h * dim) / math.sqrt(dim)
        b1 = rng.uniform(-1, 1, h) / math.sqrt(dim)
        w2 = rng.uniform(-1, 1, h) / math.sqrt(h)
        b2 = rng.uniform(-1, 1, 1) / math.sqrt(h)
        return cls(kind, dim, np.concatenate([w1, b1, w2, b2]), h)

    def copy(self) -> "Model":
        return Model(self.kind, self.dim, self.params.copy(), self.hidden_width)

    def with_params(self, params) -> "Model":
        return Model(self.kind, self.dim, params, self.hidden_width)

    @property
    def weights(self) -> np.ndarray:
        """Input-layer direction for linear kinds (without the bias)."""
        if self.kind is ModelKind.MLP_LOGISTIC:
            raise AttributeError("an MLP has no single weight direction")
        return self.params[: self.dim]

    def _split(self):
        h, d = self.hidden_width, self.dim
        p = self.params
        W1 = p[: h * d].reshape(h, d)
        b1 = p[h * d: h * d + h]
        w2 = p[h * d + h: h * d + 2 * h]
        return W1, b1, w2, p[-1]

    # forward ----------------------------------------------------------------

    def output(self, x) -> np.ndarray:
        """Logit (classification kinds) or prediction (regression kind)."""
        x = np.asarray(x, dtype=float)
        if self.kind is ModelKind.LINEAR_SQUARED:
            return x @ self.params
        if self.kind is ModelKind.LINEAR_LOGISTIC:
            return x @ self.params[:-1] + self.params[-1]
        W1, b1, w2, b2 = self._split()
        return np.tanh(x @ W1.T + b1) @ w2 + b2

    def predict(self, x) -> np.ndarray:
        """Labels in {+1, -1}; a zero logit maps to +1."""
        return np.where(self.output(x) >= 0, 1.0, -1.0)

    def _check_labels(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind is not ModelKind.LINEAR_SQUARED and not np.all(np.abs(y) == 1):
            raise ValueError("logistic models need labels in {+1, -1}")
        return y

    def losses(self, x, y) -> np.ndarray:
        y = self._check_labels(y)
        out = self.output(x)
        if self.kind is ModelKind.LINEAR_SQUARED:
            return (out - y) ** 2
        return np.logaddexp(0.0, -y * out)

    def _dloss_dout(self, out, y):
        if self.kind is ModelKind.LINEAR_SQUARED:
            return 2.0 * (out - y)
        return -y * expit(-y * out)

    # gradients --------------------------------------------------------------

    def grads(self, x, y) -> np.ndarray:
        """Per-example parameter gradients, shape ``(n, n_params)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_1d(self._check_labels(y))
        return self._backward(x, y, None)

    def grad_weighted(self, x, y, coef) -> np.ndarray:
        """``sum_i coef_i * grad loss(x_i, y_i)`` without forming the per-example matrix."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_1d(self._check_labels(y))
        return self._backward(x, y, np.asarray(coef, dtype=float))

    def _backward(self, x, y, coef):
        if self.kind is ModelKind.MLP_LOGISTIC:
            W1, b1, w2, b2 = self._split()
            hidden = np.tanh(x @ W1.T + b1)
            g_out = self._dloss_dout(hidden @ w2 + b2, y)
            if coef is not None:
                g_out = g_out * coef
            g_pre = g_out[:, None] * (1.0 - hidden ** 2) * w2
            if coef is None:
                gW1 = (g_pre[:, :, None] * x[:, None, :]).reshape(x.shape[0], -1)
                return np.hstack([gW1, g_pre, g_out[:, None] * hidden, g_out[:, None]])
            return np.concatenate([(g_pre.T @ x).ravel(), g_pre.sum(0),
                                   hidden.T @ g_out, [g_out.sum()]])

        g_out = self._dloss_dout(self.output(x), y)
        if coef is not None:
            g_out = g_out * coef
            g = x.T @ g_out
            return g if self.kind is ModelKind.LINEAR_SQUARED else np.append(g, g_out.sum())
        g = g_out[:, None] * x
        return g if self.kind is ModelKind.LINEAR_SQUARED else np.hstack([g, g_out[:, None]])

    def input_grads(self, x, y) -> np.ndarray:
        """Gradient of the loss with respect to the input, shape ``(n, d)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_1d(self._check_labels(y))
        if self.kind is ModelKind.MLP_LOGISTIC:
            W1, b1, w2, b2 = self._split()
            hidden = np.tanh(x @ W1.T + b1)
            g_out = self._dloss_dout(hidden @ w2 + b2, y)
            return (g_out[:, None] * (1.0 - hidden ** 2) * w2) @ W1
        g_out = self._dloss_dout(self.output(x), y)
        return g_out[:, None] * self.weights

    # single-point conveniences ---------------------------------------------

    def loss(self, x, y) -> float:
        return float(self.losses(np.atleast_2d(x), np.atleast_1d(y))[0])

    def loss_grad(self, x, y) -> np.ndarray:
        return self.grads(np.atleast_2d(x), np.atleast_1d(y))[0]

    def predict_label(self, x) -> int:
        return int(self.predict(np.atleast_2d(x))[0])

    # checkpoint -------------------------------------------------------------

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "d": self.dim}
        if self.hidden_width is not None:
            out["hidden_width"] = self.hidden_width
        out["params"] = [float(v) for v in self.params]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Model":
        return cls(ModelKind(data["kind"]), int(data["d"]), np.array(data["params"], dtype=float),
                   data.get("hidden_width"))

    @classmethod
    def from_json(cls, text: str) -> "Model":
        return cls.from_dict(json.loads(text))


def loss(model: Model, x, y) -> float:
    return model.loss(x, y)


def loss_grad(model: Model, x, y) -> np.ndarray:
    return model.loss_grad(x, y)


def predict_label(model: Model, x) -> int:
    return model.predict_label(x)
