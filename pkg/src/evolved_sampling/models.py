"""Small differentiable models with per-sample losses and hand-written gradients.

Three architectures share one flat float64 parameter vector layout:

* ``linear``   f(x) = W x + c, per-sample loss 0.5 * mean_j (f_j(x) - y_j)^2
* ``logistic`` logits = W x + c, softmax cross-entropy
* ``mlp``      logits = W2 relu(W1 x + c1) + c2, softmax cross-entropy

Weights are stored row-major ``(out, in)`` followed by the bias, layer by layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from evolved_sampling.errors import NumericError

KINDS = ("linear", "logistic", "mlp")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    d: int
    classes: int = 1
    hidden: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r} (expected one of {KINDS})")
        if self.d < 1 or self.classes < 1:
            raise ValueError("input dimension and output count must be positive")
        if self.kind == "mlp" and self.hidden < 1:
            raise ValueError("mlp needs hidden >= 1")
        if self.kind != "mlp" and self.hidden != 0:
            raise ValueError(f"{self.kind} model takes no hidden layer")
        if self.kind in ("logistic", "mlp") and self.classes < 2:
            raise ValueError("classifiers need at least two classes")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        if self.kind == "mlp":
            return [(self.hidden, self.d), (self.classes, self.hidden)]
        return [(self.classes, self.d)]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes)

    @property
    def is_classifier(self) -> bool:
        return self.kind != "linear"


def unpack(spec: ModelSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``[(W, c), ...]`` into the flat parameter vector."""
    params = np.asarray(params)
    if params.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got shape {params.shape}")
    layers = []
    pos = 0
    for out, inp in spec.layer_shapes:
        W = params[pos : pos + out * inp].reshape(out, inp)
        pos += out * inp
        c = params[pos : pos + out]
        pos += out
        layers.append((W, c))
    return layers


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Zeros for the convex models; uniform(+-1/sqrt(fan_in)) for the MLP."""
    params = np.zeros(spec.n_params)
    if spec.kind == "mlp":
        pos = 0
        for out, inp in spec.layer_shapes:
            bound = 1.0 / np.sqrt(inp)
            size = out * inp + out
            params[pos : pos + size] = rng.uniform(-bound, bound, size)
            pos += size
    return params


def _check_finite(values: np.ndarray, ids, what: str) -> None:
    if not np.all(np.isfinite(values)):
        rows = ~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1)
        bad = int(np.asarray(ids)[np.argmax(rows)]) if ids is not None else int(np.argmax(rows))
        raise NumericError(f"non-finite {what} for sample {bad}")


def _outputs(spec, params, X, ids=None):
    """Forward pass; returns (outputs, hidden pre-activation or None)."""
    layers = unpack(spec, params)
    if spec.kind == "mlp":
        (W1, c1), (W2, c2) = layers
        pre = X @ W1.T + c1
        out = np.maximum(pre, 0.0) @ W2.T + c2
    else:
        (W, c), = layers
        pre = None
        out = X @ W.T + c
    _check_finite(out, ids, "activation")
    return out, pre


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _targets(spec: ModelSpec, y) -> np.ndarray:
    y = np.asarray(y)
    if spec.is_classifier:
        return y.astype(np.int64)
    y = y.astype(np.float64)
    return y.reshape(-1, spec.classes)


def forward_losses(spec: ModelSpec, params, X, y, ids=None) -> np.ndarray:
    """One non-negative loss per row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    out, _ = _outputs(spec, params, X, ids)
    y = _targets(spec, y)
    if spec.is_classifier:
        logp = _log_softmax(out)
        losses = -logp[np.arange(X.shape[0]), y]
        # log-softmax of the true class can round to a tiny positive value
        losses = np.maximum(losses, 0.0)
    else:
        losses = 0.5 * np.mean((out - y) ** 2, axis=1)
    _check_finite(losses, ids, "loss")
    return losses


def backward(spec: ModelSpec, params, X, y, ids=None) -> np.ndarray:
    """Gradient of the unweighted mean loss over the batch.

    Rows are reduced in ascending ``ids`` order when ids are given, so the
    result does not depend on how the batch was drawn.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if ids is not None:
        order = np.argsort(np.asarray(ids), kind="stable")
        X, y, ids = X[order], y[order], np.asarray(ids)[order]
    m = X.shape[0]
    if m == 0:
        raise ValueError("cannot differentiate an empty batch")
    out, pre = _outputs(spec, params, X, ids)
    t = _targets(spec, y)
    if spec.is_classifier:
        g_out = np.exp(_log_softmax(out))
        g_out[np.arange(m), t] -= 1.0
    else:
        g_out = (out - t) / spec.classes
    g_out /= m

    grads = []
    if spec.kind == "mlp":
        (W1, _), (W2, _) = unpack(spec, params)
        h = np.maximum(pre, 0.0)
        grads.append((g_out.T @ h, g_out.sum(axis=0)))
        g_pre = (g_out @ W2) * (pre > 0)
        grads.insert(0, (g_pre.T @ X, g_pre.sum(axis=0)))
    else:
        grads.append((g_out.T @ X, g_out.sum(axis=0)))
    flat = np.concatenate([np.concatenate([gW.ravel(), gc]) for gW, gc in grads])
    _check_finite(flat[None, :], None, "gradient")
    return flat


def predict(spec: ModelSpec, params, X) -> np.ndarray:
    """Arg-max class per row (first maximum wins); raw outputs for ``linear``."""
    out, _ = _outputs(spec, params, np.asarray(X, dtype=np.float64))
    if not spec.is_classifier:
        return out
    return np.argmax(out, axis=1)


def accuracy(spec: ModelSpec, params, X, y) -> float:
    if not spec.is_classifier:
        raise ValueError("accuracy is defined for classifiers only")
    y = np.asarray(y)
    if y.size == 0:
        return 0.0
    return float(np.mean(predict(spec, params, X) == y))
