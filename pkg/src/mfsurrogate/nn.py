"""Dense feed-forward networks with hand-written reverse-mode gradients.

Parameter layout
----------------
All parameters live in one flat float vector. Layers are stored in order;
layer ``l`` maps ``w_l -> w_{l+1}`` widths and contributes its weight matrix
``W_l`` of shape ``(w_l, w_{l+1})`` in row-major order, followed by its bias
``b_l`` of length ``w_{l+1}``. :func:`unflatten` returns views into the flat
vector, so in-place updates of the flat vector are seen by the views.

Hidden layers apply the activation; the output layer is affine.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import ContractError, TrainingDivergedError

ACTIVATIONS = ("tanh", "relu")
LOSSES = ("mse", "gaussian-nll")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a scalar-output MLP.

    Attributes
    ----------
    layer_widths : tuple of int
        ``(d, hidden_1, ..., hidden_k, 1)``.
    activation : {"tanh", "relu"}
    seed : int
        Seed for initialization and mini-batch shuffling.
    """

    layer_widths: Sequence[int]
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 3:
            raise ContractError("an MLP needs an input width, at least one hidden layer and an output")
        if widths[-1] != 1:
            raise ContractError("output width must be 1")
        if min(widths) < 1:
            raise ContractError("layer widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def d(self):
        return self.layer_widths[0]

    @property
    def shapes(self):
        w = self.layer_widths
        return [(w[i], w[i + 1]) for i in range(len(w) - 1)]

    @property
    def n_params(self):
        return sum(a * b + b for a, b in self.shapes)

    @classmethod
    def build(cls, d, hidden=(50, 50), activation="tanh", seed=0):
        return cls((d, *hidden, 1), activation, seed)


def unflatten(params, spec):
    """Split a flat parameter vector into ``[(W_0, b_0), (W_1, b_1), ...]`` views."""
    params = np.asarray(params)
    if params.shape != (spec.n_params,):
        raise ContractError(f"expected {spec.n_params} parameters, got shape {params.shape}")
    layers, pos = [], 0
    for a, b in spec.shapes:
        W = params[pos:pos + a * b].reshape(a, b)
        pos += a * b
        layers.append((W, params[pos:pos + b]))
        pos += b
    return layers


def flatten(layers):
    return np.concatenate([np.concatenate([W.reshape(-1), b]) for W, b in layers])


def init_params(spec, rng=None):
    """Glorot-uniform weights, zero biases."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    chunks = []
    for a, b in spec.shapes:
        limit = np.sqrt(6.0 / (a + b))
        chunks.append(rng.uniform(-limit, limit, size=a * b))
        chunks.append(np.zeros(b))
    return np.concatenate(chunks)


def _as_input(X, spec):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if spec.d == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != spec.d:
        raise ContractError(f"input has shape {X.shape}, network expects {spec.d} columns")
    return X


def _forward(layers, activation, X):
    """Return the output and the list of layer inputs needed by the backward pass."""
    acts = [X]
    h = X
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        if i < last:
            h = np.tanh(z) if activation == "tanh" else np.maximum(z, 0.0)
            acts.append(h)
        else:
            h = z
    return h[:, 0], acts


def mlp_forward(params, spec, X):
    """Network output at the rows of ``X`` as an ``(m,)`` vector."""
    out, _ = _forward(unflatten(params, spec), spec.activation, _as_input(X, spec))
    return out


def mlp_backward(params, spec, X, dout):
    """Gradient of ``sum(dout * f(X))`` with respect to the flat parameters.

    ``dout`` may also be a callable mapping the outputs to the output
    sensitivities, which lets a loss use the same forward pass. Returns the
    network output alongside the gradient.
    """
    layers = unflatten(params, spec)
    X = _as_input(X, spec)
    out, acts = _forward(layers, spec.activation, X)
    if callable(dout):
        dout = dout(out)
    grad = np.empty(spec.n_params)
    grads = unflatten(grad, spec)
    delta = np.asarray(dout, dtype=float).reshape(-1, 1)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        gW, gb = grads[i]
        gW[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i:
            delta = delta @ W.T
            h = acts[i]
            delta *= (1.0 - h * h) if spec.activation == "tanh" else (h > 0)
    return out, grad


def loss_and_dout(pred, y, loss="mse", sigma=1.0):
    """Loss value and its derivative with respect to the network outputs.

    ``mse`` is the mean squared residual. ``gaussian-nll`` is the summed
    negative log density ``sum(0.5 r^2 / sigma^2 + 0.5 log(2 pi sigma^2))``.
    """
    r = pred - y
    if loss == "mse":
        return float(np.mean(r * r)), 2.0 * r / r.shape[0]
    if loss == "gaussian-nll":
        if not sigma > 0:
            raise ContractError("sigma must be positive for the Gaussian likelihood")
        s2 = sigma * sigma
        value = 0.5 * float(np.sum(r * r)) / s2 + 0.5 * r.shape[0] * np.log(2.0 * np.pi * s2)
        return float(value), r / s2
    raise ContractError(f"loss must be one of {LOSSES}, got {loss!r}")


def mlp_grad(params, spec, X, y, loss="mse", sigma=1.0):
    """Loss and its gradient with respect to the flat parameter vector."""
    y = np.asarray(y, dtype=float).reshape(-1)
    box = {}

    def sensitivities(pred):
        if pred.shape != y.shape:
            raise ContractError(f"{pred.shape[0]} inputs but {y.shape[0]} targets")
        box["value"], dout = loss_and_dout(pred, y, loss, sigma)
        return dout

    _, grad = mlp_backward(params, spec, X, sensitivities)
    return box["value"], grad


class Adam:
    """Adam optimizer state for a flat parameter vector."""

    def __init__(self, n, lr=1e-3, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grad):
        """Update ``params`` in place."""
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return params


@dataclass(frozen=True)
class DnnModel:
    """A trained deterministic network (the DNN low-fidelity surrogate).

    Inputs are shifted by ``input_mean`` and divided by ``input_scale``
    before entering the network; the raw network output is mapped back as
    ``output_mean + output_scale * f``.
    """

    spec: MlpSpec
    params: np.ndarray
    input_mean: np.ndarray = None
    input_scale: np.ndarray = None
    output_mean: float = 0.0
    output_scale: float = 1.0
    loss_history: np.ndarray = field(default_factory=lambda: np.empty(0), compare=False)

    def __post_init__(self):
        d = self.spec.d
        mean = np.zeros(d) if self.input_mean is None else np.asarray(self.input_mean, float)
        scale = np.ones(d) if self.input_scale is None else np.asarray(self.input_scale, float)
        object.__setattr__(self, "input_mean", mean.reshape(d))
        object.__setattr__(self, "input_scale", scale.reshape(d))

    def predict(self, X):
        X = _as_input(X, self.spec)
        raw = mlp_forward(self.params, self.spec, (X - self.input_mean) / self.input_scale)
        return self.output_mean + self.output_scale * raw


def dnn_train(data, spec, lr=1e-3, epochs=10000, batch_size: Optional[int] = None, init=None,
              standardize=True):
    """Train an MLP on ``data`` by Adam on the mean squared error.

    Parameters
    ----------
    data : LabeledDataset
    spec : MlpSpec
        ``spec.seed`` drives initialization and mini-batch shuffling.
    lr : float
    epochs : int
        Passes over the data; with full-batch training one Adam step each.
    batch_size : int, optional
        ``None`` (default) trains full-batch.
    init : ndarray, optional
        Starting parameters instead of the seeded Glorot draw.
    standardize : bool
        Z-score each input column and the targets with their training mean
        and population std; predictions are mapped back. Glorot-scale
        first-layer weights only resolve slow variation over a unit-width
        input range, and a large target offset saturates the tanh units
        before the shape is learned.

    Notes
    -----
    ``loss_history`` holds the per-epoch MSE in the network's own
    (standardized) target units.

    Raises
    ------
    TrainingDivergedError
        When the loss becomes non-finite.
    """
    if data.n == 0:
        raise ContractError("cannot train on an empty dataset")
    if data.d != spec.d:
        raise ContractError(f"data has d={data.d}, network expects {spec.d}")
    if epochs < 0:
        raise ContractError("epochs must be non-negative")
    rng = np.random.default_rng(spec.seed)
    params = init_params(spec, rng) if init is None else np.array(init, dtype=float)
    opt = Adam(spec.n_params, lr)
    mean, scale, y_mean, y_scale = np.zeros(data.d), np.ones(data.d), 0.0, 1.0
    if standardize:
        mean = data.X.mean(axis=0)
        scale = data.X.std(axis=0)
        scale[scale == 0] = 1.0
        y_mean = float(data.y.mean())
        y_scale = float(data.y.std()) or 1.0
    X, y = (data.X - mean) / scale, (data.y - y_mean) / y_scale
    batch = data.n if batch_size is None else int(batch_size)
    history = np.empty(epochs)
    for epoch in range(epochs):
        order = rng.permutation(data.n) if batch < data.n else None
        total = 0.0
        for start in range(0, data.n, batch):
            idx = slice(None) if order is None else order[start:start + batch]
            value, grad = mlp_grad(params, spec, X[idx], y[idx], "mse")
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch)
            opt.step(params, grad)
            total += value * (data.n if order is None else len(idx))
        history[epoch] = total / data.n
    return DnnModel(spec, params, mean, scale, y_mean, y_scale, history)


__all__ = ["MlpSpec", "DnnModel", "Adam", "init_params", "flatten", "unflatten", "mlp_forward",
           "mlp_backward", "mlp_grad", "loss_and_dout", "dnn_train"]
