"""ExpDNN parameterization, forward pass, losses and exact gradients.

Layout of the network for ``n`` inputs::

    x_i --(w_i, no bias)--> v_i        one explainable unit per input
    merge = (v_1, ..., v_n)            parameter-free concatenation
    a1 = W1 @ merge + b1               linear first hidden layer
    a_k = act_k(W_k @ a_{k-1} + b_k)   hidden layers 2..l
    y = act_out(W_o @ a_l + b_o)

All batched arrays are ``(samples, units)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngState, ShapeError, rng_uniform_array

CLAMP_EPS = 1e-7


class ActivationKind(str, enum.Enum):
    LINEAR = "linear"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"


class LossKind(str, enum.Enum):
    MSE = "mse"
    BINARY_CROSS_ENTROPY = "binary_cross_entropy"
    CATEGORICAL_CROSS_ENTROPY = "categorical_cross_entropy"


HEAD_FOR_LOSS = {
    LossKind.MSE: ActivationKind.LINEAR,
    LossKind.BINARY_CROSS_ENTROPY: ActivationKind.SIGMOID,
    LossKind.CATEGORICAL_CROSS_ENTROPY: ActivationKind.SOFTMAX,
}


class ConfigError(ValueError):
    """Raised for an inconsistent network description."""


@dataclass(frozen=True)
class NetworkConfig:
    n_inputs: int
    hidden_sizes: tuple[int, ...]
    hidden_activations: tuple[ActivationKind, ...]
    n_outputs: int
    output_activation: ActivationKind
    loss: LossKind

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(s) for s in self.hidden_sizes))
        object.__setattr__(
            self, "hidden_activations", tuple(ActivationKind(a) for a in self.hidden_activations)
        )
        object.__setattr__(self, "output_activation", ActivationKind(self.output_activation))
        object.__setattr__(self, "loss", LossKind(self.loss))

        if self.n_inputs < 1 or self.n_outputs < 1:
            raise ConfigError("n_inputs and n_outputs must be positive")
        if len(self.hidden_sizes) < 2:
            raise ConfigError(f"need at least two hidden layers, got {len(self.hidden_sizes)}")
        if len(self.hidden_activations) != len(self.hidden_sizes):
            raise ConfigError("hidden_activations and hidden_sizes differ in length")
        if any(s < 1 for s in self.hidden_sizes):
            raise ConfigError("hidden layer sizes must be positive")
        if self.hidden_activations[0] is not ActivationKind.LINEAR:
            raise ConfigError("the first hidden layer must be linear")
        if ActivationKind.SOFTMAX in self.hidden_activations:
            raise ConfigError("softmax is only allowed on the output layer")
        expected = HEAD_FOR_LOSS[self.loss]
        if self.output_activation is not expected:
            raise ConfigError(
                f"loss {self.loss.value} requires a {expected.value} output, "
                f"got {self.output_activation.value}"
            )

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        """Unit counts from the merge layer to the output: (n, n_1, ..., n_l, m)."""
        return (self.n_inputs, *self.hidden_sizes, self.n_outputs)

    def param_shapes(self) -> list[tuple[int, ...]]:
        """Shapes in canonical order: w, (W_k, b_k) for each hidden layer, W_o, b_o."""
        sizes = self.layer_sizes
        shapes: list[tuple[int, ...]] = [(self.n_inputs,)]
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            shapes += [(fan_out, fan_in), (fan_out,)]
        return shapes

    def to_dict(self) -> dict:
        return {
            "n_inputs": self.n_inputs,
            "hidden_sizes": list(self.hidden_sizes),
            "hidden_activations": [a.value for a in self.hidden_activations],
            "n_outputs": self.n_outputs,
            "output_activation": self.output_activation.value,
            "loss": self.loss.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        try:
            return cls(
                n_inputs=int(d["n_inputs"]),
                hidden_sizes=tuple(d["hidden_sizes"]),
                hidden_activations=tuple(d["hidden_activations"]),
                n_outputs=int(d["n_outputs"]),
                output_activation=d["output_activation"],
                loss=d["loss"],
            )
        except KeyError as exc:
            raise ConfigError(f"network config is missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad network config: {exc}") from None


@dataclass
class ExpDnnParams:
    """All trainable arrays of one network.

    The arrays are views into a single contiguous buffer (``self.vector``) in
    the order given by :meth:`NetworkConfig.param_shapes`, so optimizers can
    treat the whole model as one flat vector. The same class is used for
    gradients, which have identical shapes.
    """

    explainable_weights: np.ndarray
    hidden_weights: list[np.ndarray]
    hidden_biases: list[np.ndarray]
    output_weights: np.ndarray
    output_bias: np.ndarray
    vector: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def from_vector(cls, config: NetworkConfig, vector: np.ndarray) -> "ExpDnnParams":
        shapes = config.param_shapes()
        total = sum(int(np.prod(s)) for s in shapes)
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (total,):
            raise ShapeError(f"parameter vector has shape {vector.shape}, expected ({total},)")
        arrays = []
        offset = 0
        for s in shapes:
            size = int(np.prod(s))
            arrays.append(vector[offset : offset + size].reshape(s))
            offset += size
        return cls(
            explainable_weights=arrays[0],
            hidden_weights=arrays[1:-2:2],
            hidden_biases=arrays[2:-2:2],
            output_weights=arrays[-2],
            output_bias=arrays[-1],
            vector=vector,
        )

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "ExpDnnParams":
        total = sum(int(np.prod(s)) for s in config.param_shapes())
        return cls.from_vector(config, np.zeros(total))

    def arrays(self) -> list[np.ndarray]:
        out = [self.explainable_weights]
        for w, b in zip(self.hidden_weights, self.hidden_biases):
            out += [w, b]
        return out + [self.output_weights, self.output_bias]

    def names(self) -> list[str]:
        out = ["explainable_weights"]
        for k in range(len(self.hidden_weights)):
            out += [f"hidden_weights[{k}]", f"hidden_biases[{k}]"]
        return out + ["output_weights", "output_bias"]

    def copy(self, config: NetworkConfig) -> "ExpDnnParams":
        return ExpDnnParams.from_vector(config, self.vector.copy())

    def check_config(self, config: NetworkConfig) -> None:
        got = [a.shape for a in self.arrays()]
        if got != config.param_shapes():
            raise ShapeError(f"parameter shapes {got} do not match config {config.param_shapes()}")

    def to_dict(self) -> dict:
        return {
            "explainable_weights": self.explainable_weights.tolist(),
            "hidden_weights": [w.tolist() for w in self.hidden_weights],
            "hidden_biases": [b.tolist() for b in self.hidden_biases],
            "output_weights": self.output_weights.tolist(),
            "output_bias": self.output_bias.tolist(),
        }

    @classmethod
    def from_dict(cls, config: NetworkConfig, d: dict) -> "ExpDnnParams":
        parts = [np.asarray(d["explainable_weights"], dtype=np.float64)]
        for w, b in zip(d["hidden_weights"], d["hidden_biases"], strict=True):
            parts += [np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)]
        parts += [
            np.asarray(d["output_weights"], dtype=np.float64),
            np.asarray(d["output_bias"], dtype=np.float64),
        ]
        got = [p.shape for p in parts]
        if got != config.param_shapes():
            raise ShapeError(f"stored parameter shapes {got} do not match the network config")
        return cls.from_vector(config, np.concatenate([p.ravel() for p in parts]))


Gradients = ExpDnnParams


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(config: NetworkConfig, rng: RngState) -> tuple[ExpDnnParams, RngState]:
    """Initial parameters.

    Explainable weights, first-hidden weights and first-hidden biases start at
    exactly 1.0. Deeper weight matrices are Glorot-uniform, deeper biases 0.
    """
    params = ExpDnnParams.zeros(config)
    params.explainable_weights[:] = 1.0
    params.hidden_weights[0][:] = 1.0
    params.hidden_biases[0][:] = 1.0
    for w in params.hidden_weights[1:] + [params.output_weights]:
        fan_out, fan_in = w.shape
        bound = glorot_bound(fan_in, fan_out)
        w[:], rng = rng_uniform_array(rng, -bound, bound, w.shape)
    return params, rng


def apply_activation(kind: ActivationKind, z: np.ndarray) -> np.ndarray:
    kind = ActivationKind(kind)
    if kind is ActivationKind.LINEAR:
        return z
    if kind is ActivationKind.TANH:
        return np.tanh(z)
    if kind is ActivationKind.SIGMOID:
        return 1.0 / (1.0 + np.exp(-z))
    shifted = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return shifted / np.sum(shifted, axis=-1, keepdims=True)


def activation_derivative(kind: ActivationKind, activated: np.ndarray) -> np.ndarray:
    """Derivative of the activation written in terms of its output."""
    kind = ActivationKind(kind)
    if kind is ActivationKind.LINEAR:
        return np.ones_like(activated)
    if kind is ActivationKind.TANH:
        return 1.0 - activated * activated
    if kind is ActivationKind.SIGMOID:
        return activated * (1.0 - activated)
    raise ValueError(
        "softmax has no elementwise derivative; backward() fuses it with categorical cross-entropy"
    )


@dataclass
class ForwardTrace:
    input: np.ndarray
    explainable_out: np.ndarray
    hidden_pre: list[np.ndarray]
    hidden_out: list[np.ndarray]
    output: np.ndarray


def forward(params: ExpDnnParams, config: NetworkConfig, x: np.ndarray) -> ForwardTrace:
    """Run the network on one sample (1-D ``x``) or a batch (2-D ``x``).

    The trace is always batched; a single sample yields one-row arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != config.n_inputs:
        raise ShapeError(f"input has shape {x.shape}, expected (*, {config.n_inputs})")

    v = x * params.explainable_weights
    pre, out = [], []
    a = v
    for w, b, kind in zip(params.hidden_weights, params.hidden_biases, config.hidden_activations):
        z = a @ w.T + b
        a = apply_activation(kind, z)
        pre.append(z)
        out.append(a)
    y = apply_activation(config.output_activation, a @ params.output_weights.T + params.output_bias)
    return ForwardTrace(input=x, explainable_out=v, hidden_pre=pre, hidden_out=out, output=y)


def predict(params: ExpDnnParams, config: NetworkConfig, x: np.ndarray) -> np.ndarray:
    return forward(params, config, x).output


def compute_loss(kind: LossKind, predictions: np.ndarray, targets: np.ndarray) -> float:
    kind = LossKind(kind)
    y = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if y.shape != t.shape:
        raise ShapeError(f"predictions {y.shape} and targets {t.shape} differ in shape")
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite prediction passed to compute_loss")
    if kind is LossKind.MSE:
        d = y - t
        return float(np.mean(d * d))
    y = np.clip(y, CLAMP_EPS, 1.0 - CLAMP_EPS)
    if kind is LossKind.BINARY_CROSS_ENTROPY:
        return float(np.mean(-(t * np.log(y) + (1.0 - t) * np.log(1.0 - y))))
    y2 = y if y.ndim == 2 else y[None, :]
    t2 = t if t.ndim == 2 else t[None, :]
    return float(np.mean(-np.sum(t2 * np.log(y2), axis=1)))


def output_delta(config: NetworkConfig, y: np.ndarray, t: np.ndarray) -> np.ndarray:
    """dLoss/d(output pre-activation) with the head and loss fused."""
    n_samples, n_out = y.shape
    if config.loss is LossKind.MSE:
        return 2.0 * (y - t) / (n_samples * n_out)
    if config.loss is LossKind.BINARY_CROSS_ENTROPY:
        return (y - t) / (n_samples * n_out)
    return (y - t) / n_samples


def backward(
    params: ExpDnnParams,
    config: NetworkConfig,
    trace: ForwardTrace,
    targets: np.ndarray,
    out: ExpDnnParams | None = None,
) -> ExpDnnParams:
    """Exact gradient of the batch-mean loss with respect to every parameter.

    ``trace`` is the batched trace returned by :func:`forward`. If ``out`` is
    given its buffer is overwritten and returned.
    """
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim == 1:
        t = t[None, :]
    if t.shape != trace.output.shape:
        raise ShapeError(f"targets {t.shape} do not match outputs {trace.output.shape}")
    if len(trace.hidden_out) != len(params.hidden_weights):
        raise ShapeError("trace depth does not match parameter depth")
    grads = ExpDnnParams.zeros(config) if out is None else out

    delta = output_delta(config, trace.output, t)
    a_last = trace.hidden_out[-1]
    grads.output_weights[:] = delta.T @ a_last
    grads.output_bias[:] = delta.sum(axis=0)
    upstream = delta @ params.output_weights

    for k in range(len(params.hidden_weights) - 1, -1, -1):
        kind = config.hidden_activations[k]
        dz = upstream if kind is ActivationKind.LINEAR else (
            upstream * activation_derivative(kind, trace.hidden_out[k])
        )
        below = trace.hidden_out[k - 1] if k > 0 else trace.explainable_out
        grads.hidden_weights[k][:] = dz.T @ below
        grads.hidden_biases[k][:] = dz.sum(axis=0)
        upstream = dz @ params.hidden_weights[k]

    grads.explainable_weights[:] = np.sum(upstream * trace.input, axis=0)
    return grads


def loss_and_gradients(
    params: ExpDnnParams, config: NetworkConfig, x: np.ndarray, targets: np.ndarray
) -> tuple[float, ExpDnnParams]:
    trace = forward(params, config, x)
    return compute_loss(config.loss, trace.output, targets), backward(params, config, trace, targets)
