"""Independent reference code for tests: plain-Python loops, no numpy kernels."""

import math

import numpy as np

from expdnn.network import ActivationKind, NetworkConfig


def scalar_forward(params, config: NetworkConfig, x):
    """One sample through the network with explicit loops over neurons."""
    n = config.n_inputs
    w = [float(v) for v in params.explainable_weights]
    a = [w[i] * float(x[i]) for i in range(n)]
    layers = list(zip(params.hidden_weights, params.hidden_biases, config.hidden_activations))
    layers.append((params.output_weights, params.output_bias, config.output_activation))
    for mat, bias, kind in layers:
        z = []
        for j in range(mat.shape[0]):
            s = 0.0
            for i in range(mat.shape[1]):
                s += float(mat[j, i]) * a[i]
            z.append(s + float(bias[j]))
        if kind is ActivationKind.LINEAR:
            a = z
        elif kind is ActivationKind.TANH:
            a = [math.tanh(v) for v in z]
        elif kind is ActivationKind.SIGMOID:
            a = [1.0 / (1.0 + math.exp(-v)) for v in z]
        else:
            top = max(z)
            e = [math.exp(v - top) for v in z]
            total = sum(e)
            a = [v / total for v in e]
    return a


def random_config(rng: np.random.Generator, max_layers=4, max_width=8, head=None):
    n_layers = int(rng.integers(2, max_layers + 1))
    sizes = tuple(int(s) for s in rng.integers(1, max_width + 1, size=n_layers))
    acts = ["linear"] + [str(rng.choice(["linear", "tanh", "sigmoid"])) for _ in sizes[1:]]
    head = head or str(rng.choice(["linear", "sigmoid", "softmax"]))
    loss = {"linear": "mse", "sigmoid": "binary_cross_entropy", "softmax": "categorical_cross_entropy"}[head]
    n_out = int(rng.integers(2, 4)) if head == "softmax" else int(rng.integers(1, 4))
    return NetworkConfig(
        n_inputs=int(rng.integers(1, max_width + 1)),
        hidden_sizes=sizes,
        hidden_activations=acts,
        n_outputs=n_out,
        output_activation=head,
        loss=loss,
    )


def random_params(config, rng: np.random.Generator, scale=1.0):
    from expdnn.network import ExpDnnParams

    p = ExpDnnParams.zeros(config)
    p.vector[:] = rng.normal(scale=scale, size=p.vector.size)
    return p


def random_targets(config, rng, n_samples):
    if config.loss.value == "categorical_cross_entropy":
        labels = rng.integers(0, config.n_outputs, size=n_samples)
        return np.eye(config.n_outputs)[labels]
    if config.loss.value == "binary_cross_entropy":
        return rng.integers(0, 2, size=(n_samples, config.n_outputs)).astype(float)
    return rng.normal(size=(n_samples, config.n_outputs))
