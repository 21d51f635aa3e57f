"""Central-difference gradient oracle.

Losses are re-evaluated with a scalar-loop forward pass in multiple-precision
floats (gmpy2/MPFR). In float64, a loss near 1 cannot resolve the change
produced by a 1e-6 step on gradients below ~1e-10, which saturated tanh
layers routinely produce; extended precision removes that noise floor
without changing the oracle itself.
"""

from __future__ import annotations

import gmpy2
import numpy as np

from .network import (
    CLAMP_EPS,
    ActivationKind,
    ExpDnnParams,
    LossKind,
    NetworkConfig,
    compute_loss,
    forward,
)

DEFAULT_PRECISION = 113


def _activate(kind: ActivationKind, z: list) -> list:
    if kind is ActivationKind.LINEAR:
        return z
    if kind is ActivationKind.TANH:
        return [gmpy2.tanh(v) for v in z]
    if kind is ActivationKind.SIGMOID:
        return [1 / (1 + gmpy2.exp(-v)) for v in z]
    top = max(z)
    e = [gmpy2.exp(v - top) for v in z]
    s = sum(e)
    return [v / s for v in e]


def _clamp(y):
    lo = gmpy2.mpfr(CLAMP_EPS)
    hi = 1 - lo
    return lo if y < lo else hi if y > hi else y


def mp_loss(config: NetworkConfig, arrays: list, x: np.ndarray, t: np.ndarray):
    """Batch-mean loss from nested lists of mpfr values (``ExpDnnParams.arrays()`` order)."""
    w = arrays[0]
    layers = [(arrays[i], arrays[i + 1]) for i in range(1, len(arrays), 2)]
    kinds = list(config.hidden_activations) + [config.output_activation]
    n_samples, n_out = t.shape
    total = gmpy2.mpfr(0)
    for xs, ts in zip(x.tolist(), t.tolist()):
        a = [wi * xi for wi, xi in zip(w, xs)]
        for (mat, bias), kind in zip(layers, kinds):
            a = _activate(kind, [sum(r * v for r, v in zip(row, a)) + b for row, b in zip(mat, bias)])
        if config.loss is LossKind.MSE:
            total += sum((y - tv) ** 2 for y, tv in zip(a, ts))
        elif config.loss is LossKind.BINARY_CROSS_ENTROPY:
            for y, tv in zip(a, ts):
                y = _clamp(y)
                total -= tv * gmpy2.log(y) + (1 - tv) * gmpy2.log(1 - y)
        else:
            total -= sum(tv * gmpy2.log(_clamp(y)) for y, tv in zip(a, ts) if tv != 0)
    if config.loss is LossKind.CATEGORICAL_CROSS_ENTROPY:
        return total / n_samples
    return total / (n_samples * n_out)


def finite_difference_gradient(
    params: ExpDnnParams,
    config: NetworkConfig,
    x: np.ndarray,
    t: np.ndarray,
    step: float = 1e-6,
    precision: int | None = DEFAULT_PRECISION,
) -> np.ndarray:
    """(L(theta + step) - L(theta - step)) / (2 step) for every parameter.

    ``precision`` is the MPFR mantissa width in bits; ``None`` evaluates in
    float64 with the vectorized forward pass instead.
    """
    t = np.asarray(t, dtype=np.float64)
    if precision is None:
        return _fd_float64(params, config, x, t, step)

    with gmpy2.context(gmpy2.get_context(), precision=precision):
        nested = [_to_mp(a) for a in params.arrays()]
        slots = []
        for k, a in enumerate(params.arrays()):
            for idx in np.ndindex(a.shape):
                slots.append((k, idx))
        h = gmpy2.mpfr(step)
        out = np.empty(len(slots))
        for i, (k, idx) in enumerate(slots):
            holder, j = _locate(nested[k], idx)
            orig = holder[j]
            holder[j] = orig + h
            plus = mp_loss(config, nested, x, t)
            holder[j] = orig - h
            minus = mp_loss(config, nested, x, t)
            holder[j] = orig
            out[i] = float((plus - minus) / (2 * h))
    return out


def _to_mp(a: np.ndarray):
    if a.ndim == 1:
        return [gmpy2.mpfr(float(v)) for v in a]
    return [[gmpy2.mpfr(float(v)) for v in row] for row in a]


def _locate(nested, idx):
    if len(idx) == 1:
        return nested, idx[0]
    return nested[idx[0]], idx[1]


def _fd_float64(params, config, x, t, step):
    theta = params.vector.copy()
    out = np.empty_like(theta)

    def loss_at(vec):
        p = ExpDnnParams.from_vector(config, vec)
        return compute_loss(config.loss, forward(p, config, x).output, t)

    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + step
        plus = loss_at(theta)
        theta[i] = orig - step
        minus = loss_at(theta)
        theta[i] = orig
        out[i] = (plus - minus) / (2.0 * step)
    return out
