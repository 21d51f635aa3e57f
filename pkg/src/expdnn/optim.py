"""Nadam (Adam with Nesterov momentum) using the 0.96-power momentum schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import ExpDnnParams, NetworkConfig
from .numerics import ShapeError


@dataclass(frozen=True)
class NadamHyper:
    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    schedule_decay: float = 0.004

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.learning_rate <= 0.0 or self.epsilon <= 0.0:
            raise ValueError("learning_rate and epsilon must be positive")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "schedule_decay": self.schedule_decay,
        }


def momentum_schedule(t: int, hyper: NadamHyper) -> float:
    return _mu(t, hyper.beta1, hyper.schedule_decay)


def _mu(t: int, beta1: float, decay: float) -> float:
    # also used with beta1 == 0, which NadamHyper rejects
    return beta1 * (1.0 - 0.5 * 0.96 ** (t * decay))


@dataclass
class NadamState:
    """Moment buffers over the flattened parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    mu_product: float = 1.0
    hyper: NadamHyper = field(default_factory=NadamHyper)

    @classmethod
    def for_size(cls, size: int, hyper: NadamHyper | None = None) -> "NadamState":
        return cls(np.zeros(size), np.zeros(size), hyper=hyper or NadamHyper())

    @classmethod
    def for_params(cls, params: ExpDnnParams, hyper: NadamHyper | None = None) -> "NadamState":
        return cls.for_size(params.vector.size, hyper)

    def copy(self) -> "NadamState":
        return NadamState(self.m.copy(), self.v.copy(), self.t, self.mu_product, self.hyper)


def nadam_update(state: NadamState, theta: np.ndarray, grad: np.ndarray) -> None:
    """Apply one step in place to the flat arrays ``theta``, ``state.m``, ``state.v``."""
    if not (theta.shape == grad.shape == state.m.shape == state.v.shape):
        raise ShapeError(
            f"nadam shapes differ: theta {theta.shape}, grad {grad.shape}, "
            f"m {state.m.shape}, v {state.v.shape}"
        )
    h = state.hyper
    t = state.t + 1
    mu_t = _mu(t, h.beta1, h.schedule_decay)
    mu_next = _mu(t + 1, h.beta1, h.schedule_decay)
    mu_product = state.mu_product * mu_t
    mu_product_next = mu_product * mu_next

    m, v = state.m, state.v
    m *= h.beta1
    m += (1.0 - h.beta1) * grad
    v *= h.beta2
    v += (1.0 - h.beta2) * (grad * grad)

    g_hat = grad / (1.0 - mu_product)
    m_hat = m / (1.0 - mu_product_next)
    m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat
    v_hat = v / (1.0 - h.beta2**t)
    theta -= h.learning_rate * m_bar / (np.sqrt(v_hat) + h.epsilon)

    state.t = t
    state.mu_product = mu_product


def nadam_step(
    state: NadamState, params: ExpDnnParams, grads: ExpDnnParams, config: NetworkConfig
) -> tuple[ExpDnnParams, NadamState]:
    """Functional form: returns new params and state, inputs are left untouched."""
    params.check_config(config)
    grads.check_config(config)
    new_state = state.copy()
    new_params = params.copy(config)
    nadam_update(new_state, new_params.vector, grads.vector)
    return new_params, new_state
