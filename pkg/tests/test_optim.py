import math

import numpy as np
import pytest

from expdnn.experiment import table_network
from expdnn.network import ExpDnnParams
from expdnn.optim import NadamHyper, NadamState, momentum_schedule, nadam_step, nadam_update
from expdnn.numerics import ShapeError


def scalar_nadam(theta, grads, lr=0.002, b1=0.9, b2=0.999, eps=1e-7, decay=0.004):
    """Reference: one scalar parameter, written straight from the update rule."""
    m = v = 0.0
    prod = 1.0
    for t, g in enumerate(grads, start=1):
        mu_t = b1 * (1 - 0.5 * 0.96 ** (t * decay))
        mu_n = b1 * (1 - 0.5 * 0.96 ** ((t + 1) * decay))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        prod *= mu_t
        g_hat = g / (1 - prod)
        m_hat = m / (1 - prod * mu_n)
        m_bar = (1 - mu_t) * g_hat + mu_n * m_hat
        v_hat = v / (1 - b2**t)
        theta -= lr * m_bar / (math.sqrt(v_hat) + eps)
    return theta


def test_momentum_schedule_first_step():
    assert momentum_schedule(1, NadamHyper()) == pytest.approx(0.4500735, abs=1e-7)


def test_momentum_schedule_rises_towards_beta1():
    h = NadamHyper()
    values = [momentum_schedule(t, h) for t in (1, 10, 100, 1000, 10**4, 10**5)]
    assert all(a < b for a, b in zip(values, values[1:]))
    assert all(v < 0.9 for v in values)
    assert values[-1] == pytest.approx(0.9, abs=1e-6)
    # 0.96**4000 underflows the correction; the limit is reached exactly
    assert momentum_schedule(10**6, h) == 0.9


def test_momentum_schedule_zero_beta1():
    from expdnn.optim import _mu

    assert _mu(5, 0.0, 0.004) == 0.0


def test_hyper_validation():
    with pytest.raises(ValueError):
        NadamHyper(beta1=1.0)
    with pytest.raises(ValueError):
        NadamHyper(learning_rate=0.0)


def test_first_step_scalar_value():
    state = NadamState.for_size(1)
    theta = np.array([1.0])
    nadam_update(state, theta, np.array([1.0]))
    assert theta[0] == pytest.approx(0.997887, abs=1e-6)
    assert theta[0] == pytest.approx(scalar_nadam(1.0, [1.0]), rel=1e-15)


def test_matches_scalar_reference_over_many_steps(np_rng):
    grads = np_rng.normal(size=(200, 5))
    theta = np_rng.normal(size=5)
    want = [scalar_nadam(theta[i], grads[:, i]) for i in range(5)]
    state = NadamState.for_size(5)
    got = theta.copy()
    for g in grads:
        nadam_update(state, got, g)
    np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-15)
    assert state.t == 200


def test_zero_gradient_fixed_point_is_bitwise():
    theta = np.array([1.0, -2.5, 3e-9])
    before = theta.tobytes()
    state = NadamState.for_size(3)
    nadam_update(state, theta, np.zeros(3))
    assert theta.tobytes() == before


def test_always_zero_gradient_entry_frozen_for_60000_steps(np_rng):
    theta = np.array([1.0, 1.0, 1.0])
    state = NadamState.for_size(3)
    for _ in range(60_000):
        g = np_rng.normal(size=3)
        g[1] = 0.0
        nadam_update(state, theta, g)
    assert theta[1] == 1.0
    assert theta[0] != 1.0


def test_identical_histories_give_identical_entries(np_rng):
    theta = np.array([0.3, 0.3, -1.0])
    state = NadamState.for_size(3)
    for _ in range(500):
        g = np_rng.normal()
        nadam_update(state, theta, np.array([g, g, np_rng.normal()]))
    assert theta[0] == theta[1]


def test_permutation_equivariance(np_rng):
    perm = np_rng.permutation(6)
    a, b = np_rng.normal(size=6), None
    b = a[perm].copy()
    sa, sb = NadamState.for_size(6), NadamState.for_size(6)
    for _ in range(100):
        g = np_rng.normal(size=6)
        nadam_update(sa, a, g)
        nadam_update(sb, b, g[perm])
    np.testing.assert_array_equal(a[perm], b)


def test_quadratic_convergence():
    theta = np.array([1.0])
    state = NadamState.for_size(1)
    for step in range(5000):
        nadam_update(state, theta, 2.0 * theta)
        if abs(theta[0]) < 0.01:
            break
    assert abs(theta[0]) < 0.01


@pytest.mark.slow
def test_second_moment_stays_nonnegative(np_rng):
    state = NadamState.for_size(4)
    theta = np.zeros(4)
    grads = np_rng.normal(scale=10.0, size=(10**6, 4))
    for g in grads:
        nadam_update(state, theta, g)
    assert np.all(state.v >= 0.0)
    assert state.t == 10**6


def test_functional_step_leaves_inputs_untouched(np_rng):
    cfg = table_network(2, 1, "linear")
    params = ExpDnnParams.zeros(cfg)
    params.vector[:] = np_rng.normal(size=params.vector.size)
    grads = ExpDnnParams.zeros(cfg)
    grads.vector[:] = np_rng.normal(size=params.vector.size)
    state = NadamState.for_params(params)
    before = params.vector.copy()
    new_params, new_state = nadam_step(state, params, grads, cfg)
    np.testing.assert_array_equal(params.vector, before)
    assert state.t == 0 and new_state.t == 1
    assert not np.array_equal(new_params.vector, before)
    assert new_state.mu_product == pytest.approx(momentum_schedule(1, NadamHyper()))


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        nadam_update(NadamState.for_size(3), np.zeros(3), np.zeros(4))
