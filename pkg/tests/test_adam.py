"""Adam optimizer behavior."""

import inspect

import numpy as np
import pytest

from devae.nn import AdamState, Tensor, adam_step


def test_zero_gradient_leaves_parameters_unchanged():
    p = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    state = AdamState([p])
    before = p.data.copy()
    adam_step([p], [np.zeros(3)], state)
    assert np.array_equal(p.data, before)
    assert state.step == 1


def test_first_step_matches_closed_form():
    # After one step: m_hat = g, v_hat = g*g, update = -lr * g / (|g| + eps).
    lr, eps = 1e-4, 1e-8
    g = np.array([0.5, -0.25, 2.0])
    p = Tensor([1.0, 1.0, 1.0], requires_grad=True)
    state = AdamState([p])
    adam_step([p], [g], state, lr=lr, eps=eps)
    expected = 1.0 - lr * g / (np.abs(g) + eps)
    assert np.allclose(p.data, expected, rtol=0, atol=1e-15)


def test_second_moment_stays_nonnegative():
    p = Tensor(np.random.default_rng(0).standard_normal(8), requires_grad=True)
    state = AdamState([p])
    rng = np.random.default_rng(1)
    for _ in range(20):
        adam_step([p], [rng.standard_normal(8)], state)
    assert all((v >= 0).all() for v in state.v)
    assert state.step == 20


def test_defaults_match_training_hyperparameters():
    sig = inspect.signature(adam_step)
    assert sig.parameters["lr"].default == 1e-4
    assert sig.parameters["beta1"].default == 0.9
    assert sig.parameters["beta2"].default == 0.999
    assert sig.parameters["eps"].default == 1e-8


def test_mismatched_grads_rejected():
    p = Tensor([1.0], requires_grad=True)
    state = AdamState([p])
    with pytest.raises(ValueError):
        adam_step([p], [], state)
