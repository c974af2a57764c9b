import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdiffusion.grad import (
    NonFiniteError,
    ParamStore,
    adam_step,
    circuit_outputs,
    circuit_shift_jacobian,
    finite_diff_grad,
    parameter_shift_grad,
    remap,
)
from qdiffusion.qstate import CircuitSpec, Gate, apply_circuit, zero_state
from qdiffusion.vqc import EntanglingStack, build_entangling_circuit

RX_CIRCUIT = CircuitSpec(1, (Gate("RX", (0,), trainable=True),))


def p0(params):
    """Batched p(|0>) of RX(theta)|0>."""
    return np.abs(apply_circuit(zero_state(1), RX_CIRCUIT, params)[..., 0]) ** 2


def identity_loss(out):
    return float(out), 1.0


@pytest.mark.parametrize("theta,want", [(0.0, 0.0), (math.pi / 2, -0.5)])
def test_rx_probability_gradient(theta, want):
    g = parameter_shift_grad(p0, identity_loss, [theta])
    assert g.shape == (1,)
    assert abs(g[0] - want) < 1e-12


def stack_problem(n, layers, seed):
    rng = np.random.default_rng(seed)
    stack = EntanglingStack(n, layers)
    circuit = build_entangling_circuit(stack)
    theta = rng.uniform(-np.pi, np.pi, stack.n_params)
    z = rng.normal(size=(3, 1 << n)) + 1j * rng.normal(size=(3, 1 << n))
    states = z / np.linalg.norm(z, axis=1, keepdims=True)
    target = rng.uniform(0, 0.2, (3, 1 << n))
    return circuit, theta, states, target


def mse(out, target):
    diff = out - target
    return float(np.sum(diff**2)), 2 * diff


def rel_err(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


@pytest.mark.parametrize("n,layers", [(3, 2), (4, 3)])
def test_shift_rule_matches_finite_differences(n, layers):
    circuit, theta, states, target = stack_problem(n, layers, n)
    fn = circuit_outputs(circuit, states)

    def loss(p):
        return mse(fn(np.asarray(p)[None])[0], target)[0]

    fd = finite_diff_grad(loss, theta)
    literal = parameter_shift_grad(fn, lambda o: mse(o, target), theta)
    jac = circuit_shift_jacobian(circuit, theta, states)
    fast = np.tensordot(jac, mse(fn(theta[None])[0], target)[1], axes=2)
    assert rel_err(literal, fd) <= 1e-5
    np.testing.assert_allclose(fast, literal, atol=1e-12)


def test_amplitude_shift_rule():
    circuit, theta, states, _ = stack_problem(3, 2, 9)
    jac = circuit_shift_jacobian(circuit, theta, states, lambda s: s, shift=math.pi, scale=0.25)
    h = 1e-5
    for j in (0, 5, len(theta) - 1):
        e = np.zeros_like(theta)
        e[j] = h
        fd = (apply_circuit(states, circuit, theta + e) - apply_circuit(states, circuit, theta - e)) / (2 * h)
        np.testing.assert_allclose(jac[j], fd, atol=1e-9)


def test_jacobian_with_fixed_gates():
    c = CircuitSpec(
        2,
        (Gate("RX", (1,), (0.4,)), Gate("ROT", (0,), trainable=True), Gate("CNOT", (0, 1)), Gate("RY", (1,), trainable=True)),
    )
    theta = np.array([0.3, -1.2, 2.0, 0.7])
    s = np.full(4, 0.5, dtype=complex)
    fn = circuit_outputs(c, s[None])
    jac = circuit_shift_jacobian(c, theta, s[None])
    fd = np.stack([
        (fn((theta + e)[None])[0] - fn((theta - e)[None])[0]) / 2e-6 for e in np.eye(4) * 1e-6
    ])
    np.testing.assert_allclose(jac, fd, atol=1e-8)


def test_finite_diff_examples():
    np.testing.assert_array_equal(finite_diff_grad(lambda p: 3.0, np.zeros(4)), np.zeros(4))
    assert abs(finite_diff_grad(lambda p: p[0] ** 2, [1.0])[0] - 2.0) < 1e-6
    batched = finite_diff_grad(lambda ps: np.sum(ps**2, axis=1), np.array([1.0, -2.0]), batched=True)
    np.testing.assert_allclose(batched, [2.0, -4.0], atol=1e-8)
    with pytest.raises(ValueError):
        finite_diff_grad(lambda p: 0.0, [0.0], h=0)


def test_adam_zero_gradient():
    store = ParamStore([0.1, -0.2])
    out = adam_step(store, [0.0, 0.0], lr=0.1)
    np.testing.assert_array_equal(out.values, store.values)
    assert out.step_count == 1 and store.step_count == 0


def test_adam_first_step():
    out = adam_step(ParamStore([0.5]), [1.0], lr=0.1)
    # bias-corrected m_hat / sqrt(v_hat) is exactly 1 on the first step
    assert abs(out.values[0] - (0.5 - 0.1 / (1 + 1e-8))) < 1e-15


def test_adam_wraps_past_pi():
    out = adam_step(ParamStore([math.pi - 0.01]), [-1.0], lr=0.1)
    assert -math.pi <= out.values[0] <= math.pi
    assert abs(out.values[0] - (math.pi + 0.09 - 2 * math.pi)) < 1e-6
    raw = adam_step(ParamStore([math.pi - 0.01]), [-1.0], lr=0.1, wrap=False)
    assert raw.values[0] > math.pi


def test_adam_errors():
    with pytest.raises(NonFiniteError):
        adam_step(ParamStore([0.0]), [np.nan], lr=0.1)
    with pytest.raises(ValueError):
        adam_step(ParamStore([0.0]), [1.0, 2.0], lr=0.1)
    with pytest.raises(ValueError):
        ParamStore([0.0, 1.0], adam_m=[0.0])


@pytest.mark.parametrize("x,want", [(0.0, 0.0), (1.5 * math.pi, -0.5 * math.pi), (-math.pi, -math.pi), (math.pi, math.pi)])
def test_remap_examples(x, want):
    assert abs(remap(x) - want) < 1e-15


@settings(max_examples=200)
@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_remap_range_and_idempotent(x):
    y = remap(x)
    assert -math.pi <= y <= math.pi
    assert remap(y) == y
    assert abs(math.remainder(float(y) - x, 2 * math.pi)) < 1e-9


def test_remap_leaves_outputs_unchanged():
    circuit, theta, states, _ = stack_problem(3, 2, 4)
    fn = circuit_outputs(circuit, states)
    inside = remap(theta)
    np.testing.assert_array_equal(inside, theta)
    np.testing.assert_array_equal(fn(inside[None]), fn(theta[None]))
    # angles outside the interval: the 4pi period of the amplitudes leaves
    # probabilities unchanged up to rounding in the wrapped angle
    far = theta + 2 * np.pi * np.random.default_rng(0).integers(-3, 4, theta.size)
    np.testing.assert_allclose(fn(remap(far)[None]), fn(far[None]), atol=1e-12)
