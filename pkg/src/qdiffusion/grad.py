"""Parameter-shift gradients, a finite-difference oracle and Adam."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .qstate import CircuitSpec, apply_circuit, apply_cnot, apply_matrix, cnot_permutation, gate_matrix

HALF_PI = math.pi / 2


class NonFiniteError(FloatingPointError):
    """A loss or gradient became NaN or infinite."""


def remap(values) -> np.ndarray:
    """Wrap angles into [-pi, pi]. Values already in range are returned
    bit-for-bit, which makes the map exactly idempotent."""
    x = np.asarray(values, dtype=float)
    inside = (x >= -math.pi) & (x <= math.pi)
    wrapped = np.mod(x + math.pi, 2 * math.pi) - math.pi
    # rounding can land a hair outside the interval
    wrapped = np.clip(wrapped, -math.pi, math.pi)
    return np.where(inside, x, wrapped)


@dataclass
class ParamStore:
    values: np.ndarray
    adam_m: np.ndarray = field(default=None)  # type: ignore[assignment]
    adam_v: np.ndarray = field(default=None)  # type: ignore[assignment]
    step_count: int = 0

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float).reshape(-1)
        if self.adam_m is None:
            self.adam_m = np.zeros_like(self.values)
        if self.adam_v is None:
            self.adam_v = np.zeros_like(self.values)
        self.adam_m = np.asarray(self.adam_m, dtype=float).reshape(-1)
        self.adam_v = np.asarray(self.adam_v, dtype=float).reshape(-1)
        if not (len(self.values) == len(self.adam_m) == len(self.adam_v)):
            raise ValueError("values and Adam moments must share one length")

    def __len__(self):
        return len(self.values)


def adam_step(
    store: ParamStore,
    grad,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    wrap: bool = True,
) -> ParamStore:
    g = np.asarray(grad, dtype=float).reshape(-1)
    if g.shape != store.values.shape:
        raise ValueError(f"gradient length {g.size} != parameter count {len(store)}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite gradient entries")
    t = store.step_count + 1
    m = beta1 * store.adam_m + (1 - beta1) * g
    v = beta2 * store.adam_v + (1 - beta2) * g * g
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    values = store.values - lr * m_hat / (np.sqrt(v_hat) + eps)
    if wrap:
        values = remap(values)
    return replace(store, values=values, adam_m=m, adam_v=v, step_count=t)


def finite_diff_grad(loss_fn: Callable, params, h: float = 1e-4, batched: bool = False) -> np.ndarray:
    """Central differences of a scalar loss.

    With ``batched=True``, ``loss_fn`` takes a ``(B, P)`` array and returns B
    losses, and all 2P perturbed points go through it in one call.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    theta = np.asarray(getattr(params, "values", params), dtype=float).reshape(-1)
    eye = np.eye(theta.size) * h
    if batched:
        vals = np.asarray(loss_fn(np.concatenate([theta + eye, theta - eye])), dtype=float)
        return (vals[: theta.size] - vals[theta.size :]) / (2 * h)
    out = np.empty_like(theta)
    for j in range(theta.size):
        out[j] = (loss_fn(theta + eye[j]) - loss_fn(theta - eye[j])) / (2 * h)
    return out


def parameter_shift_grad(
    outputs_fn: Callable, loss_fn: Callable, params, shift: float = HALF_PI, scale: float | None = None
) -> np.ndarray:
    """Gradient of ``loss_fn(outputs_fn(params))`` by the two-term shift rule.

    ``outputs_fn`` maps a ``(B, P)`` batch of parameter vectors to a batch of
    circuit outputs and must depend on each parameter only through one Pauli
    rotation angle. ``loss_fn(outputs)`` returns ``(loss, dloss/doutputs)``;
    for complex outputs the derivative is ``dL/dRe + 1j * dL/dIm``.
    """
    theta = np.asarray(getattr(params, "values", params), dtype=float).reshape(-1)
    p = theta.size
    shifted = np.concatenate([theta + shift * np.eye(p), theta - shift * np.eye(p)])
    outs = np.asarray(outputs_fn(np.concatenate([theta[None], shifted])))
    _, cot = loss_fn(outs[0])
    scale = shift_scale(shift) if scale is None else scale
    jac = scale * (outs[1 : p + 1] - outs[p + 1 :])
    cot = np.asarray(cot)
    return np.tensordot(jac, np.conj(cot), axes=cot.ndim).real


def shift_scale(shift: float) -> float:
    """Prefactor c with d<O>/dθ = c (f(θ+s) - f(θ-s)) for expectation values."""
    return 1.0 / (2.0 * math.sin(shift))


def circuit_shift_jacobian(
    circuit: CircuitSpec,
    params,
    states: np.ndarray,
    output_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    shift: float = HALF_PI,
    scale: float | None = None,
) -> np.ndarray:
    """Shift-rule Jacobian of ``output_fn(circuit(states))`` w.r.t. every
    trainable angle.

    For each angle the circuit is re-evaluated at ``θ ± shift`` and the
    result is ``scale * (out(θ+shift) - out(θ-shift))``, shape
    ``(n_params,) + out.shape``. Evaluations reuse the forward state before
    each gate and a dense suffix matrix for the gates after it, so every
    shifted circuit costs one matrix product instead of a full rerun.

    The defaults (shift pi/2, scale 1/2) are exact for measurement
    probabilities. For raw amplitudes use ``shift=pi, scale=1/4``.
    """
    if output_fn is None:
        output_fn = _probabilities
    if scale is None:
        scale = shift_scale(shift)
    theta = np.asarray(params, dtype=float).reshape(-1)
    states = np.asarray(states, dtype=complex)
    n = circuit.n_qubits
    dim = 1 << n

    bound = list(circuit.bind(theta))
    checkpoints = []
    x = states
    for gate, angles, offset in bound:
        if offset >= 0:
            checkpoints.append(x)
        x = _apply(x, gate, angles)
    final = output_fn(x)
    jac = np.empty((theta.size,) + final.shape, dtype=final.dtype)

    suffix = np.eye(dim, dtype=complex)
    for gate, angles, offset in reversed(bound):
        if offset >= 0:
            before = checkpoints.pop()
            k = gate.n_angles
            mats = []
            for sign in (1.0, -1.0):
                for i in range(k):
                    a = list(angles)
                    a[i] = a[i] + sign * shift
                    mats.append(gate_matrix(gate.kind, a))
            mats = np.stack(mats)  # (2k, 2, 2)
            moved = apply_matrix(np.broadcast_to(before, (2 * k,) + before.shape), mats.reshape((2 * k,) + (1,) * (before.ndim - 1) + (2, 2)), gate.qubits[0])
            outs = output_fn(moved @ suffix.T)
            jac[offset : offset + k] = scale * (outs[:k] - outs[k:])
        if gate.kind == "CNOT":
            suffix = suffix[:, cnot_permutation(n, *gate.qubits)]
        else:
            suffix = apply_matrix(suffix, gate_matrix(gate.kind, angles).T, gate.qubits[0])
    return jac


def _probabilities(states: np.ndarray) -> np.ndarray:
    return states.real**2 + states.imag**2


def _apply(x, gate, angles):
    if gate.kind == "CNOT":
        return apply_cnot(x, *gate.qubits)
    return apply_matrix(x, gate_matrix(gate.kind, angles), gate.qubits[0])


def circuit_outputs(circuit: CircuitSpec, states, output_fn=None) -> Callable:
    """``params -> output_fn(circuit(states))`` accepting a ``(B, P)`` batch;
    convenience for :func:`parameter_shift_grad`."""
    output_fn = output_fn or _probabilities

    def fn(batch):
        batch = np.asarray(batch, dtype=float)
        s = np.asarray(states, dtype=complex)
        # (B, P) params against (S, dim) states -> (B, S, dim)
        expanded = np.broadcast_to(s, (batch.shape[0],) + s.shape)
        out = np.stack([apply_circuit(expanded[i], circuit, batch[i]) for i in range(batch.shape[0])])
        return output_fn(out)

    return fn
