"""Strongly entangling layer stacks and measurement readout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qstate import CircuitSpec, Gate


def reupload_layers(n_layers: int, n_reuploads: int) -> tuple[int, ...]:
    """Evenly spaced layer indices for label re-uploads (never layer 0, the
    label is already embedded there)."""
    if n_reuploads < 0:
        raise ValueError("negative re-upload count")
    if n_reuploads >= max(n_layers, 1):
        raise ValueError(f"{n_reuploads} re-uploads do not fit in {n_layers} layers")
    return tuple(k * n_layers // (n_reuploads + 1) for k in range(1, n_reuploads + 1))


@dataclass(frozen=True)
class EntanglingStack:
    n_qubits: int
    n_layers: int
    reupload_points: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "reupload_points", tuple(sorted(set(self.reupload_points))))
        if self.n_layers < 0:
            raise ValueError("negative layer count")
        if any(not 0 <= p < self.n_layers for p in self.reupload_points):
            raise ValueError(f"re-upload points {self.reupload_points} outside [0, {self.n_layers})")

    @property
    def n_params(self) -> int:
        return self.n_layers * 3 * self.n_qubits

    @property
    def param_shape(self) -> tuple[int, int, int]:
        return (self.n_layers, self.n_qubits, 3)

    def check_params(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if params.size != self.n_params:
            raise ValueError(f"stack needs {self.n_params} parameters, got {params.size}")
        return params.reshape(-1)


def entangler_range(layer: int, n_qubits: int) -> int:
    """CNOT control-target distance for 1-based ``layer``.

    Layer 1 is nearest-neighbour, layer 2 skips one qubit, and so on; past
    ``n - 1`` the range cycles so that it never reaches 0 (a self-CNOT).
    """
    return (layer - 1) % (n_qubits - 1) + 1


def build_entangling_circuit(stack: EntanglingStack, reupload_angle: float = 0.0) -> CircuitSpec:
    """Circuit for ``stack``: per layer a trainable ROT on every qubit, then a
    CNOT ring ``i -> (i + r) mod n``.

    At each re-upload point a fixed ``RX(reupload_angle)`` on the last qubit
    (the ancilla) opens the layer.
    """
    n = stack.n_qubits
    if n < 2:
        raise ValueError("an entangling stack needs at least 2 qubits")
    gates: list[Gate] = []
    starts: list[int] = []
    points = set(stack.reupload_points)
    for layer in range(stack.n_layers):
        starts.append(len(gates))
        if layer in points:
            gates.append(Gate("RX", (n - 1,), (reupload_angle,)))
        gates.extend(Gate("ROT", (q,), trainable=True) for q in range(n))
        r = entangler_range(layer + 1, n)
        gates.extend(Gate("CNOT", (q, (q + r) % n)) for q in range(n))
    return CircuitSpec(n, tuple(gates), tuple(starts))


def marginal_probabilities(state: np.ndarray, n_measured: int) -> np.ndarray:
    """Joint probabilities of the first ``n_measured`` qubits."""
    dim = state.shape[-1]
    probs = (state.real**2 + state.imag**2).reshape(state.shape[:-1] + (1 << n_measured, -1))
    if probs.shape[-1] * (1 << n_measured) != dim:
        raise ValueError(f"cannot measure {n_measured} qubits of a {dim}-dim state")
    return probs.sum(axis=-1)


def readout(state: np.ndarray, n_measured: int, n_outputs: int, input_norm) -> np.ndarray:
    """Measured probabilities, truncated to ``n_outputs`` and scaled by the
    embedded input's norm (scaling happens after truncation)."""
    n = state.shape[-1].bit_length() - 1
    if n_measured > n:
        raise ValueError(f"cannot measure {n_measured} of {n} qubits")
    if n_outputs > 1 << n_measured:
        raise ValueError(f"{n_outputs} outputs exceed 2^{n_measured} measured outcomes")
    probs = marginal_probabilities(state, n_measured)[..., :n_outputs]
    return probs * np.asarray(input_norm, dtype=float)[..., None]
