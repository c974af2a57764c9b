import numpy as np
import pytest

from qdiffusion.qstate import CircuitSpec, Gate


def _random_circuit(rng, n_qubits, n_layers):
    """Random layered circuit mixing trainable ROT/RX/RY/RZ, fixed rotations
    and CNOTs between random pairs."""
    gates, starts = [], []
    for _ in range(n_layers):
        starts.append(len(gates))
        for _ in range(rng.integers(1, 2 * n_qubits + 2)):
            q = int(rng.integers(n_qubits))
            pick = rng.integers(5)
            if pick == 0 and n_qubits > 1:
                t = int(rng.choice([i for i in range(n_qubits) if i != q]))
                gates.append(Gate("CNOT", (q, t)))
            elif pick == 1:
                gates.append(Gate("RX", (q,), (float(rng.uniform(-np.pi, np.pi)),)))
            else:
                gates.append(Gate(["ROT", "RX", "RY", "RZ", "ROT"][pick], (q,), trainable=True))
    if not gates:
        return CircuitSpec(n_qubits)
    return CircuitSpec(n_qubits, tuple(gates), tuple(sorted(set(starts) - {len(gates)})))


@pytest.fixture
def random_circuit():
    """Factory ``(rng, n_qubits, n_layers) -> (circuit, params)``."""

    def make(rng, n_qubits, n_layers):
        c = _random_circuit(rng, n_qubits, n_layers)
        return c, rng.uniform(-np.pi, np.pi, c.n_params)

    return make


def random_state(rng, n_qubits, batch=None):
    shape = (1 << n_qubits,) if batch is None else (batch, 1 << n_qubits)
    z = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


@pytest.fixture
def rand_state():
    return random_state
