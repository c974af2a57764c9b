"""State-vector simulator.

States are plain complex128 numpy arrays whose last axis has length ``2**n``.
Leading axes are batch axes, so a ``(B, 2**n)`` array is ``B`` independent
states evaluated together.

Bit ordering: qubit 0 is the most significant bit of the basis-state index,
so on two qubits ``|10>`` is index 2 and ``CNOT(0 -> 1)`` swaps indices 2 and 3.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

ANGLE_COUNT = {"RX": 1, "RY": 1, "RZ": 1, "ROT": 3, "CNOT": 0}

# circuit_unitary simulates one basis state per column; beyond this it is
# cheaper to not build the matrix at all.
MAX_UNITARY_QUBITS = 12


class CapacityError(ValueError):
    """Requested matrix is larger than the simulator allows."""


@dataclass(frozen=True)
class Gate:
    """One gate. ``trainable`` gates take their angles from the circuit's
    parameter vector; their stored ``angles`` are ignored inside a circuit."""

    kind: str
    qubits: tuple[int, ...]
    angles: tuple[float, ...] = ()
    trainable: bool = False

    def __post_init__(self):
        if self.kind not in ANGLE_COUNT:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        want_q = 2 if self.kind == "CNOT" else 1
        if len(self.qubits) != want_q:
            raise ValueError(f"{self.kind} acts on {want_q} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{self.kind} qubits must be distinct, got {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise ValueError(f"negative qubit index in {self.qubits}")
        if not self.trainable and len(self.angles) != ANGLE_COUNT[self.kind]:
            raise ValueError(
                f"{self.kind} takes {ANGLE_COUNT[self.kind]} angle(s), got {len(self.angles)}"
            )
        if self.trainable and self.kind == "CNOT":
            raise ValueError("CNOT has no angles to train")

    @property
    def n_angles(self) -> int:
        return ANGLE_COUNT[self.kind]


def rx(theta):
    c, s = np.cos(np.asarray(theta) / 2), np.sin(np.asarray(theta) / 2)
    return _stack2(c, -1j * s, -1j * s, c)


def ry(theta):
    c, s = np.cos(np.asarray(theta) / 2), np.sin(np.asarray(theta) / 2)
    return _stack2(c, -s, s, c)


def rz(theta):
    e = np.exp(-0.5j * np.asarray(theta))
    z = np.zeros_like(e)
    return _stack2(e, z, z, np.conj(e))


def rot(a, b, c):
    """Z-Y-Z Euler rotation, the matrix product ``RZ(a) @ RY(b) @ RZ(c)``."""
    return rz(a) @ ry(b) @ rz(c)


def _stack2(a, b, c, d):
    a, b, c, d = np.broadcast_arrays(*(np.asarray(v, dtype=complex) for v in (a, b, c, d)))
    return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


def gate_matrix(kind: str, angles: Sequence) -> np.ndarray:
    """2x2 matrix of a single-qubit gate. Array-valued angles give a stack
    of matrices with shape ``angles[0].shape + (2, 2)``."""
    if kind == "RX":
        return rx(angles[0])
    if kind == "RY":
        return ry(angles[0])
    if kind == "RZ":
        return rz(angles[0])
    if kind == "ROT":
        return rot(*angles)
    raise ValueError(f"{kind} is not a single-qubit rotation")


def n_qubits_of(state: np.ndarray) -> int:
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise ValueError(f"state length {dim} is not a power of two")
    return n


def zero_state(n_qubits: int) -> np.ndarray:
    return basis_state(n_qubits, 0)


def basis_state(n_qubits: int, index: int) -> np.ndarray:
    s = np.zeros(1 << n_qubits, dtype=complex)
    s[index] = 1.0
    return s


def apply_matrix(state: np.ndarray, matrix: np.ndarray, qubit: int) -> np.ndarray:
    """Apply a 2x2 matrix (or a batch of them matching the state's batch
    shape) to one qubit. Returns a new array."""
    n = n_qubits_of(state)
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n} qubits")
    batch = state.shape[:-1]
    view = state.reshape(batch + (1 << qubit, 2, 1 << (n - qubit - 1)))
    if matrix.ndim > 2:
        # per-state matrices: broadcast over the (high, low) split axes
        matrix = matrix.reshape(matrix.shape[:-2] + (1, 2, 2))
    return np.matmul(matrix, view).reshape(state.shape)


@functools.lru_cache(maxsize=512)
def cnot_permutation(n_qubits: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    cbit = 1 << (n_qubits - 1 - control)
    tbit = 1 << (n_qubits - 1 - target)
    perm = np.where(idx & cbit, idx ^ tbit, idx)
    perm.setflags(write=False)
    return perm


def apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    n = n_qubits_of(state)
    if not (0 <= control < n and 0 <= target < n):
        raise IndexError(f"CNOT({control}, {target}) out of range for {n} qubits")
    return state[..., cnot_permutation(n, control, target)]


def apply_gate(state: np.ndarray, gate: Gate, angles: Sequence | None = None) -> np.ndarray:
    """Return ``gate`` applied to ``state``; the input is left untouched.

    ``angles`` overrides the gate's stored angles (used for trainable gates).
    """
    n = n_qubits_of(state)
    for q in gate.qubits:
        if q >= n:
            raise IndexError(f"{gate.kind} targets qubit {q}, state has {n} qubits")
    if gate.kind == "CNOT":
        return apply_cnot(state, *gate.qubits)
    return apply_matrix(state, gate_matrix(gate.kind, gate.angles if angles is None else angles), gate.qubits[0])


@dataclass(frozen=True)
class CircuitSpec:
    """Ordered gate list on ``n_qubits`` wires.

    ``layer_starts`` holds the index of the first gate of each layer; it is
    strictly increasing, starts at 0 and is empty only for an empty circuit.
    """

    n_qubits: int
    gates: tuple[Gate, ...] = ()
    layer_starts: tuple[int, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.layer_starts is None:
            object.__setattr__(self, "layer_starts", (0,) if self.gates else ())
        starts = tuple(int(s) for s in self.layer_starts)
        object.__setattr__(self, "layer_starts", starts)
        if self.n_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        for g in self.gates:
            if max(g.qubits) >= self.n_qubits:
                raise ValueError(f"{g.kind} on {g.qubits} exceeds {self.n_qubits} qubits")
        if self.gates:
            if not starts or starts[0] != 0:
                raise ValueError("layer boundaries must start at gate 0")
            if any(b <= a for a, b in zip(starts, starts[1:])) or starts[-1] >= len(self.gates):
                raise ValueError(f"bad layer boundaries {starts} for {len(self.gates)} gates")
        elif starts:
            raise ValueError("an empty circuit has no layers")

    @property
    def n_params(self) -> int:
        return sum(g.n_angles for g in self.gates if g.trainable)

    @property
    def n_layers(self) -> int:
        return len(self.layer_starts)

    def __add__(self, other: "CircuitSpec") -> "CircuitSpec":
        if other.n_qubits != self.n_qubits:
            raise ValueError("cannot concatenate circuits on different qubit counts")
        offset = len(self.gates)
        return CircuitSpec(
            self.n_qubits,
            self.gates + other.gates,
            self.layer_starts + tuple(s + offset for s in other.layer_starts),
        )

    def bind(self, params) -> Iterator[tuple[Gate, tuple, int]]:
        """Yield ``(gate, angles, offset)``; ``offset`` is the gate's first
        parameter index, or -1 for fixed gates. ``params`` may carry leading
        batch axes, in which case each angle is an array over them."""
        params = np.asarray(params, dtype=float)
        if params.shape[-1:] != (self.n_params,) and not (self.n_params == 0 and params.size == 0):
            raise ValueError(f"circuit takes {self.n_params} parameters, got {params.shape[-1:]}")
        k = 0
        for g in self.gates:
            if g.trainable:
                yield g, tuple(params[..., k + i] for i in range(g.n_angles)), k
                k += g.n_angles
            else:
                yield g, g.angles, -1


def apply_circuit(state: np.ndarray, circuit: CircuitSpec, params=()) -> np.ndarray:
    """Run ``circuit`` on ``state``.

    ``params`` is the flat trainable-angle vector. A 2-D ``params`` of shape
    ``(B, n_params)`` runs B parameter sets at once; ``state`` then broadcasts
    against that batch.
    """
    n = n_qubits_of(state)
    if n != circuit.n_qubits:
        raise ValueError(f"state has {n} qubits, circuit has {circuit.n_qubits}")
    params = np.asarray(params, dtype=float)
    if params.ndim > 1:
        state = np.broadcast_to(state, params.shape[:-1] + state.shape[-1:])
    out = np.array(state, dtype=complex)
    for gate, angles, _ in circuit.bind(params):
        out = apply_gate(out, gate, angles)
    return out


def circuit_unitary(circuit: CircuitSpec, params=()) -> np.ndarray:
    """Dense matrix of the circuit; column j is the circuit applied to ``|j>``."""
    if circuit.n_qubits > MAX_UNITARY_QUBITS:
        raise CapacityError(
            f"{circuit.n_qubits} qubits exceeds the {MAX_UNITARY_QUBITS}-qubit unitary limit"
        )
    dim = 1 << circuit.n_qubits
    columns = apply_circuit(np.eye(dim, dtype=complex), circuit, params)
    return np.ascontiguousarray(columns.T)


def is_unitary(u: np.ndarray, atol: float = 1e-9) -> bool:
    return bool(np.allclose(u.conj().T @ u, np.eye(u.shape[0]), rtol=0, atol=atol))


# ---------------------------------------------------------------------------
# text format
#
#   qubits N
#   ROT q            trainable, consumes 3 parameters
#   ROT q a b c      fixed angles (radians)
#   RX|RY|RZ q [a]   trainable without an angle, fixed with one
#   CNOT c t
#   LAYER            starts a new layer (the first layer is implicit)
#
# Blank lines and text after '#' are ignored.
# ---------------------------------------------------------------------------


def dump_circuit(circuit: CircuitSpec) -> str:
    lines = [f"qubits {circuit.n_qubits}"]
    starts = set(circuit.layer_starts[1:])
    for i, g in enumerate(circuit.gates):
        if i in starts:
            lines.append("LAYER")
        fields = [g.kind, *map(str, g.qubits)]
        if not g.trainable:
            fields += [repr(float(a)) for a in g.angles]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def parse_circuit(text: str) -> CircuitSpec:
    n = None
    gates: list[Gate] = []
    starts: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if n is None:
                if head != "qubits" or len(rest) != 1:
                    raise ValueError("expected header 'qubits N'")
                n = int(rest[0])
                continue
            if head == "LAYER":
                if len(gates) not in starts and gates:
                    starts.append(len(gates))
                continue
            if head not in ANGLE_COUNT:
                raise ValueError(f"unknown gate {head!r}")
            n_q = 2 if head == "CNOT" else 1
            qubits = tuple(int(v) for v in rest[:n_q])
            if any(q >= n for q in qubits):
                raise ValueError(f"{head} on {qubits} exceeds {n} qubits")
            angles = tuple(float(v) for v in rest[n_q:])
            trainable = head != "CNOT" and not angles
            if not gates:
                starts = [0]
            gates.append(Gate(head, qubits, angles, trainable))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if n is None:
        raise ValueError("missing 'qubits N' header")
    return CircuitSpec(n, tuple(gates), tuple(starts))


def qubit_count(dim: int) -> int:
    return max(0, math.ceil(math.log2(dim))) if dim > 1 else 0
