"""Unitary single sampling.

The per-step denoising circuit ``U`` is trained on complex states with a
mean-absolute-error loss, then ``U**tau`` is precomposed so that a sample is
one matrix-vector product.
"""

from __future__ import annotations

import functools
import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffusion import as_rng
from .embed import amplitude_embed, ancilla_state, embed_guided, label_angle
from .grad import circuit_shift_jacobian
from .qstate import CircuitSpec, apply_circuit, circuit_unitary, n_qubits_of
from .vqc import EntanglingStack, build_entangling_circuit, reupload_layers

NOISE_REAL = (0.4, 0.24)
NOISE_IMAG = (0.0, 0.14)


def compose_diffusion_unitary(circuit: CircuitSpec, params, tau: int) -> np.ndarray:
    """``U**tau`` for ``U = circuit_unitary(circuit, params)``."""
    if tau < 0:
        raise ValueError("negative step count")
    return np.linalg.matrix_power(circuit_unitary(circuit, params), tau)


def uss_loss(predicted, target_pixels) -> float:
    """Mean complex modulus of ``predicted - embed(target)``, summed over a
    batch. Global phase is not forgiven."""
    pred = np.asarray(predicted, dtype=complex)
    target, _ = amplitude_embed(target_pixels, n_qubits_of(pred))
    return float(np.sum(np.mean(np.abs(pred - target), axis=-1)))


def _mae_and_cot(pred, target):
    diff = pred - target
    mod = np.abs(diff)
    dim = diff.shape[-1]
    cot = np.divide(diff, mod, out=np.zeros_like(diff), where=mod > 0) / dim
    return float(np.sum(np.mean(mod, axis=-1))), cot


@dataclass(frozen=True)
class USSConfig:
    n_image_qubits: int
    n_layers: int
    ancilla: bool = False
    guided: bool = False
    n_reuploads: int = 0
    n_classes: int = 2

    def __post_init__(self):
        if self.guided and not self.ancilla:
            raise ValueError("guided single sampling needs the ancilla")
        if self.n_reuploads and not self.guided:
            raise ValueError("re-uploads need a guided model")

    @property
    def n_qubits(self) -> int:
        return self.n_image_qubits + int(self.ancilla)

    @property
    def n_params(self) -> int:
        return self.n_layers * 3 * self.n_qubits


class USSModel:
    """One denoising step as a unitary acting on the embedded state."""

    def __init__(self, cfg: USSConfig):
        self.cfg = cfg

    @property
    def n_params(self) -> int:
        return self.cfg.n_params

    @functools.lru_cache(maxsize=64)
    def circuit(self, label: int | None = None) -> CircuitSpec:
        cfg = self.cfg
        if cfg.n_layers == 0:
            return CircuitSpec(cfg.n_qubits)
        points = reupload_layers(cfg.n_layers, cfg.n_reuploads) if cfg.n_reuploads else ()
        angle = label_angle(label, cfg.n_classes) if cfg.n_reuploads else 0.0
        return build_entangling_circuit(EntanglingStack(cfg.n_qubits, cfg.n_layers, points), angle)

    def embed(self, images, labels=None) -> np.ndarray:
        cfg = self.cfg
        flat = np.asarray(images, dtype=float).reshape(len(images), -1)
        if cfg.guided:
            if labels is None:
                raise ValueError("guided model needs labels")
            return embed_guided(flat, cfg.n_image_qubits, np.asarray(labels), cfg.n_classes)[0]
        if cfg.ancilla:
            return embed_guided(flat, cfg.n_image_qubits, np.zeros(len(flat), dtype=int), 1)[0]
        return amplitude_embed(flat, cfg.n_image_qubits)[0]

    def _groups(self, labels, batch):
        if not self.cfg.n_reuploads:
            return [(None, np.arange(batch))]
        labels = np.asarray(labels)
        return [(int(c), np.flatnonzero(labels == c)) for c in np.unique(labels)]

    def step_states(self, params, states, labels=None) -> np.ndarray:
        out = np.empty_like(states)
        for label, idx in self._groups(labels, len(states)):
            out[idx] = apply_circuit(states[idx], self.circuit(label), params)
        return out

    def forward(self, params, images, labels=None) -> np.ndarray:
        """One step in pixel space (moduli read out like a sample)."""
        images = np.asarray(images, dtype=float)
        states = self.step_states(params, self.embed(images, labels), labels)
        return state_pixels(states, self.cfg.n_image_qubits, images[0].size).reshape(images.shape)

    def loss_and_grad(self, params, images, targets, labels=None):
        states = self.embed(images, labels)
        goal = self.embed(targets, labels)
        loss = 0.0
        grad = np.zeros(self.n_params)
        for label, idx in self._groups(labels, len(states)):
            circuit = self.circuit(label)
            pred = apply_circuit(states[idx], circuit, params)
            part, cot = _mae_and_cot(pred, goal[idx])
            loss += part
            if circuit.n_params:
                # amplitudes: d psi / d theta = (psi(theta + pi) - psi(theta - pi)) / 4
                jac = circuit_shift_jacobian(circuit, params, states[idx], lambda s: s, shift=math.pi, scale=0.25)
                grad += np.tensordot(jac, np.conj(cot), axes=2).real
        return loss, grad

    def unitary(self, params, tau: int, label: int | None = None) -> np.ndarray:
        return compose_diffusion_unitary(self.circuit(label if self.cfg.n_reuploads else None), params, tau)

    def noise_states(self, n_images: int, rng, labels=None) -> np.ndarray:
        cfg = self.cfg
        z = draw_noise_state(n_images, cfg.n_image_qubits, rng)
        if not cfg.ancilla:
            return z
        if cfg.guided:
            anc = np.stack([ancilla_state(int(c), cfg.n_classes) for c in labels])
        else:
            anc = np.tile(ancilla_state(0, 1), (n_images, 1))
        return (z[:, :, None] * anc[:, None, :]).reshape(n_images, -1)


def draw_noise_state(n_images: int, n_qubits: int, rng) -> np.ndarray:
    """Normalised complex noise, real parts ~ N(0.4, 0.24), imaginary parts
    ~ N(0, 0.14)."""
    rng = as_rng(rng)
    dim = 1 << n_qubits
    z = rng.normal(*NOISE_REAL, size=(n_images, dim)) + 1j * rng.normal(*NOISE_IMAG, size=(n_images, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def state_pixels(states, n_image_qubits: int, n_pixels: int, shots: int | None = None, rng=None) -> np.ndarray:
    """Pixel magnitudes of the image register: ``sqrt`` of its marginal
    probabilities (``|amplitude|`` without an ancilla), truncated.

    With ``shots`` the probabilities are replaced by a finite-shot histogram.
    """
    probs = np.abs(states) ** 2
    probs = probs.reshape(probs.shape[:-1] + (1 << n_image_qubits, -1)).sum(-1)
    if shots:
        rng = as_rng(rng)
        p = probs / probs.sum(axis=-1, keepdims=True)
        probs = np.stack([rng.multinomial(shots, row) for row in p.reshape(-1, p.shape[-1])]).reshape(p.shape) / shots
    return np.sqrt(probs[..., :n_pixels])


def minmax(images) -> np.ndarray:
    x = np.asarray(images, dtype=float)
    flat = x.reshape(len(x), -1)
    lo = flat.min(axis=1, keepdims=True)
    span = flat.max(axis=1, keepdims=True) - lo
    return ((flat - lo) / np.where(span > 0, span, 1.0)).reshape(x.shape)


def uss_sample(
    unitary,
    n_images: int,
    rng,
    n_image_qubits: int | None = None,
    shape: tuple[int, int] | None = None,
    states=None,
    shots: int | None = None,
):
    """Draw noise states and push each through ``unitary`` once.

    Returns ``(images, noise_states)``; images are min-max rescaled to [0, 1].
    """
    unitary = np.asarray(unitary)
    n_total = unitary.shape[0].bit_length() - 1
    n_image_qubits = n_total if n_image_qubits is None else n_image_qubits
    if states is None:
        if n_image_qubits != n_total:
            raise ValueError("pass noise states explicitly when the circuit has an ancilla")
        states = draw_noise_state(n_images, n_total, rng)
    n_pix = int(np.prod(shape)) if shape else 1 << n_image_qubits
    out = states @ unitary.T
    pix = minmax(state_pixels(out, n_image_qubits, n_pix, shots, rng))
    return (pix.reshape((len(pix),) + tuple(shape)) if shape else pix), states


def inverse_noise_statistics(unitary, images, n_image_qubits: int | None = None) -> dict:
    """Map embedded images back through ``U^-1 = U^H`` and summarise the
    real and imaginary parts of the recovered inputs."""
    unitary = np.asarray(unitary)
    n = unitary.shape[0].bit_length() - 1
    states = amplitude_embed(np.asarray(images, dtype=float).reshape(len(images), -1), n)[0]
    z = states @ unitary.conj()
    return {
        "real_mean": float(z.real.mean()),
        "real_std": float(z.real.std()),
        "imag_mean": float(z.imag.mean()),
        "imag_std": float(z.imag.std()),
    }


# ---------------------------------------------------------------------------
# binary matrix format, little endian:
#
#   offset  size  field
#   0       4     magic b"QDUM"
#   4       2     format version (1)
#   6       2     reserved, zero
#   8       8     dim (uint64)
#   16      8     tau (uint64)
#   24      32    SHA-256 of the payload
#   56      ...   dim*dim complex128, row-major (real, imag pairs)

MAGIC = b"QDUM"
VERSION = 1
_HEADER = struct.Struct("<4sHHQQ32s")


def save_unitary(path, unitary, tau: int) -> None:
    u = np.ascontiguousarray(unitary, dtype="<c16")
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError("expected a square matrix")
    payload = u.tobytes(order="C")
    header = _HEADER.pack(MAGIC, VERSION, 0, u.shape[0], tau, hashlib.sha256(payload).digest())
    Path(path).write_bytes(header + payload)


def load_unitary(path) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("file too short for a unitary header")
    magic, version, _, dim, tau, digest = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported format version {version}")
    payload = raw[_HEADER.size :]
    if len(payload) != dim * dim * 16:
        raise ValueError(f"payload holds {len(payload)} bytes, expected {dim * dim * 16}")
    if hashlib.sha256(payload).digest() != digest:
        raise ValueError("checksum mismatch")
    return np.frombuffer(payload, dtype="<c16").reshape(dim, dim).astype(complex), int(tau)
