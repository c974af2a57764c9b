"""Classical data to quantum state encodings."""

from __future__ import annotations

import math

import numpy as np

from .qstate import rx


class DegenerateInputError(ValueError):
    """Input vector has zero norm and cannot be amplitude-embedded."""


def amplitude_embed(pixels, n_qubits: int) -> tuple[np.ndarray, float]:
    """Normalised, zero-padded amplitudes of ``pixels`` on ``n_qubits``.

    Returns ``(state, norm)``; keep ``norm`` to rescale a readout later.
    Accepts a batch ``(B, m)``, in which case ``norm`` is an array of B norms.
    """
    x = np.asarray(pixels, dtype=float)
    m = x.shape[-1]
    dim = 1 << n_qubits
    if m < 1:
        raise ValueError("nothing to embed")
    if m > dim:
        raise ValueError(f"{m} values do not fit in {n_qubits} qubits")
    norm = np.linalg.norm(x, axis=-1)
    if np.any(norm == 0):
        raise DegenerateInputError("cannot amplitude-embed a zero-norm input")
    state = np.zeros(x.shape[:-1] + (dim,), dtype=complex)
    state[..., :m] = x / norm[..., None]
    return state, (float(norm) if norm.ndim == 0 else norm)


def label_angle(class_index: int, n_classes: int) -> float:
    if n_classes < 1:
        raise ValueError("need at least one class")
    if not 0 <= class_index < n_classes:
        raise ValueError(f"class {class_index} out of range for {n_classes} classes")
    return class_index * 2 * math.pi / n_classes


def ancilla_state(class_index: int, n_classes: int) -> np.ndarray:
    """``RX(label_angle) |0>`` as a length-2 vector."""
    return rx(label_angle(class_index, n_classes))[:, 0]


def embed_guided(pixels, n_image_qubits: int, class_index, n_classes: int) -> tuple[np.ndarray, float]:
    """Image amplitudes on qubits ``0..n-1`` and the label on an ancilla,
    which is always the last (least significant) qubit.

    ``class_index`` may be a sequence matching a batch of images.
    """
    image, norm = amplitude_embed(pixels, n_image_qubits)
    labels = np.asarray(class_index)
    if labels.ndim == 0:
        anc = ancilla_state(int(labels), n_classes)
    else:
        anc = np.stack([ancilla_state(int(c), n_classes) for c in labels])
        anc = anc.reshape(labels.shape + (2,))
    state = image[..., :, None] * anc[..., None, :]
    return state.reshape(image.shape[:-1] + (-1,)), norm

