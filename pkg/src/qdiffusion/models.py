"""Quantum denoisers: Q-Dense, quantum convolution and QU-Net.

Images are numpy arrays. Q-Dense takes ``(B, H, W)`` batches; the
convolutional models use ``(B, C, H, W)`` internally and accept ``(B, H, W)``
at their public entry points. Every model exposes

* ``forward(params, images, labels=None)``
* ``loss_and_grad(params, images, targets, labels=None)`` returning the
  batch-summed MSE and its gradient from the parameter-shift rule.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .embed import amplitude_embed, embed_guided, label_angle
from .grad import circuit_shift_jacobian
from .qstate import CircuitSpec, apply_circuit, circuit_unitary
from .vqc import EntanglingStack, build_entangling_circuit, marginal_probabilities, readout, reupload_layers


def init_params(n_params: int, rng: np.random.Generator, scale: float = math.pi) -> np.ndarray:
    return rng.uniform(-scale, scale, size=n_params)


def batch_mse(outputs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-image MSE summed over the batch, and its derivative."""
    diff = outputs - targets
    per_image = diff.reshape(len(diff), -1)
    n_pix = per_image.shape[1]
    loss = float(np.sum(np.mean(per_image**2, axis=1)))
    return loss, 2.0 * diff / n_pix


# ---------------------------------------------------------------------------
# Q-Dense


@dataclass(frozen=True)
class QDenseConfig:
    n_image_qubits: int
    n_layers: int
    guided: bool = False
    n_reuploads: int = 0
    n_classes: int = 2

    def __post_init__(self):
        if self.n_reuploads and not self.guided:
            raise ValueError("re-uploads re-apply the label and need a guided model")

    @property
    def n_qubits(self) -> int:
        return self.n_image_qubits + (1 if self.guided else 0)

    @property
    def n_params(self) -> int:
        return self.n_layers * 3 * self.n_qubits

    @property
    def stack(self) -> EntanglingStack:
        points = reupload_layers(self.n_layers, self.n_reuploads) if self.n_reuploads else ()
        return EntanglingStack(self.n_qubits, self.n_layers, points)


class QDense:
    """Amplitude-embedded image through one strongly entangling stack."""

    def __init__(self, cfg: QDenseConfig):
        self.cfg = cfg

    @property
    def n_params(self) -> int:
        return self.cfg.n_params

    @functools.lru_cache(maxsize=64)
    def circuit(self, label: int | None = None) -> CircuitSpec:
        cfg = self.cfg
        if cfg.n_layers == 0:
            return CircuitSpec(cfg.n_qubits)
        angle = label_angle(label, cfg.n_classes) if cfg.n_reuploads else 0.0
        return build_entangling_circuit(cfg.stack, angle)

    def _groups(self, labels, batch: int):
        """Index groups sharing one circuit; only re-uploads make it label-dependent."""
        if not self.cfg.n_reuploads:
            return [(None, np.arange(batch))]
        labels = np.asarray(labels)
        return [(int(c), np.flatnonzero(labels == c)) for c in np.unique(labels)]

    def embed(self, images: np.ndarray, labels=None):
        cfg = self.cfg
        flat = images.reshape(len(images), -1)
        if flat.shape[1] > 1 << cfg.n_image_qubits:
            raise ValueError(f"{flat.shape[1]} pixels exceed {cfg.n_image_qubits} image qubits")
        if cfg.guided:
            if labels is None:
                raise ValueError("guided model needs labels")
            return embed_guided(flat, cfg.n_image_qubits, np.asarray(labels), cfg.n_classes)
        return amplitude_embed(flat, cfg.n_image_qubits)

    def forward(self, params, images, labels=None) -> np.ndarray:
        images = np.asarray(images, dtype=float)
        single = images.ndim == 2
        if single:
            images = images[None]
            labels = None if labels is None else [labels]
        states, norms = self.embed(images, labels)
        n_pix = images[0].size
        out = np.empty((len(images), n_pix))
        for label, idx in self._groups(labels, len(images)):
            final = apply_circuit(states[idx], self.circuit(label), params)
            out[idx] = readout(final, self.cfg.n_image_qubits, n_pix, norms[idx])
        out = out.reshape(images.shape)
        return out[0] if single else out

    def loss_and_grad(self, params, images, targets, labels=None):
        images = np.asarray(images, dtype=float)
        states, norms = self.embed(images, labels)
        n_pix = images[0].size
        grad = np.zeros(self.n_params)
        loss = 0.0
        n_meas = self.cfg.n_image_qubits
        for label, idx in self._groups(labels, len(images)):
            circuit = self.circuit(label)
            g_norms = norms[idx]
            if circuit.n_params == 0:
                out = readout(states[idx], n_meas, n_pix, g_norms)
                loss += batch_mse(out, targets[idx].reshape(len(idx), -1))[0]
                continue
            jac = circuit_shift_jacobian(
                circuit, params, states[idx], lambda s: readout(s, n_meas, n_pix, g_norms)
            )
            out = readout(apply_circuit(states[idx], circuit, params), n_meas, n_pix, g_norms)
            part, cot = batch_mse(out, targets[idx].reshape(len(idx), -1))
            loss += part
            grad += np.tensordot(jac, cot, axes=2)
        return loss, grad


# ---------------------------------------------------------------------------
# quantum convolution


def qconv_wires(c_in: int, kernel: int, c_out: int) -> int:
    """Wire count ``max(ceil(log2(c_in k^2)), ceil(log2(c_out)))``, at least 2
    so an entangling ring exists."""
    need = max(math.ceil(math.log2(c_in * kernel * kernel)), math.ceil(math.log2(c_out)) if c_out > 1 else 0)
    return max(need, 2)


@dataclass(frozen=True)
class QConvConfig:
    c_in: int
    c_out: int
    kernel: int
    n_layers: int

    @property
    def wires(self) -> int:
        return qconv_wires(self.c_in, self.kernel, self.c_out)

    @property
    def n_measured(self) -> int:
        return max(1, math.ceil(math.log2(self.c_out))) if self.c_out > 1 else 1

    @property
    def n_params(self) -> int:
        return self.n_layers * 3 * self.wires

    @functools.cached_property
    def circuit(self) -> CircuitSpec:
        if self.n_layers == 0:
            return CircuitSpec(self.wires)
        return build_entangling_circuit(EntanglingStack(self.wires, self.n_layers))


def extract_patches(x: np.ndarray, kernel: int) -> np.ndarray:
    """``(B, C, H, W)`` -> ``(B, H, W, C*k*k)`` slices, stride 1, zero padded
    so the output keeps ``H x W`` (extra padding goes after for even k)."""
    b, c, h, w = x.shape
    lo = (kernel - 1) // 2
    hi = kernel - 1 - lo
    padded = np.pad(x, ((0, 0), (0, 0), (lo, hi), (lo, hi)))
    win = np.lib.stride_tricks.sliding_window_view(padded, (kernel, kernel), axis=(2, 3))
    # (B, C, H, W, k, k) -> (B, H, W, C, k, k)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b, h, w, c * kernel * kernel)


def fold_patches(grad_patches: np.ndarray, shape: tuple, kernel: int) -> np.ndarray:
    """Adjoint of :func:`extract_patches`."""
    b, c, h, w = shape
    lo = (kernel - 1) // 2
    g = grad_patches.reshape(b, h, w, c, kernel, kernel)
    out = np.zeros((b, c, h + kernel - 1, w + kernel - 1))
    for i in range(kernel):
        for j in range(kernel):
            out[:, :, i : i + h, j : j + w] += g[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out[:, :, lo : lo + h, lo : lo + w]


def _embed_slices(slices: np.ndarray, wires: int):
    """Normalised, padded slices; zero-norm slices stay zero (marked by norm 0)."""
    norms = np.linalg.norm(slices, axis=-1)
    safe = np.where(norms > 0, norms, 1.0)
    amps = np.zeros(slices.shape[:-1] + (1 << wires,))
    amps[..., : slices.shape[-1]] = slices / safe[..., None]
    return amps, norms


def qconv2d(cfg: QConvConfig, params, x: np.ndarray, unitary: np.ndarray | None = None) -> np.ndarray:
    """Quantum convolution of a ``(B, C_in, H, W)`` batch.

    Each ``c_in x k x k`` slice is amplitude-embedded on ``cfg.wires`` wires,
    run through the patch circuit, and the first ``c_out`` joint
    probabilities of the measured wires, scaled by the slice norm, become
    the output channels. All-zero slices give zero output.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[1] != cfg.c_in:
        raise ValueError(f"expected {cfg.c_in} input channels, got {x.shape[1]}")
    if unitary is None:
        unitary = circuit_unitary(cfg.circuit, params)
    amps, norms = _embed_slices(extract_patches(x, cfg.kernel), cfg.wires)
    psi = amps @ unitary.T
    out = marginal_probabilities(psi, cfg.n_measured)[..., : cfg.c_out] * norms[..., None]
    return out.transpose(0, 3, 1, 2)


def qconv2d_backward(cfg: QConvConfig, params, x: np.ndarray, grad_out: np.ndarray, unitary: np.ndarray | None = None):
    """Gradients of ``sum(grad_out * qconv2d(x))`` with respect to the patch
    circuit's angles (shift rule) and to the input (analytic)."""
    if unitary is None:
        unitary = circuit_unitary(cfg.circuit, params)
    patches = extract_patches(x, cfg.kernel)
    amps, norms = _embed_slices(patches, cfg.wires)
    g = grad_out.transpose(0, 2, 3, 1)  # (B, H, W, c_out)
    live = norms > 0
    a = amps[live]
    n = norms[live]
    gl = g[live]

    # parameters: shift-rule Jacobian of measured probabilities
    def out_fn(states):
        return marginal_probabilities(states, cfg.n_measured)[..., : cfg.c_out] * n[:, None]

    if cfg.circuit.n_params and len(a):
        jac = circuit_shift_jacobian(cfg.circuit, params, a.astype(complex), out_fn)
        g_params = np.tensordot(jac, gl, axes=2)
    else:
        g_params = np.zeros(cfg.n_params)

    # input: out = n * M |U a|^2 with a = s / n
    psi = a @ unitary.T
    probs = marginal_probabilities(psi, cfg.n_measured)[:, : cfg.c_out]
    dim = 1 << cfg.wires
    g_meas = np.zeros((len(a), 1 << cfg.n_measured))
    g_meas[:, : cfg.c_out] = gl * n[:, None]
    g_prob = np.repeat(g_meas, dim >> cfg.n_measured, axis=1)
    g_a = 2.0 * np.real((g_prob * psi) @ unitary.conj())
    g_n = np.sum(gl * probs, axis=1)
    m = patches.shape[-1]
    a_m = a[:, :m].real
    g_am = g_a[:, :m]
    g_s = (g_am - a_m * np.sum(g_am * a_m, axis=1, keepdims=True)) / n[:, None] + g_n[:, None] * a_m
    g_patches = np.zeros_like(patches)
    g_patches[live] = g_s
    return g_params, fold_patches(g_patches, x.shape, cfg.kernel)


# ---------------------------------------------------------------------------
# QU-Net


def guidance_mask(class_index, height: int, width: int) -> np.ndarray:
    """Horizontal stripes ``0.1 sin(class + row / 20)``, shape ``(H, W)``."""
    if height < 1:
        raise ValueError("mask needs at least one row")
    rows = 0.1 * np.sin(class_index + np.arange(height) / 20.0)
    return np.repeat(rows[:, None], width, axis=1)


def avg_pool2(x):
    b, c, h, w = x.shape
    return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def upsample2(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


@dataclass(frozen=True)
class QUNetConfig:
    channels: tuple[int, ...] = (2, 4, 8)
    n_layers: int = 8
    kernel: int = 3
    guided: bool = False
    n_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if not self.channels or any(b <= a for a, b in zip(self.channels, self.channels[1:])):
            raise ValueError(f"channel ladder must be strictly increasing, got {self.channels}")

    @property
    def depth(self) -> int:
        return len(self.channels)

    def blocks(self) -> list[QConvConfig]:
        """Encoder blocks, decoder blocks (deepest first), final 1x1 projection."""
        ch = self.channels
        enc = [QConvConfig(1 if i == 0 else ch[i - 1], ch[i], self.kernel, self.n_layers) for i in range(self.depth)]
        dec = [QConvConfig(ch[i + 1] + ch[i], ch[i], self.kernel, self.n_layers) for i in reversed(range(self.depth - 1))]
        head = QConvConfig(ch[0], 1, 1, self.n_layers)
        return enc + dec + [head]


class QUNet:
    """U-Net whose blocks are single quantum convolutions.

    Encoder level i: qconv then 2x2 average pool (no pool after the deepest
    level). Decoder: nearest upsample, concatenate the skip, qconv. A 1x1
    qconv projects to one channel. Guided models add the label stripe mask
    to the input.
    """

    def __init__(self, cfg: QUNetConfig):
        self.cfg = cfg
        self.blocks = cfg.blocks()
        sizes = [b.n_params for b in self.blocks]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    @property
    def n_params(self) -> int:
        return int(self.offsets[-1])

    def _split(self, params):
        params = np.asarray(params, dtype=float).reshape(-1)
        if params.size != self.n_params:
            raise ValueError(f"QU-Net needs {self.n_params} parameters, got {params.size}")
        return [params[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def _prepare(self, images, labels):
        x = np.asarray(images, dtype=float)
        single = x.ndim == 2
        if single:
            x = x[None]
            labels = None if labels is None else [labels]
        if x.ndim == 3:
            x = x[:, None]
        h, w = x.shape[-2:]
        step = 1 << (self.cfg.depth - 1)
        if h % step or w % step:
            raise ValueError(f"{h}x{w} image is not divisible by {step}")
        if self.cfg.guided:
            if labels is None:
                raise ValueError("guided model needs labels")
            x = x + np.stack([guidance_mask(c, h, w) for c in labels])[:, None]
        return x, single

    def _run(self, params, x):
        ps = self._split(params)
        units = [circuit_unitary(b.circuit, p) for b, p in zip(self.blocks, ps)]
        d = self.cfg.depth
        tape = []  # (block index, input) for the backward pass
        skips = []
        h = x
        for i in range(d):
            tape.append((i, h))
            h = qconv2d(self.blocks[i], ps[i], h, units[i])
            if i < d - 1:
                skips.append(h)
                h = avg_pool2(h)
        for j in range(d - 1):
            h = np.concatenate([upsample2(h), skips.pop()], axis=1)
            tape.append((d + j, h))
            h = qconv2d(self.blocks[d + j], ps[d + j], h, units[d + j])
        tape.append((len(self.blocks) - 1, h))
        out = qconv2d(self.blocks[-1], ps[-1], h, units[-1])
        return out, tape, ps, units

    def forward(self, params, images, labels=None) -> np.ndarray:
        x, single = self._prepare(images, labels)
        out = self._run(params, x)[0][:, 0]
        return out[0] if single else out

    def loss_and_grad(self, params, images, targets, labels=None):
        x, _ = self._prepare(images, labels)
        out, tape, ps, units = self._run(params, x)
        loss, g = batch_mse(out[:, 0], np.asarray(targets, dtype=float).reshape(out[:, 0].shape))
        g = g[:, None]
        grads = [None] * len(self.blocks)
        d = self.cfg.depth
        # head and decoder, in reverse
        skip_grads = []
        k, inp = tape.pop()
        grads[k], g = qconv2d_backward(self.blocks[k], ps[k], inp, g, units[k])
        for j in reversed(range(d - 1)):
            k, inp = tape.pop()
            grads[k], g_cat = qconv2d_backward(self.blocks[k], ps[k], inp, g, units[k])
            c_up = self.blocks[k].c_in - self.blocks[k].c_out
            up, skip = g_cat[:, :c_up], g_cat[:, c_up:]
            skip_grads.append(skip)
            b, c, hh, ww = up.shape
            g = up.reshape(b, c, hh // 2, 2, ww // 2, 2).sum(axis=(3, 5))
        for i in reversed(range(d)):
            k, inp = tape.pop()
            if i < d - 1:
                g = upsample2(g) / 4.0 + skip_grads.pop()
            grads[k], g = qconv2d_backward(self.blocks[k], ps[k], inp, g, units[k])
        return loss, np.concatenate(grads)


def build_model(kind: str, **kwargs):
    if kind == "qdense":
        return QDense(QDenseConfig(**kwargs))
    if kind == "qunet":
        return QUNet(QUNetConfig(**kwargs))
    raise ValueError(f"unknown model kind {kind!r}")
