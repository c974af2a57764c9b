"""Forward noising, training, iterative sampling and inpainting."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grad import NonFiniteError, ParamStore, adam_step

log = logging.getLogger(__name__)

TARGET_MODES = ("data", "noise")


def as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-step variances ``betas[t-1]`` for steps ``t = 1..tau``."""

    betas: tuple[float, ...]
    target_mode: str = "data"
    alpha_bars: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        object.__setattr__(self, "betas", tuple(float(v) for v in b))
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"target mode must be one of {TARGET_MODES}, got {self.target_mode!r}")
        if b.size and (np.any(b <= 0) or np.any(b >= 1)):
            raise ValueError("betas must lie strictly between 0 and 1")
        if np.any(np.diff(b) < 0):
            raise ValueError("betas must be non-decreasing")
        # alpha_bars[t] for t = 0..tau, alpha_bars[0] = 1
        object.__setattr__(self, "alpha_bars", np.concatenate([[1.0], np.cumprod(1.0 - b)]))

    @classmethod
    def linear(cls, tau: int, beta_start: float = 0.05, beta_end: float = 0.5, target_mode: str = "data"):
        if tau < 0:
            raise ValueError("negative step count")
        if tau == 1:
            return cls((beta_start,), target_mode)
        return cls(tuple(np.linspace(beta_start, beta_end, tau)), target_mode)

    @property
    def tau(self) -> int:
        return len(self.betas)

    def beta(self, t: int) -> float:
        return self.betas[t - 1]


def forward_noise(x0, t: int, schedule: DiffusionSchedule, rng=None, eps=None):
    """``x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps``; returns ``(x_t, eps)``."""
    if not 1 <= t <= schedule.tau:
        raise ValueError(f"step {t} outside 1..{schedule.tau}")
    x0 = np.asarray(x0, dtype=float)
    if eps is None:
        eps = as_rng(rng).standard_normal(x0.shape)
    ab = schedule.alpha_bars[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps, eps


def noised_at(x0, t, eps, schedule: DiffusionSchedule):
    """Vectorised ``x_t`` for per-image steps ``t`` (``t = 0`` gives ``x0``)."""
    ab = schedule.alpha_bars[np.asarray(t)].reshape((-1,) + (1,) * (np.ndim(x0) - 1))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def training_pairs(x0, schedule: DiffusionSchedule, rng):
    """Draw ``t ~ U{1..tau}`` per image; return model inputs ``x_t``, targets
    and the steps. Data targets reuse the same noise draw at ``t - 1``."""
    rng = as_rng(rng)
    x0 = np.asarray(x0, dtype=float)
    t = rng.integers(1, schedule.tau + 1, size=len(x0))
    eps = rng.standard_normal(x0.shape)
    x_t = noised_at(x0, t, eps, schedule)
    target = noised_at(x0, t - 1, eps, schedule) if schedule.target_mode == "data" else eps
    return x_t, target, t


def train_step(model, store: ParamStore, x0, labels, schedule: DiffusionSchedule, lr: float, rng, wrap: bool = True):
    """One Adam step on a batch; returns ``(store, loss)`` with the loss
    measured before the update."""
    if len(x0) == 0:
        raise ValueError("empty batch")
    x_t, target, _ = training_pairs(x0, schedule, rng)
    loss, grad = model.loss_and_grad(store.values, x_t, target, labels)
    if not np.isfinite(loss):
        raise NonFiniteError(f"loss is {loss}")
    return adam_step(store, grad, lr, wrap=wrap), loss


def train(
    model,
    store: ParamStore,
    images,
    labels,
    schedule: DiffusionSchedule,
    lr: float,
    epochs: int,
    batch_size: int,
    rng,
    on_epoch: Callable[[int, float, ParamStore], None] | None = None,
    wrap: bool = True,
):
    """Shuffle-and-batch training. Returns ``(store, epoch_losses)``; each
    epoch loss is the sum of batch losses."""
    rng = as_rng(rng)
    images = np.asarray(images, dtype=float)
    labels = None if labels is None else np.asarray(labels)
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(images))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            store, loss = train_step(
                model, store, images[idx], None if labels is None else labels[idx], schedule, lr, rng, wrap
            )
            total += loss
        history.append(total)
        log.info("epoch %d loss %.6f", epoch, total)
        if on_epoch is not None:
            on_epoch(epoch, total, store)
    return store, history


def initial_noise(shape, rng, value_range=(0.0, 1.0)) -> np.ndarray:
    lo, hi = value_range
    return np.clip(as_rng(rng).standard_normal(shape), lo, hi)


def reverse_step(model, params, x_t, t: int, schedule: DiffusionSchedule, labels=None):
    out = model.forward(params, x_t, labels)
    if schedule.target_mode == "data":
        return out
    ab = schedule.alpha_bars[t]
    return (x_t - np.sqrt(1.0 - ab) * out) / np.sqrt(1.0 - schedule.beta(t))


def sample(
    model,
    params,
    schedule: DiffusionSchedule,
    n_images: int,
    shape: tuple[int, int],
    labels=None,
    rng=None,
    value_range=(0.0, 1.0),
    x_init=None,
):
    """Iterate the reverse process from clipped Gaussian noise.

    Returns the trajectory, an array ``(tau + 1, n_images, H, W)`` whose
    first entry is the starting noise and last entry the samples.
    """
    rng = as_rng(rng)
    x = initial_noise((n_images,) + tuple(shape), rng, value_range) if x_init is None else np.array(x_init, dtype=float)
    traj = [x]
    for t in range(schedule.tau, 0, -1):
        x = reverse_step(model, params, x, t, schedule, labels)
        traj.append(x)
    return np.stack(traj)


def inpaint(
    model,
    params,
    image,
    known,
    schedule: DiffusionSchedule,
    reset_each_step: bool = True,
    label=None,
    rng=None,
    value_range=(0.0, 1.0),
):
    """Fill the unknown pixels (``known == False``) by running the sampler.

    Unknown pixels start as clipped noise. With ``reset_each_step`` the known
    pixels are restored after every reverse step. Returns
    ``(result, unknown_mse, initial)``.
    """
    image = np.asarray(image, dtype=float)
    known = np.asarray(known, dtype=bool)
    if known.shape != image.shape:
        raise ValueError("mask and image shapes differ")
    if not known.any():
        raise ValueError("mask marks no pixel as known")
    if known.all():
        return image.copy(), 0.0, image.copy()
    noise = initial_noise(image.shape, rng, value_range)
    x = np.where(known, image, noise)
    start = x.copy()
    labels = None if label is None else [label]
    for t in range(schedule.tau, 0, -1):
        x = reverse_step(model, params, x[None], t, schedule, labels)[0]
        if reset_each_step:
            x = np.where(known, image, x)
    return x, masked_mse(x, image, ~known), start


def masked_mse(x, y, region) -> float:
    region = np.asarray(region, dtype=bool)
    return float(np.mean((np.asarray(x)[region] - np.asarray(y)[region]) ** 2))


def bottom_half_mask(height: int, width: int) -> np.ndarray:
    """Known-pixel mask keeping the bottom half; the top half is inpainted."""
    known = np.zeros((height, width), dtype=bool)
    known[height // 2 :] = True
    return known
