"""Run outputs: PNG grids, CSV rows, checkpoints and manifests."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .grad import ParamStore

CHECKPOINT_VERSION = 1


def image_grid(tiles, value_range=(0.0, 1.0), pad: int = 1, scale: int = 4) -> np.ndarray:
    """``(rows, cols, H, W)`` tiles into one uint8 image with ``pad`` pixel
    gutters, each pixel repeated ``scale`` times."""
    tiles = np.asarray(tiles, dtype=float)
    rows, cols, h, w = tiles.shape
    lo, hi = value_range
    t = np.clip((tiles - lo) / (hi - lo), 0.0, 1.0)
    t = np.round(t * 255).astype(np.uint8)
    t = t.repeat(scale, axis=2).repeat(scale, axis=3)
    h, w = h * scale, w * scale
    grid = np.full((rows * (h + pad) + pad, cols * (w + pad) + pad), 255, dtype=np.uint8)
    for r in range(rows):
        for c in range(cols):
            y, x = pad + r * (h + pad), pad + c * (w + pad)
            grid[y : y + h, x : x + w] = t[r, c]
    return grid


def write_png(path, tiles, value_range=(0.0, 1.0)) -> None:
    Image.fromarray(image_grid(tiles, value_range)).save(path, format="PNG")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def params_hash(values) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<f8").tobytes()).hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_checkpoint(path, store: ParamStore, config: dict, schedule, rng: np.random.Generator) -> None:
    np.savez(
        path,
        version=np.int64(CHECKPOINT_VERSION),
        params=store.values,
        adam_m=store.adam_m,
        adam_v=store.adam_v,
        step_count=np.int64(store.step_count),
        betas=np.asarray(schedule.betas, dtype=float),
        target_mode=np.array(schedule.target_mode),
        config=np.array(json.dumps(config, sort_keys=True)),
        rng_state=np.array(json.dumps(rng.bit_generator.state)),
    )


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing model checkpoint {path}")
    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"checkpoint format {version} is not supported")
        return {
            "store": ParamStore(z["params"], z["adam_m"], z["adam_v"], int(z["step_count"])),
            "betas": tuple(z["betas"].tolist()),
            "target_mode": str(z["target_mode"]),
            "config": json.loads(str(z["config"])),
            "rng_state": json.loads(str(z["rng_state"])),
        }


def write_manifest(path, command: str, config: dict, seed: int, params_digest: str | None, outputs: list[Path], extra=None):
    manifest = {
        "command": command,
        "seed": seed,
        "config": config,
        "params_sha256": params_digest,
        "outputs": {p.name: file_hash(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
