"""Command-line driver.

    qdiffusion train   --preset qdense-guided-8 --out-dir runs/a
    qdiffusion sample  --config exp.ini --checkpoint runs/a/checkpoint.npz --tau 10 --out-dir runs/b
    qdiffusion compose --preset uss-8-l56 --checkpoint runs/u/checkpoint.npz --out-dir runs/c
    qdiffusion eval    --config exp.ini --samples runs/b/samples.npy --out-dir runs/d
    qdiffusion inpaint --config exp.ini --checkpoint runs/a/checkpoint.npz --out-dir runs/e
    qdiffusion replay  runs/b/manifest.json --out-dir runs/b2

Every command writes ``manifest.json`` next to its outputs; ``replay``
reruns it and checks the outputs hash the same.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import artifacts
from .config import PRESETS, Config, ConfigError, apply_overrides, from_dict, load_config, preset
from .diffusion import DiffusionSchedule, bottom_half_mask, inpaint, masked_mse, sample, train
from .data import load_dataset
from .grad import ParamStore
from .metrics import frechet_distance, psnr, ssim
from .models import QDense, QDenseConfig, QUNet, QUNetConfig, init_params
from .uss import USSConfig, USSModel, minmax, save_unitary, state_pixels

log = logging.getLogger("qdiffusion")

COMMANDS = ("train", "sample", "compose", "eval", "inpaint")


class CommandError(RuntimeError):
    pass


def build_model(cfg: Config):
    m = cfg.model
    if m.kind == "qdense":
        return QDense(QDenseConfig(m.n_image_qubits, m.layers, m.guided, m.reuploads, m.classes))
    if m.kind == "qunet":
        return QUNet(QUNetConfig(tuple(m.channels), m.layers, m.kernel, m.guided, m.classes))
    # the label lives on the ancilla, so guidance implies it
    return USSModel(USSConfig(m.n_image_qubits, m.layers, m.ancilla or m.guided, m.guided, m.reuploads, m.classes))


def build_schedule(cfg: Config) -> DiffusionSchedule:
    s = cfg.schedule
    target = "data" if cfg.model.kind == "uss" else s.target
    return DiffusionSchedule.linear(s.tau, s.beta_start, s.beta_end, target)


def load_data(cfg: Config, offset: int | None = None, limit: int | None = None):
    d = cfg.data
    classes = tuple(d.classes) or None
    x, y = load_dataset(
        d.source, d.path or None, d.labels_path or None, d.size, classes, limit=None
    )
    start = d.offset if offset is None else offset
    stop = start + (d.limit if limit is None else limit)
    x, y = x[start:stop], y[start:stop]
    if len(x) == 0:
        raise CommandError(f"no images in data range [{start}, {stop})")
    if classes:
        # labels become positions in the class list
        y = np.searchsorted(np.asarray(sorted(classes)), y)
    return x, y


def sample_labels(cfg: Config, n: int) -> np.ndarray | None:
    if not cfg.model.guided:
        return None
    return np.arange(n) % cfg.model.classes


def run_id(cfg: Config, command: str) -> str:
    blob = json.dumps({"command": command, "config": cfg.to_dict()}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _checkpoint(cfg: Config):
    if not cfg.run.checkpoint:
        raise CommandError("run.checkpoint: no model checkpoint given (use --checkpoint)")
    ckpt = artifacts.load_checkpoint(cfg.run.checkpoint)
    saved = from_dict({"model": ckpt["config"]["model"]})
    if saved.model != cfg.model:
        log.info("using the model section stored in the checkpoint")
        cfg.model = saved.model
    return ckpt


# ---------------------------------------------------------------------------
# commands; each returns (output paths, params digest or None, extra manifest keys)


def cmd_train(cfg: Config, out: Path):
    rng = np.random.default_rng(cfg.run.seed)
    x, y = load_data(cfg)
    model = build_model(cfg)
    schedule = build_schedule(cfg)
    store = ParamStore(init_params(model.n_params, rng, cfg.model.init_scale))
    log.info("training %s with %d parameters on %d images", cfg.model.kind, model.n_params, len(x))
    o = cfg.optimizer
    store, history = train(
        model, store, x, y if cfg.model.guided else None, schedule, o.lr, o.epochs, o.batch_size, rng, wrap=o.remap
    )
    losses = out / "losses.csv"
    artifacts.write_csv(losses, ["run_id", "epoch", "loss"], [(run_id(cfg, "train"), i + 1, v) for i, v in enumerate(history)])
    artifacts.save_checkpoint(out / "checkpoint.npz", store, cfg.to_dict(), schedule, rng)
    return [losses], artifacts.params_hash(store.values), {"checkpoint": "checkpoint.npz", "n_params": model.n_params}


def _trajectory(cfg: Config, model, params, labels, rng):
    n = cfg.run.n_samples
    shape = (cfg.data.size, cfg.data.size)
    if cfg.model.kind == "uss":
        u = model.unitary(params, 1)
        states = model.noise_states(n, rng, labels)

        def pixels(s):
            # optional finite-shot histogram in place of exact probabilities
            return minmax(state_pixels(s, cfg.model.n_image_qubits, shape[0] * shape[1], cfg.run.shots or None, rng))

        frames = [pixels(states)]
        for _ in range(cfg.schedule.tau):
            states = states @ u.T
            frames.append(pixels(states))
        return np.stack(frames).reshape((cfg.schedule.tau + 1, n) + shape)
    return sample(model, params, build_schedule(cfg), n, shape, labels, rng)


def class_means(x, y, n_classes):
    return np.stack([x[y == c].mean(axis=0) if np.any(y == c) else x.mean(axis=0) for c in range(n_classes)])


def _reference_for(cfg: Config, labels, n):
    x, y = load_data(cfg)
    if labels is None:
        return x, np.repeat(x.mean(axis=0)[None], n, axis=0)
    means = class_means(x, y, cfg.model.classes)
    return x, means[labels]


def cmd_sample(cfg: Config, out: Path):
    ckpt = _checkpoint(cfg)
    rng = np.random.default_rng(cfg.run.seed)
    model = build_model(cfg)
    labels = sample_labels(cfg, cfg.run.n_samples)
    traj = _trajectory(cfg, model, ckpt["store"].values, labels, rng)
    ref_set, refs = _reference_for(cfg, labels, cfg.run.n_samples)
    rid = run_id(cfg, "sample")
    rows = []
    for k in range(1, len(traj)):
        frame = traj[k]
        rows.append((rid, k, "ssim", float(np.mean([ssim(a, b) for a, b in zip(frame, refs)]))))
        rows.append((rid, k, "psnr", float(np.mean([psnr(a, b) for a, b in zip(frame, refs)]))))
        if min(len(frame), len(ref_set)) > cfg.run.feature_dim:
            rows.append((rid, k, "fid_proxy", frechet_distance(frame, ref_set, cfg.run.feature_dim)))
    metrics = out / "metrics.csv"
    artifacts.write_csv(metrics, ["run_id", "tau", "metric", "value"], rows)
    strip = out / "trajectory.png"
    artifacts.write_png(strip, np.swapaxes(traj, 0, 1))
    samples = out / "samples.npy"
    np.save(samples, traj[-1])
    return [metrics, strip, samples], artifacts.params_hash(ckpt["store"].values), {}


def cmd_compose(cfg: Config, out: Path):
    if cfg.model.kind != "uss":
        raise CommandError("model.kind: compose needs a single-sampling (uss) model")
    ckpt = _checkpoint(cfg)
    model = build_model(cfg)
    params = ckpt["store"].values
    labels = range(cfg.model.classes) if cfg.model.reuploads else [None]
    paths = []
    for label in labels:
        t0 = time.perf_counter()
        u = model.unitary(params, cfg.schedule.tau, label)
        log.info("composed %dx%d matrix for tau=%d in %.3f s", len(u), len(u), cfg.schedule.tau, time.perf_counter() - t0)
        name = "unitary.qdum" if label is None else f"unitary_class{label}.qdum"
        save_unitary(out / name, u, cfg.schedule.tau)
        paths.append(out / name)
    return paths, artifacts.params_hash(params), {}


def cmd_eval(cfg: Config, out: Path):
    if not cfg.run.samples:
        raise CommandError("run.samples: no sample file given (use --samples)")
    samples = np.load(cfg.run.samples)
    refs, _ = load_data(cfg)
    rid = run_id(cfg, "eval")
    flat_refs = refs.reshape(len(refs), -1)
    best_ssim, best_psnr = [], []
    for s in samples:
        best_ssim.append(max(ssim(s, r) for r in refs))
        best_psnr.append(max(psnr(s, r) for r in refs))
    rows = [
        (rid, cfg.schedule.tau, "ssim_nearest", float(np.mean(best_ssim))),
        (rid, cfg.schedule.tau, "psnr_nearest", float(np.mean(best_psnr))),
    ]
    if min(len(samples), len(flat_refs)) > cfg.run.feature_dim:
        rows.append((rid, cfg.schedule.tau, "fid_proxy", frechet_distance(samples, refs, cfg.run.feature_dim)))
    metrics = out / "metrics.csv"
    artifacts.write_csv(metrics, ["run_id", "tau", "metric", "value"], rows)
    return [metrics], None, {}


def cmd_inpaint(cfg: Config, out: Path):
    ckpt = _checkpoint(cfg)
    rng = np.random.default_rng(cfg.run.seed)
    model = build_model(cfg)
    schedule = build_schedule(cfg)
    x, y = load_data(cfg, limit=cfg.run.n_inpaint)
    known = bottom_half_mask(cfg.data.size, cfg.data.size)
    rid = run_id(cfg, "inpaint")
    rows, tiles = [], []
    for i, (img, label) in enumerate(zip(x, y)):
        result, err, start = inpaint(
            model, ckpt["store"].values, img, known, schedule, cfg.run.reset_each_step,
            int(label) if cfg.model.guided else None, rng,
        )
        base = masked_mse(start, img, ~known)
        rows.append((rid, i, err, base))
        tiles.append([img, start, result])
    table = out / "inpaint.csv"
    artifacts.write_csv(table, ["run_id", "image", "unknown_mse", "noise_baseline_mse"], rows)
    grid = out / "inpaint.png"
    artifacts.write_png(grid, np.asarray(tiles))
    wins = np.mean([r[2] < r[3] for r in rows])
    log.info("inpainting beat the noise baseline on %.0f%% of %d images", 100 * wins, len(rows))
    return [table, grid], artifacts.params_hash(ckpt["store"].values), {}


HANDLERS = {"train": cmd_train, "sample": cmd_sample, "compose": cmd_compose, "eval": cmd_eval, "inpaint": cmd_inpaint}


def execute(command: str, cfg: Config, out_dir) -> dict:
    """Run ``command`` and write its manifest; returns the manifest."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs, digest, extra = HANDLERS[command](cfg, out)
    return artifacts.write_manifest(out / "manifest.json", command, cfg.to_dict(), cfg.run.seed, digest, outputs, extra)


def replay(manifest_path, out_dir) -> tuple[bool, dict]:
    old = artifacts.read_manifest(manifest_path)
    cfg = from_dict(old["config"])
    new = execute(old["command"], cfg, out_dir)
    same = new["outputs"] == old["outputs"] and new["params_sha256"] == old["params_sha256"]
    return same, new


# ---------------------------------------------------------------------------


def resolve_config(args) -> Config:
    cfg = preset(args.preset) if args.preset else Config()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides: dict[str, dict[str, str]] = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        overrides.setdefault(section, {})[name] = value
    apply_overrides(cfg, overrides)
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.tau is not None:
        cfg.schedule.tau = args.tau
    if getattr(args, "checkpoint", None):
        cfg.run.checkpoint = str(Path(args.checkpoint).resolve())
    if getattr(args, "samples", None):
        cfg.run.samples = str(Path(args.samples).resolve())
    return cfg


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdiffusion", description="Quantum denoising diffusion experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--config", help="INI experiment file")
        p.add_argument("--preset", help="start from a named preset")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--tau", type=int)
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
        if name in ("sample", "compose", "inpaint"):
            p.add_argument("--checkpoint")
        if name == "eval":
            p.add_argument("--samples")
    p = sub.add_parser("replay", parents=[common], help="rerun a manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True)
    sub.add_parser("presets", help="list presets")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "presets":
            for name in sorted(PRESETS):
                m = PRESETS[name]["model"]
                print(f"{name:32s} {m['kind']:7s} layers={m['layers']:<4d} lr={PRESETS[name]['optimizer']['lr']}")
            return 0
        if args.command == "replay":
            same, _ = replay(args.manifest, args.out_dir)
            print("replay: outputs identical" if same else "replay: OUTPUTS DIFFER")
            return 0 if same else 1
        cfg = resolve_config(args)
        manifest = execute(args.command, cfg, args.out_dir)
        for name, digest in manifest["outputs"].items():
            print(f"{name}  {digest[:16]}")
        return 0
    except (ConfigError, CommandError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
