"""Command-line entry point: ``ising-ep {train,eval,energy-dist,dump-problem}``.

Exit codes: 0 ok, 1 runtime failure (missing data, unreadable checkpoint,
architecture mismatch), 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .annealer import SamplerConfig, default_schedules, energy_distribution
from .config import ConfigError, RunConfig, build_config, load_config, parse_overrides, parse_text
from .data import MNIST_FILES, Dataset, load_mnist, make_subset, patterns_3x3
from .deterministic import DetConfig, det_evaluate, det_train_epoch
from .eqprop import (
    EVAL,
    METRIC_COLUMNS,
    AnnealingSampler,
    BruteForceSampler,
    TrainConfig,
    derive_seed,
    evaluate,
    make_model,
    train_epoch,
)
from .ising import MAX_BRUTEFORCE_SPINS, dumps_problem
from .networks import (
    ConvArchitecture,
    ConvParameters,
    DetArchitecture,
    DetParameters,
    FcArchitecture,
    FcParameters,
    build_conv_problem,
    build_fc_problem,
    conv_embedding,
    load_checkpoint,
    save_checkpoint,
)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
ENERGY_SEED_TAG = 4


class RunError(RuntimeError):
    """Runtime failure; the CLI maps it to exit code 1."""


# ---------------------------------------------------------------------------
# wiring config -> objects


def load_data(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    if cfg["task"] == "conv-patterns":
        ds = patterns_3x3()
        return ds, ds
    try:
        train_full, test_full = load_mnist(cfg["data.dir"])
        return make_subset(train_full, test_full, cfg["data.train_per_class"], cfg["data.test_per_class"])
    except (OSError, ValueError) as exc:
        raise RunError(f"cannot load MNIST from {cfg['data.dir']}: {exc}") from exc


def make_architecture(cfg: RunConfig):
    if cfg["task"] == "conv-patterns":
        return ConvArchitecture(
            pool_coef=cfg["conv.pool_coef"],
            chain_strength=cfg["conv.chain_strength"],
            filter_scale=cfg["conv.filter_scale"],
            class_scale=cfg["conv.class_scale"],
            input_bias_magnitude=cfg["conv.input_bias_magnitude"],
            j_range=cfg["conv.j_range"],
            h_range=cfg["conv.h_range"],
        )
    if cfg["sampler"] == "deterministic":
        return DetArchitecture(n_hidden=cfg["fc.n_hidden"], spins_per_class=cfg["fc.spins_per_class"])
    return FcArchitecture(
        n_hidden=cfg["fc.n_hidden"],
        spins_per_class=cfg["fc.spins_per_class"],
        input_scale=cfg["fc.input_scale"],
        chip_scale=cfg["fc.chip_scale"],
        j_range=cfg["fc.j_range"],
        h_range=cfg["fc.h_range"],
    )


def init_parameters(arch, seed: int):
    rng = np.random.default_rng(seed)
    kinds = {"fc": FcParameters, "conv": ConvParameters, "det": DetParameters}
    return kinds[arch.kind].init(arch, rng)


def ising_problem(arch, params, x):
    """The physical Ising problem an image poses (conv: the embedded one)."""
    if arch.kind == "fc":
        return build_fc_problem(arch, params, x)[0]
    if arch.kind == "conv":
        return build_conv_problem(arch, params, x).physical
    raise RunError("the deterministic network has no Ising problem")


def anneal_scale(arch, params, train: Dataset) -> float:
    """Largest |J| or |h| of the first training problem; fixes the temperature range."""
    return ising_problem(arch, params, train.images[0]).max_abs_parameter()


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        beta=cfg["train.beta"],
        lr_w=cfg["train.lr_w"],
        lr_b=cfg["train.lr_b"],
        epochs=cfg["train.epochs"],
        skip_nudge=cfg["train.skip_nudge"],
        clip=cfg["train.clip"],
        seed=cfg["seed"],
        conv_sign=cfg["train.conv_sign"],
        sampler_seed=cfg["annealer.seed"],
    )


def det_config(cfg: RunConfig) -> DetConfig:
    return DetConfig(
        T=cfg["det.T"], K=cfg["det.K"], dt=cfg["det.dt"], beta=cfg["train.beta"],
        lr_w=cfg["train.lr_w"], lr_b=cfg["train.lr_b"], epochs=cfg["train.epochs"],
        seed=cfg["seed"], gate_nudge=cfg["det.gate_nudge"], window=cfg["det.window"],
    )


def schedules(cfg: RunConfig, scale: float):
    return default_schedules(
        scale,
        t_hot_factor=cfg["annealer.t_hot_factor"],
        t_cold=cfg["annealer.t_cold"],
        n_sweeps=cfg["annealer.n_sweeps"],
        reverse_fraction=cfg["annealer.reverse_fraction"],
        n_sweeps_reverse=cfg["annealer.n_sweeps_reverse"],
    )


def make_sampler(cfg: RunConfig, arch, scale: float):
    if cfg["sampler"] == "bruteforce":
        n = arch.n_spins if arch.kind == "fc" else arch.graph().n_spins
        if n > MAX_BRUTEFORCE_SPINS:
            raise ConfigError(f"bruteforce sampler handles <= {MAX_BRUTEFORCE_SPINS} spins, this network has {n}")
        return BruteForceSampler()
    fwd, rev = schedules(cfg, scale)
    return AnnealingSampler(SamplerConfig(cfg["annealer.n_reads"], cfg["seed"], fwd, rev))


# ---------------------------------------------------------------------------
# run directory


@dataclass
class Trainer:
    """Everything one training run needs; usable without the CLI."""

    cfg: RunConfig
    train: Dataset
    test: Dataset
    arch: Any
    params: Any
    scale: float

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "Trainer":
        train, test = load_data(cfg)
        arch = make_architecture(cfg)
        params = init_parameters(arch, cfg["seed"])
        scale = 0.0 if arch.kind == "det" else anneal_scale(arch, params, train)
        return cls(cfg, train, test, arch, params, scale)

    def epochs(self):
        """Yield (epoch, params, metrics) for each epoch."""
        if self.arch.kind == "det":
            dcfg = det_config(self.cfg)
            params = self.params
            for epoch in range(1, dcfg.epochs + 1):
                params, m = det_train_epoch(self.train, params, self.arch, dcfg, epoch, self.test)
                yield epoch, params, m
            return
        tcfg = train_config(self.cfg)
        sampler = make_sampler(self.cfg, self.arch, self.scale)
        model = make_model(self.arch, tcfg)
        params = self.params
        for epoch in range(1, tcfg.epochs + 1):
            params, m = train_epoch(self.train, params, model, tcfg, sampler, epoch, self.test)
            yield epoch, params, m


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def data_fingerprint(cfg: RunConfig) -> dict[str, str]:
    if cfg["task"] == "conv-patterns":
        return {"patterns_3x3": hashlib.sha256(patterns_3x3().images.tobytes()).hexdigest()}
    out = {}
    for img, lab in MNIST_FILES.values():
        for name in (img, lab):
            for cand in (Path(cfg["data.dir"]) / name, Path(cfg["data.dir"]) / f"{name}.gz"):
                if cand.exists():
                    out[cand.name] = _sha256(cand)
                    break
    return out


def manifest(cfg: RunConfig, scale: float) -> dict:
    return {
        "config": cfg.as_text(),
        "seed": cfg["seed"],
        "anneal_scale": scale,
        "data": data_fingerprint(cfg),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _checkpoint(out: Path, name: str, trainer: Trainer, params, epoch: int) -> Path:
    path = out / "checkpoints" / f"{name}.npz"
    save_checkpoint(path, trainer.arch, params, epoch=epoch, anneal_scale=trainer.scale,
                    config=trainer.cfg.as_text())
    return path


def _prepare_out(out: Path, force: bool, marker: str) -> None:
    if (out / marker).exists() and not force:
        raise ConfigError(f"{out / marker} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)


def run_train(cfg: RunConfig, force: bool = False, log=print) -> Path:
    """Train and write manifest, metrics.csv, timing.csv and checkpoints under output_dir."""
    out = Path(cfg["output_dir"])
    _prepare_out(out, force, "metrics.csv")
    trainer = Trainer.from_config(cfg)
    (out / "checkpoints").mkdir(exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest(cfg, trainer.scale), indent=2, sort_keys=True) + "\n")
    _checkpoint(out, "checkpoint_000", trainer, trainer.params, 0)
    every = cfg["train.checkpoint_every"]
    with open(out / "metrics.csv", "w", newline="") as fm, open(out / "timing.csv", "w", newline="") as ft:
        metrics = csv.writer(fm)
        timing = csv.writer(ft)
        metrics.writerow(METRIC_COLUMNS)
        timing.writerow(["epoch", "wall_seconds"])
        params, epoch = trainer.params, 0
        for epoch, params, m in trainer.epochs():
            row = m.as_row()
            if not cfg["train.wall_clock"]:
                row["wall_seconds"] = 0.0
            metrics.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
            timing.writerow([epoch, f"{m.wall_seconds:.3f}"])
            fm.flush()
            ft.flush()
            if every and epoch % every == 0:
                _checkpoint(out, f"checkpoint_{epoch:03d}", trainer, params, epoch)
            log(
                f"epoch {epoch:3d}  train {m.train_acc:5.1f}%  test {m.test_acc:5.1f}%  "
                f"mse {m.train_mse:.3f}/{m.test_mse:.3f}  skipped {m.nudges_skipped}  {m.wall_seconds:.1f}s"
            )
    _checkpoint(out, "checkpoint_final", trainer, params, epoch)
    return out


# ---------------------------------------------------------------------------
# checkpoint consumers


def checkpoint_config(meta: dict, *layers: dict) -> RunConfig:
    """The run's stored config with later layers applied on top."""
    stored = parse_text(meta.get("config", ""), "checkpoint")
    return build_config(stored, *layers)


def read_checkpoint(path):
    try:
        return load_checkpoint(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise RunError(f"cannot read checkpoint {path}: {exc}") from exc


def run_eval(checkpoint, cfg_layers: list[dict], split: str = "test") -> dict:
    arch, params, meta = read_checkpoint(checkpoint)
    cfg = checkpoint_config(meta, *cfg_layers)
    train, test = load_data(cfg)
    ds = test if split == "test" else train
    if arch.kind == "det":
        acc, mse, _ = det_evaluate(ds, params, arch, det_config(cfg))
    else:
        scale = float(meta.get("anneal_scale", 0.0)) or anneal_scale(arch, params, train)
        sampler = make_sampler(cfg, arch, scale)
        acc, mse = evaluate(ds, params, make_model(arch, train_config(cfg)), sampler,
                            derive_seed(cfg["seed"], EVAL))
    record = {"checkpoint": str(checkpoint), "split": split, "n": len(ds), "accuracy": acc, "mse": mse,
              "epoch": meta.get("epoch"), "seed": cfg["seed"]}
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return record


def _write_hist(path: Path, counts, edges) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def run_energy_dist(checkpoint_a, checkpoint_b, cfg_layers: list[dict]) -> dict:
    """Energy histograms of one test image under two checkpoints (before/after training).

    Both use the forward schedule of checkpoint A and the same seed.
    """
    arch_a, params_a, meta_a = read_checkpoint(checkpoint_a)
    arch_b, params_b, _ = read_checkpoint(checkpoint_b)
    if arch_a != arch_b:
        raise RunError("checkpoints have different architectures")
    cfg = checkpoint_config(meta_a, *cfg_layers)
    _, test = load_data(cfg)
    idx = cfg["energy.image_index"]
    if idx >= len(test):
        raise ConfigError(f"energy.image_index {idx} outside the test set of {len(test)}")
    x = test.images[idx]
    scale = float(meta_a.get("anneal_scale", 0.0)) or ising_problem(arch_a, params_a, x).max_abs_parameter()
    fwd, _ = schedules(cfg, scale)
    seed = derive_seed(cfg["seed"], ENERGY_SEED_TAG, idx)
    n, bins = cfg["energy.n_samples"], cfg["energy.bins"]
    before = energy_distribution(ising_problem(arch_a, params_a, x), n, fwd, seed, bins)
    after = energy_distribution(ising_problem(arch_b, params_b, x), n, fwd, seed, bins)
    lo = min(before.energies.min(), after.energies.min())
    hi = max(before.energies.max(), after.energies.max())
    hist_range = (float(lo), float(hi)) if hi > lo else (float(lo) - 0.5, float(hi) + 0.5)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for name, stats in (("before", before), ("after", after)):
        counts, edges = np.histogram(stats.energies, bins=bins, range=hist_range)
        _write_hist(out / f"energy_{name}.csv", counts, edges)
    summary = {
        "checkpoint_before": str(checkpoint_a),
        "checkpoint_after": str(checkpoint_b),
        "image_index": idx,
        "n_samples": n,
        "mean_before": before.mean,
        "std_before": before.std,
        "mean_after": after.mean,
        "std_after": after.std,
        "std_after_smaller": bool(after.std < before.std),
    }
    (out / "energy_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def run_dump_problem(checkpoint, cfg_layers: list[dict], image_index: int, split: str = "test") -> Path:
    arch, params, meta = read_checkpoint(checkpoint)
    cfg = checkpoint_config(meta, *cfg_layers)
    train, test = load_data(cfg)
    ds = test if split == "test" else train
    if not 0 <= image_index < len(ds):
        raise ConfigError(f"image index {image_index} outside the {split} set of {len(ds)}")
    problem = ising_problem(arch, params, ds.images[image_index])
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"problem_{split}_{image_index:05d}.txt"
    path.write_text(dumps_problem(problem))
    if arch.kind == "conv":
        (out / "embedding.txt").write_text(conv_embedding(arch)[1].dumps())
    return path


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--data-dir", help="directory with the MNIST IDX files (data.dir)")
    common.add_argument("--out", help="output directory (output_dir)")
    common.add_argument("--seed", type=int, help="run seed (seed)")
    common.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; repeatable")

    ap = argparse.ArgumentParser(prog="ising-ep", description="Equilibrium Propagation on a software Ising machine.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train a network and write metrics/checkpoints")
    p = sub.add_parser("eval", parents=[common], help="accuracy and MSE of a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--split", choices=("test", "train"), default="test")
    p = sub.add_parser("energy-dist", parents=[common], help="energy histograms before/after training")
    p.add_argument("checkpoint_before", type=Path)
    p.add_argument("checkpoint_after", type=Path)
    p.add_argument("--image-index", type=int)
    p.add_argument("--n-samples", type=int)
    p = sub.add_parser("dump-problem", parents=[common], help="write the Ising problem of one image")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--image-index", type=int, default=0)
    p.add_argument("--split", choices=("test", "train"), default="test")
    return ap


def _flag_overrides(args) -> dict:
    over = parse_overrides(args.set)
    if args.data_dir is not None:
        over["data.dir"] = args.data_dir
    if args.out is not None:
        over["output_dir"] = args.out
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "image_index", None) is not None and args.command == "energy-dist":
        over["energy.image_index"] = args.image_index
    if getattr(args, "n_samples", None) is not None:
        over["energy.n_samples"] = args.n_samples
    return over


def _file_layer(path) -> dict:
    if path is None:
        return {}
    try:
        return parse_text(Path(path).read_text(), str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        over = _flag_overrides(args)
        if args.command == "train":
            cfg = load_config(args.config, over)
            run_train(cfg, force=args.force)
            return EXIT_OK
        layers = [_file_layer(args.config), over]
        if args.command == "eval":
            rec = run_eval(args.checkpoint, layers, args.split)
            print(f"accuracy {rec['accuracy']:.2f}%  mse {rec['mse']:.4f}  ({rec['n']} {rec['split']} images)")
        elif args.command == "energy-dist":
            s = run_energy_dist(args.checkpoint_before, args.checkpoint_after, layers)
            print(f"std before {s['std_before']:.4f}  after {s['std_after']:.4f}  "
                  f"smaller after: {s['std_after_smaller']}")
        else:
            print(run_dump_problem(args.checkpoint, layers, args.image_index, args.split))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted; metrics written so far are kept", file=sys.stderr)
        return EXIT_RUNTIME
    except (RunError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
