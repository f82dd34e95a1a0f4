"""Equilibrium Propagation on an Ising sampler.

One training step: free phase on the input-conditioned problem, nudge phase
on the same problem with ``-beta * target`` added to the output biases
(reverse annealing from the free state), then contrastive updates from the
two states. Under the +J energy convention the coupling update is::

    dJ_ij = -(1/beta) * (s_i s_j |nudge - s_i s_j |free)

and ``params += lr * d / scale`` followed by clipping to the chip ranges.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, fields, replace
from typing import Callable, Protocol

import numpy as np

from .annealer import SamplerConfig, sample_best
from .data import Dataset
from .ising import IsingProblem, apply_nudge, ground_state_bruteforce
from .networks import (
    ConvArchitecture,
    ConvParameters,
    FcArchitecture,
    FcParameters,
    build_conv_problem,
    build_fc_problem,
    readout,
    target_spins,
)
from .topology import unembed

FREE, NUDGE, EVAL = 0, 1, 2


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 2.0
    lr_w: float = 1e-2
    lr_b: float = 1e-3
    epochs: int = 50
    skip_nudge: bool = True
    clip: bool = True
    seed: int = 0  # shuffling; also the sampler seed unless sampler_seed is set
    conv_sign: int = -1
    sampler_seed: int | None = None

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive (it divides the gradient)")
        if self.lr_w <= 0 or self.lr_b <= 0:
            raise ValueError("learning rates must be positive")
        if self.conv_sign not in (-1, 1):
            raise ValueError("conv_sign must be +1 or -1")
        if self.seed < 0 or (self.sampler_seed is not None and self.sampler_seed < 0):
            raise ValueError("seeds must be non-negative")

    @property
    def base_sampler_seed(self) -> int:
        return self.seed if self.sampler_seed is None else self.sampler_seed


@dataclass
class EpochMetrics:
    epoch: int
    train_acc: float
    test_acc: float
    train_mse: float
    test_mse: float
    nudges_skipped: int
    wall_seconds: float
    unconverged: int = 0  # deterministic free relaxations whose activations had not settled

    def as_row(self) -> dict:
        return asdict(self)


METRIC_COLUMNS = [f.name for f in fields(EpochMetrics)]


# ---------------------------------------------------------------------------
# samplers


class Sampler(Protocol):
    def free(self, problem: IsingProblem, seed: int) -> np.ndarray: ...

    def nudge(self, problem: IsingProblem, initial: np.ndarray, seed: int) -> np.ndarray: ...


class AnnealingSampler:
    """Best-of-``n_reads`` forward anneals (free) and reverse anneals (nudge)."""

    def __init__(self, cfg: SamplerConfig):
        self.cfg = cfg

    def free(self, problem, seed):
        return sample_best(problem, "free", None, self.cfg.with_seed(seed)).state

    def nudge(self, problem, initial, seed):
        return sample_best(problem, "nudge", initial, self.cfg.with_seed(seed)).state


class BruteForceSampler:
    """Exact ground states; the nudge phase ignores its starting state."""

    def free(self, problem, seed):
        return ground_state_bruteforce(problem).state

    def nudge(self, problem, initial, seed):
        return ground_state_bruteforce(problem).state


def free_phase(problem: IsingProblem, sampler: Sampler, seed: int) -> np.ndarray:
    return sampler.free(problem, seed)


def nudge_phase(problem, free_state, output_indices, targets, beta, sampler: Sampler, seed: int):
    nudged = apply_nudge(problem, output_indices, targets, beta)
    return sampler.nudge(nudged, free_state, seed)


# ---------------------------------------------------------------------------
# gradients


def fc_gradients(free, nudge, beta: float, hidden_idx, output_idx):
    """Contrastive updates for a layered hidden/output problem.

    Returns ``(dJ, dh)``: ``dJ`` has shape (n_hidden, n_outputs), ``dh``
    covers every spin of the problem.
    """
    s0 = np.asarray(free, dtype=np.float64)
    sb = np.asarray(nudge, dtype=np.float64)
    dJ = -(np.outer(sb[hidden_idx], sb[output_idx]) - np.outer(s0[hidden_idx], s0[output_idx])) / beta
    dh = -(sb - s0) / beta
    return dJ, dh


def input_weight_gradient(dh_hidden, x, input_scale: float = 1.0) -> np.ndarray:
    """Update for the off-chip input matrix, in master-parameter units."""
    return np.outer(np.asarray(x, dtype=np.float64), dh_hidden) / input_scale


def conv_gradient(free_logical, nudge_logical, beta: float, arch: ConvArchitecture, sign: int = -1):
    """Filter update summed over the four patches that share each filter."""
    layout = arch.layout

    def corr(s):
        s = np.asarray(s, dtype=np.float64)
        x = s[layout.inputs]  # (patches, kernel*kernel)
        h = s[layout.conv]  # (patches, filters)
        return np.einsum("pf,pk->fk", h, x)

    d = sign * (corr(nudge_logical) - corr(free_logical)) / beta
    return d.reshape(arch.n_filters, arch.kernel, arch.kernel)


def sgd_step(params, grads: dict, lrs: dict, ranges: dict | None = None, scales: dict | None = None):
    """``p += lr * g / scale`` per named tensor, then clip to ``range / scale``.

    ``ranges`` are chip ranges; a missing or None entry means no clipping.
    """
    ranges = ranges or {}
    scales = scales or {}
    updated = {}
    for name, g in grads.items():
        p = getattr(params, name)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        scale = scales.get(name, 1.0)
        new = p + lrs[name] * g / scale
        rng = ranges.get(name)
        if rng is not None:
            new = np.clip(new, rng[0] / scale, rng[1] / scale)
        updated[name] = new
    return replace(params, **updated)


# ---------------------------------------------------------------------------
# architecture adapters: build a problem, read outputs, turn states into updates


class FcModel:
    def __init__(self, arch: FcArchitecture):
        self.arch = arch

    def targets(self, label):
        return target_spins(label, self.arch.n_classes, self.arch.spins_per_class)

    def build(self, params: FcParameters, x):
        problem, hidden, outputs = build_fc_problem(self.arch, params, x)
        return problem, outputs, np.asarray(x, dtype=np.float64)

    def outputs(self, state, ctx):
        return np.asarray(state)[self.arch.output_indices]

    def gradients(self, free, nudge, beta, ctx):
        a = self.arch
        dJ, dh = fc_gradients(free, nudge, beta, a.hidden_indices, a.output_indices)
        dh_hidden = dh[a.hidden_indices]
        return {
            "J_hidden_output": dJ,
            "h_bias_output": dh[a.output_indices],
            "h_bias_hidden": dh_hidden,
            "W_input": input_weight_gradient(dh_hidden, ctx, a.input_scale),
        }

    def update(self, params, grads, cfg: TrainConfig):
        a = self.arch
        lrs = {"J_hidden_output": cfg.lr_w, "W_input": cfg.lr_w, "h_bias_output": cfg.lr_b, "h_bias_hidden": cfg.lr_b}
        scales = {"J_hidden_output": a.chip_scale, "h_bias_output": a.chip_scale}
        ranges = {}
        if cfg.clip:
            ranges = {"J_hidden_output": a.j_range, "h_bias_output": a.h_range, "h_bias_hidden": a.h_range}
        return sgd_step(params, grads, lrs, ranges, scales)


class ConvModel:
    def __init__(self, arch: ConvArchitecture, sign: int = -1):
        self.arch = arch
        self.sign = sign

    def targets(self, label):
        return target_spins(label, self.arch.n_classes, self.arch.spins_per_class)

    def build(self, params: ConvParameters, x):
        cp = build_conv_problem(self.arch, params, x)
        return cp.physical, cp.output_sites, cp

    def outputs(self, state, ctx):
        return unembed(state, ctx.embedding)[ctx.layout.outputs]

    def gradients(self, free, nudge, beta, ctx):
        layout = ctx.layout
        l0 = unembed(free, ctx.embedding).astype(np.float64)
        lb = unembed(nudge, ctx.embedding).astype(np.float64)
        dW = -(np.outer(lb[layout.pool], lb[layout.outputs]) - np.outer(l0[layout.pool], l0[layout.outputs])) / beta
        return {
            "filters": conv_gradient(l0, lb, beta, self.arch, self.sign),
            "W_class": dW,
            "biases": -(lb[layout.outputs] - l0[layout.outputs]) / beta,
        }

    def update(self, params, grads, cfg: TrainConfig):
        a = self.arch
        lrs = {"filters": cfg.lr_w, "W_class": cfg.lr_w, "biases": cfg.lr_b}
        scales = {"filters": a.filter_scale, "W_class": a.class_scale, "biases": a.class_scale}
        ranges = {}
        if cfg.clip:
            ranges = {"filters": a.j_range, "W_class": a.j_range, "biases": a.h_range}
        return sgd_step(params, grads, lrs, ranges, scales)


def make_model(arch, cfg: TrainConfig | None = None):
    if isinstance(arch, FcArchitecture):
        return FcModel(arch)
    return ConvModel(arch, cfg.conv_sign if cfg else -1)


def _squared_error(out, target) -> float:
    d = np.asarray(out, dtype=np.float64) - target
    return float(d @ d)


# ---------------------------------------------------------------------------
# loops


def train_epoch(
    dataset: Dataset,
    params,
    model,
    cfg: TrainConfig,
    sampler: Sampler,
    epoch: int,
    test: Dataset | None = None,
):
    """One pass over ``dataset`` in a seeded shuffled order, batch size 1.

    Train accuracy/MSE come from the free phase of each example, before its
    update. Test metrics are filled in when ``test`` is given.
    """
    start = time.perf_counter()
    order = np.random.default_rng([cfg.seed, epoch]).permutation(len(dataset))
    correct, sq, skipped = 0, 0.0, 0
    for pos, i in enumerate(order):
        x, label = dataset.images[i], int(dataset.labels[i])
        problem, out_idx, ctx = model.build(params, x)
        target = model.targets(label)
        s0 = sampler.free(problem, derive_seed(cfg.base_sampler_seed, epoch, pos, FREE))
        out = model.outputs(s0, ctx)
        correct += readout(out, model.arch.n_classes, model.arch.spins_per_class) == label
        sq += _squared_error(out, target)
        if cfg.skip_nudge and np.array_equal(out, target):
            skipped += 1
            continue
        sb = nudge_phase(problem, s0, out_idx, target, cfg.beta, sampler, derive_seed(cfg.base_sampler_seed, epoch, pos, NUDGE))
        grads = model.gradients(s0, sb, cfg.beta, ctx)
        params = model.update(params, grads, cfg)
    n = max(len(dataset), 1)
    test_acc, test_mse = (float("nan"), float("nan"))
    if test is not None:
        test_acc, test_mse = evaluate(test, params, model, sampler, derive_seed(cfg.base_sampler_seed, epoch, EVAL))
    metrics = EpochMetrics(
        epoch=epoch,
        train_acc=100.0 * correct / n,
        test_acc=test_acc,
        train_mse=sq / n,
        test_mse=test_mse,
        nudges_skipped=skipped,
        wall_seconds=time.perf_counter() - start,
    )
    return params, metrics


def evaluate(dataset: Dataset, params, model, sampler: Sampler, seed: int) -> tuple[float, float]:
    """Free phase only; returns (accuracy in percent, mean squared output error)."""
    correct, sq = 0, 0.0
    for i in range(len(dataset)):
        problem, _, ctx = model.build(params, dataset.images[i])
        out = model.outputs(sampler.free(problem, derive_seed(seed, i)), ctx)
        label = int(dataset.labels[i])
        correct += readout(out, model.arch.n_classes, model.arch.spins_per_class) == label
        sq += _squared_error(out, model.targets(label))
    n = max(len(dataset), 1)
    return 100.0 * correct / n, sq / n


def fit(
    train: Dataset,
    test: Dataset | None,
    params,
    model,
    cfg: TrainConfig,
    sampler: Sampler,
    on_epoch: Callable[[int, object, EpochMetrics], None] | None = None,
):
    """Train for ``cfg.epochs`` epochs (numbered from 1); returns (params, history)."""
    history = []
    for epoch in range(1, cfg.epochs + 1):
        params, m = train_epoch(train, params, model, cfg, sampler, epoch, test)
        history.append(m)
        if on_epoch is not None:
            on_epoch(epoch, params, m)
    return params, history
