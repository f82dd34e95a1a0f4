"""Deterministic reference: binary-activation EP with gradient-flow dynamics.

Neurons carry a real internal state ``s`` and emit ``rho(s)`` in {0, 1}. The
energy is the Hopfield form ``sum s^2 - sum W rho rho - sum b rho`` (note the
minus signs, opposite to the Ising convention), relaxed by explicit Euler
steps from an all-ones state. The weight update is therefore positive::

    dW_ij = +(1/beta) * (rho_i rho_j |nudge - rho_i rho_j |free)

Inputs are clamped and enter the hidden layer as ``x @ W_input``.

The surrogate derivative ``rho'`` is an indicator window. With the (0, 1)
window a state that drops below zero only leaks back towards zero and can
never switch on again, so hidden units can be turned off by the nudge but
never on, and training collapses. The default configuration therefore uses
a window centred on the threshold, (-0.5, 0.5); ``rho_prime`` itself keeps
(0, 1) as its default.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import Dataset
from .eqprop import EpochMetrics, sgd_step
from .networks import DetArchitecture, DetParameters, readout

STABLE_STEPS = 5


class NumericError(FloatingPointError):
    pass


def rho(s):
    """Heaviside step: 0 for s < 0, 1 otherwise (so rho(0) = 1)."""
    return (np.asarray(s) >= 0).astype(np.float64)


def rho_prime(s, window: tuple[float, float] = (0.0, 1.0)):
    """Surrogate derivative: 1 strictly inside ``window``, 0 elsewhere (edges excluded)."""
    s = np.asarray(s)
    return ((s > window[0]) & (s < window[1])).astype(np.float64)


@dataclass(frozen=True)
class DetConfig:
    T: int = 30
    K: int = 50
    dt: float = 0.5
    beta: float = 2.0
    lr_w: float = 0.1
    lr_b: float = 0.01
    epochs: int = 50
    seed: int = 0
    gate_nudge: bool = False  # multiply the output nudge by rho'(y)
    window: tuple[float, float] = (-0.5, 0.5)  # where rho' is 1

    def __post_init__(self):
        if not 0 < self.dt <= 1:
            raise ValueError("dt must lie in (0, 1]")
        if self.T < 1 or self.K < 1:
            raise ValueError("T and K must be >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.lr_w <= 0 or self.lr_b <= 0:
            raise ValueError("learning rates must be positive")
        if not self.window[0] < 0 <= self.window[1]:
            raise ValueError("window must contain the threshold: lo < 0 <= hi")


@dataclass
class DetState:
    hidden: np.ndarray  # (..., n_hidden)
    output: np.ndarray  # (..., n_outputs)
    # activations unchanged over the last STABLE_STEPS steps. States saturated
    # above the window bounce under Euler steps, so |ds| itself need not vanish.
    converged: np.ndarray | bool = True

    @classmethod
    def ones(cls, arch: DetArchitecture, batch: int | None = None) -> "DetState":
        lead = () if batch is None else (batch,)
        return cls(np.ones(lead + (arch.n_hidden,)), np.ones(lead + (arch.n_outputs,)))


def relax(state: DetState, params: DetParameters, x, targets=None, beta: float = 0.0,
          steps: int = 30, dt: float = 0.5, gate_nudge: bool = False,
          window: tuple[float, float] = (0.0, 1.0)) -> DetState:
    """Euler-integrate the gradient flow for ``steps`` steps.

    ``x`` is one input (n_inputs,) or a batch (B, n_inputs) matching the
    state's leading shape. With ``beta > 0`` the outputs also feel
    ``-beta * (rho(y) - targets)``, optionally gated by ``rho'(y)``.
    """
    if beta < 0 or (beta > 0) != (targets is not None):
        raise ValueError("use beta=0 without targets (free) or beta>0 with targets (nudge)")
    drive = np.asarray(x, dtype=np.float64) @ params.W_input + params.b_hidden
    s, y = state.hidden.astype(np.float64), state.output.astype(np.float64)
    stable = np.zeros(s.shape[:-1], dtype=np.int64)
    for _ in range(steps):
        rs, ry = rho(s), rho(y)
        gy = rho_prime(y, window)
        ds = -s + rho_prime(s, window) * (drive + ry @ params.W_hidden_output.T)
        dy = -y + gy * (rs @ params.W_hidden_output + params.b_output)
        if beta > 0:
            pull = ry - targets
            dy = dy - beta * (gy * pull if gate_nudge else pull)
        s = s + dt * ds
        y = y + dt * dy
        same = np.all(rho(s) == rs, axis=-1) & np.all(rho(y) == ry, axis=-1)
        stable = np.where(same, stable + 1, 0)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
        raise NumericError("relaxation produced non-finite states")
    return DetState(s, y, stable >= min(STABLE_STEPS, steps))


def det_gradient(free: DetState, nudge: DetState, beta: float, x) -> dict:
    """Contrastive updates for one example, keyed like DetParameters."""
    h0, hb = rho(free.hidden), rho(nudge.hidden)
    y0, yb = rho(free.output), rho(nudge.output)
    x = np.asarray(x, dtype=np.float64)
    return {
        "W_input": np.outer(x, hb - h0) / beta,
        "b_hidden": (hb - h0) / beta,
        "W_hidden_output": (np.outer(hb, yb) - np.outer(h0, y0)) / beta,
        "b_output": (yb - y0) / beta,
    }


def det_targets(label: int, arch: DetArchitecture) -> np.ndarray:
    """Activation-space targets: 1 on the label's units, 0 elsewhere."""
    t = np.zeros((arch.n_classes, arch.spins_per_class))
    t[label] = 1.0
    return t.ravel()


def det_update(params: DetParameters, grads: dict, cfg: DetConfig) -> DetParameters:
    lrs = {"W_input": cfg.lr_w, "W_hidden_output": cfg.lr_w, "b_hidden": cfg.lr_b, "b_output": cfg.lr_b}
    return sgd_step(params, grads, lrs)


def _scores(outputs: np.ndarray, labels, arch: DetArchitecture):
    act = rho(outputs)
    correct, sq = 0, 0.0
    for a, label in zip(act, labels):
        correct += readout(a, arch.n_classes, arch.spins_per_class) == int(label)
        d = a - det_targets(int(label), arch)
        sq += float(d @ d)
    return correct, sq


def det_evaluate(dataset: Dataset, params: DetParameters, arch: DetArchitecture, cfg: DetConfig):
    """Free relaxation of the whole set at once; returns (accuracy %, mse, unconverged count)."""
    n = len(dataset)
    if n == 0:
        return float("nan"), float("nan"), 0
    st = relax(DetState.ones(arch, n), params, dataset.images, steps=cfg.T, dt=cfg.dt, window=cfg.window)
    correct, sq = _scores(st.output, dataset.labels, arch)
    return 100.0 * correct / n, sq / n, int(np.sum(~st.converged))


def det_train_epoch(dataset: Dataset, params: DetParameters, arch: DetArchitecture, cfg: DetConfig,
                    epoch: int, test: Dataset | None = None):
    """Same loop shape as the annealed trainer, with relaxation in place of sampling."""
    start = time.perf_counter()
    order = np.random.default_rng([cfg.seed, epoch]).permutation(len(dataset))
    correct, sq, skipped, unconverged = 0, 0.0, 0, 0
    for i in order:
        x, label = dataset.images[i], int(dataset.labels[i])
        target = det_targets(label, arch)
        free = relax(DetState.ones(arch), params, x, steps=cfg.T, dt=cfg.dt, window=cfg.window)
        unconverged += not bool(free.converged)
        c, e = _scores(free.output[None], [label], arch)
        correct += c
        sq += e
        if np.array_equal(rho(free.output), target):
            skipped += 1
            continue
        nudge = relax(free, params, x, target, cfg.beta, steps=cfg.K, dt=cfg.dt,
                      gate_nudge=cfg.gate_nudge, window=cfg.window)
        params = det_update(params, det_gradient(free, nudge, cfg.beta, x), cfg)
    n = max(len(dataset), 1)
    test_acc, test_mse = float("nan"), float("nan")
    if test is not None:
        test_acc, test_mse, _ = det_evaluate(test, params, arch, cfg)
    return params, EpochMetrics(
        epoch=epoch,
        train_acc=100.0 * correct / n,
        test_acc=test_acc,
        train_mse=sq / n,
        test_mse=test_mse,
        nudges_skipped=skipped,
        wall_seconds=time.perf_counter() - start,
        unconverged=unconverged,
    )


def det_train(train: Dataset, test: Dataset | None, params: DetParameters, arch: DetArchitecture,
              cfg: DetConfig, on_epoch: Callable[[int, object, EpochMetrics], None] | None = None):
    """Train for ``cfg.epochs`` epochs; returns (params, history)."""
    if train.images.shape[1] != arch.n_inputs:
        raise ValueError(f"inputs have {train.images.shape[1]} features, architecture expects {arch.n_inputs}")
    history = []
    for epoch in range(1, cfg.epochs + 1):
        params, m = det_train_epoch(train, params, arch, cfg, epoch, test)
        history.append(m)
        if on_epoch is not None:
            on_epoch(epoch, params, m)
    return params, history
