"""Metropolis simulated annealing with fixed temperature schedules.

Forward anneals start from a random state and cool geometrically. Reverse
anneals start from a given state, warm up to a fraction of the hot
temperature and cool back down, which lets a nudged problem move away from
the free-phase state without re-randomizing it.

Every read ``r`` of a call seeded with ``seed`` draws from its own generator
``default_rng(seed + r)``, so reads are independent of how many others run
and of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ising import IsingProblem, Sample, as_spins, energies, make_sample

FORWARD = "forward"
REVERSE = "reverse"


@dataclass(frozen=True)
class AnnealSchedule:
    kind: str
    t_hot: float
    t_cold: float = 0.01
    n_sweeps: int = 200
    reverse_fraction: float = 0.25

    def __post_init__(self):
        if self.kind not in (FORWARD, REVERSE):
            raise ValueError(f"schedule kind must be forward or reverse, got {self.kind!r}")
        if not self.t_hot > self.t_cold >= 0:
            raise ValueError("schedule requires t_hot > t_cold >= 0")
        if not 0 < self.reverse_fraction <= 1:
            raise ValueError("reverse_fraction must lie in (0, 1]")
        if self.n_sweeps < (2 if self.kind == REVERSE else 1):
            raise ValueError("n_sweeps too small for this schedule")

    def temperatures(self) -> np.ndarray:
        """Temperature of each sweep."""
        n = self.n_sweeps
        if self.kind == FORWARD:
            floor = self.t_cold if self.t_cold > 0 else self.t_hot * 1e-4
            temps = np.geomspace(self.t_hot, floor, n)
        else:
            peak = self.reverse_fraction * self.t_hot
            floor = self.t_cold if self.t_cold > 0 else peak * 1e-3
            up = n // 2
            temps = np.concatenate([np.geomspace(floor, peak, up), np.geomspace(peak, floor, n - up)])
        if self.t_cold == 0:
            temps[-1] = 0.0
        return temps


@dataclass(frozen=True)
class SamplerConfig:
    n_reads: int
    seed: int
    schedule_free: AnnealSchedule
    schedule_nudge: AnnealSchedule

    def __post_init__(self):
        if self.n_reads < 1:
            raise ValueError("n_reads must be >= 1")
        if self.schedule_free.kind != FORWARD or self.schedule_nudge.kind != REVERSE:
            raise ValueError("free schedule must be forward and nudge schedule reverse")

    def with_seed(self, seed: int) -> "SamplerConfig":
        return SamplerConfig(self.n_reads, int(seed), self.schedule_free, self.schedule_nudge)


def default_schedules(
    scale: float,
    t_hot_factor: float = 2.0,
    t_cold: float = 0.01,
    n_sweeps: int = 200,
    reverse_fraction: float = 0.25,
    n_sweeps_reverse: int | None = None,
) -> tuple[AnnealSchedule, AnnealSchedule]:
    """Forward/reverse pair with ``t_hot = t_hot_factor * scale``.

    ``scale`` is the largest absolute parameter of the problem the run starts
    from; it is computed once and the schedules stay fixed afterwards.
    """
    t_hot = max(t_hot_factor * scale, t_cold * 10, 1e-12)
    fwd = AnnealSchedule(FORWARD, t_hot, t_cold, n_sweeps, reverse_fraction)
    rev = AnnealSchedule(REVERSE, t_hot, t_cold, n_sweeps_reverse or n_sweeps, reverse_fraction)
    return fwd, rev


def _read_randomness(rng: np.random.Generator, n: int, n_sweeps: int):
    orders = rng.permuted(np.tile(np.arange(n, dtype=np.int64), (n_sweeps, 1)), axis=1)
    uniforms = rng.random((n_sweeps, n))
    return orders, uniforms


def _run(problem: IsingProblem, temps: np.ndarray, seeds, initial: np.ndarray | None) -> np.ndarray:
    n = problem.n_spins
    inits, orders, uniforms = [], [], []
    for sd in seeds:
        rng = np.random.default_rng(int(sd))
        if initial is None:
            inits.append((2 * rng.integers(0, 2, n) - 1).astype(np.int8))
        else:
            inits.append(initial)
        o, u = _read_randomness(rng, n, temps.shape[0])
        orders.append(o)
        uniforms.append(u)
    indptr, indices, data = problem.csr()
    return _kernels.anneal_batch(
        indptr, indices, data, problem.biases,
        np.stack(inits), np.ascontiguousarray(temps, dtype=np.float64),
        np.stack(orders), np.stack(uniforms),
    )


def metropolis_sweep(problem: IsingProblem, state, temperature: float, rng: np.random.Generator) -> np.ndarray:
    """One sweep of ``n_spins`` proposals in a random permutation order."""
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    s = as_spins(state, problem.n_spins).copy()
    indptr, indices, data = problem.csr()
    f = _kernels.local_fields(indptr, indices, data, problem.biases, s.astype(np.float64))
    order, uniforms = _read_randomness(rng, problem.n_spins, 1)
    _kernels.sweep_inplace(indptr, indices, data, s, f, float(temperature), order[0], uniforms[0])
    return s


def run_sweeps(problem: IsingProblem, state, temperatures, seed: int) -> np.ndarray:
    """Sweeps at an explicit temperature sequence, starting from ``state``."""
    s = as_spins(state, problem.n_spins)
    temps = np.asarray(temperatures, dtype=np.float64)
    if np.any(temps < 0):
        raise ValueError("temperature must be non-negative")
    return _run(problem, temps, [seed], s)[0]


def anneal_forward(problem: IsingProblem, schedule: AnnealSchedule, seed: int) -> Sample:
    if schedule.kind != FORWARD:
        raise ValueError("anneal_forward needs a forward schedule")
    return make_sample(problem, _run(problem, schedule.temperatures(), [seed], None)[0])


def anneal_reverse(problem: IsingProblem, schedule: AnnealSchedule, initial, seed: int) -> Sample:
    if schedule.kind != REVERSE:
        raise ValueError("anneal_reverse needs a reverse schedule")
    s0 = as_spins(initial, problem.n_spins)
    return make_sample(problem, _run(problem, schedule.temperatures(), [seed], s0)[0])


def sample_best(problem: IsingProblem, phase: str, initial, cfg: SamplerConfig) -> Sample:
    """Lowest-energy result of ``cfg.n_reads`` anneals; ties go to the earliest read."""
    seeds = [cfg.seed + r for r in range(cfg.n_reads)]
    if phase == "free":
        states = _run(problem, cfg.schedule_free.temperatures(), seeds, None)
    elif phase == "nudge":
        if initial is None:
            raise ValueError("nudge phase needs an initial state")
        s0 = as_spins(initial, problem.n_spins)
        states = _run(problem, cfg.schedule_nudge.temperatures(), seeds, s0)
    else:
        raise ValueError(f"unknown phase {phase!r}")
    e = energies(problem, states)
    return make_sample(problem, states[int(np.argmin(e))])


@dataclass(frozen=True)
class EnergyStats:
    mean: float
    std: float
    counts: np.ndarray
    bin_edges: np.ndarray
    energies: np.ndarray


def energy_distribution(
    problem: IsingProblem,
    n_samples: int,
    schedule: AnnealSchedule,
    seed: int,
    bins: int = 50,
    hist_range: tuple[float, float] | None = None,
    chunk: int = 100,
) -> EnergyStats:
    """Final energies of ``n_samples`` independent forward anneals."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    temps = schedule.temperatures()
    out = []
    for start in range(0, n_samples, chunk):
        seeds = [seed + k for k in range(start, min(n_samples, start + chunk))]
        out.append(energies(problem, _run(problem, temps, seeds, None)))
    e = np.concatenate(out)
    if hist_range is None:
        lo, hi = float(e.min()), float(e.max())
        hist_range = (lo, hi) if hi > lo else (lo - 0.5, hi + 0.5)
    counts, edges = np.histogram(e, bins=bins, range=hist_range)
    return EnergyStats(float(e.mean()), float(e.std(ddof=1)), counts, edges, e)


def boltzmann_chain_counts(problem: IsingProblem, temperature: float, n_sweeps: int, seed: int) -> np.ndarray:
    """Visit counts per lexicographic state index of a fixed-temperature chain."""
    n = problem.n_spins
    if n > 20:
        raise ValueError("state histogram limited to 20 spins")
    rng = np.random.default_rng(seed)
    s0 = (2 * rng.integers(0, 2, n) - 1).astype(np.int8)
    counts = np.zeros(2**n, dtype=np.int64)
    indptr, indices, data = problem.csr()
    block = 50_000
    done = 0
    while done < n_sweeps:
        k = min(block, n_sweeps - done)
        orders, uniforms = _read_randomness(rng, n, k)
        s0 = _kernels.chain_histogram(
            indptr, indices, data, problem.biases, s0, float(temperature), orders, uniforms, counts
        )
        done += k
    return counts
