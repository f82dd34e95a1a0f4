"""Ising problems, energies, nudging and exact enumeration.

Energy convention (the one the hardware minimizes)::

    E(s) = sum_{i>j} J_ij s_i s_j + sum_i h_i s_i

so a *negative* coupling is ferromagnetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

MAX_BRUTEFORCE_SPINS = 24
TIE_TOL = 1e-9

DEFAULT_J_RANGE = (-2.0, 2.0)
DEFAULT_H_RANGE = (-4.0, 4.0)


class DimensionError(ValueError):
    pass


class ProblemSizeError(ValueError):
    pass


def as_spins(state, n_spins: int | None = None) -> np.ndarray:
    """Validate and return ``state`` as an int8 vector of +-1."""
    s = np.asarray(state)
    if s.ndim != 1:
        raise DimensionError(f"spin state must be 1-d, got shape {s.shape}")
    if n_spins is not None and s.shape[0] != n_spins:
        raise DimensionError(f"state has {s.shape[0]} spins, problem has {n_spins}")
    if not np.all((s == 1) | (s == -1)):
        raise ValueError("spin values must be exactly -1 or +1")
    return s.astype(np.int8)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IsingProblem:
    """Sparse Ising problem.

    ``edges`` is an (m, 2) array of pairs with ``i > j``, sorted and unique;
    ``weights[k]`` is the coupling on ``edges[k]``.
    """

    n_spins: int
    edges: np.ndarray
    weights: np.ndarray
    biases: np.ndarray
    j_range: tuple[float, float] = DEFAULT_J_RANGE
    h_range: tuple[float, float] = DEFAULT_H_RANGE
    _csr: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n_spins)
        if n < 1:
            raise ValueError("n_spins must be positive")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        biases = np.asarray(self.biases, dtype=np.float64).reshape(-1)
        if biases.shape[0] != n:
            raise DimensionError(f"{biases.shape[0]} biases for {n} spins")
        if weights.shape[0] != edges.shape[0]:
            raise DimensionError("edges and weights differ in length")
        if edges.size:
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-coupling is not allowed")
            if np.any(edges[:, 0] < edges[:, 1]):
                raise ValueError("coupling keys must satisfy i > j")
            if edges.min() < 0 or edges.max() >= n:
                raise DimensionError("coupling index out of range")
            key = edges[:, 0] * n + edges[:, 1]
            order = np.argsort(key, kind="stable")
            key = key[order]
            if np.any(key[1:] == key[:-1]):
                raise ValueError("duplicate coupling entry")
            edges, weights = edges[order], weights[order]
        for name, (lo, hi) in (("j_range", self.j_range), ("h_range", self.h_range)):
            if not lo <= hi:
                raise ValueError(f"{name} must satisfy min <= max")
        object.__setattr__(self, "n_spins", n)
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "biases", _frozen(biases))
        object.__setattr__(self, "j_range", (float(self.j_range[0]), float(self.j_range[1])))
        object.__setattr__(self, "h_range", (float(self.h_range[0]), float(self.h_range[1])))

    @classmethod
    def from_dict(
        cls,
        n_spins: int,
        couplings: Mapping[tuple[int, int], float] | None = None,
        biases: Iterable[float] | None = None,
        **ranges,
    ) -> "IsingProblem":
        """Build from a ``{(i, j): J}`` mapping; keys may come in either order."""
        couplings = couplings or {}
        seen = {}
        for (i, j), value in couplings.items():
            a, b = (i, j) if i > j else (j, i)
            if (a, b) in seen:
                raise ValueError(f"coupling ({a}, {b}) given twice")
            seen[(a, b)] = float(value)
        edges = np.array(list(seen), dtype=np.int64).reshape(-1, 2)
        weights = np.array(list(seen.values()), dtype=np.float64)
        h = np.zeros(n_spins) if biases is None else np.asarray(list(biases), float)
        return cls(n_spins, edges, weights, h, **ranges)

    @classmethod
    def from_dense(cls, J: np.ndarray, h, **ranges) -> "IsingProblem":
        """Build from a dense matrix; only the strict lower triangle is read."""
        J = np.asarray(J, dtype=np.float64)
        n = J.shape[0]
        i, j = np.tril_indices(n, -1)
        w = J[i, j]
        keep = w != 0
        return cls(n, np.stack([i[keep], j[keep]], axis=1), w[keep], h, **ranges)

    @property
    def couplings(self) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(w) for (i, j), w in zip(self.edges, self.weights)}

    def replace(self, **changes) -> "IsingProblem":
        kw = dict(
            n_spins=self.n_spins,
            edges=self.edges,
            weights=self.weights,
            biases=self.biases,
            j_range=self.j_range,
            h_range=self.h_range,
        )
        kw.update(changes)
        return IsingProblem(**kw)

    def dense_couplings(self) -> np.ndarray:
        """Symmetric dense J with zero diagonal."""
        J = np.zeros((self.n_spins, self.n_spins))
        if self.edges.size:
            i, j = self.edges[:, 0], self.edges[:, 1]
            J[i, j] = self.weights
            J[j, i] = self.weights
        return J

    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric adjacency as (indptr, indices, data), cached."""
        if self._csr is None:
            n = self.n_spins
            i, j = self.edges[:, 0], self.edges[:, 1]
            rows = np.concatenate([i, j])
            cols = np.concatenate([j, i])
            data = np.concatenate([self.weights, self.weights])
            order = np.lexsort((cols, rows))
            rows, cols, data = rows[order], cols[order], data[order]
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.add.at(indptr, rows + 1, 1)
            indptr = np.cumsum(indptr)
            object.__setattr__(self, "_csr", (indptr, cols.astype(np.int64), data.astype(np.float64)))
        return self._csr

    def max_abs_parameter(self) -> float:
        vals = [np.abs(self.weights).max(initial=0.0), np.abs(self.biases).max(initial=0.0)]
        return float(max(vals))


@dataclass(frozen=True)
class Sample:
    state: np.ndarray
    energy: float


def energy(problem: IsingProblem, state) -> float:
    s = as_spins(state, problem.n_spins).astype(np.float64)
    e = float(problem.biases @ s)
    if problem.edges.size:
        e += float(problem.weights @ (s[problem.edges[:, 0]] * s[problem.edges[:, 1]]))
    return e


def energies(problem: IsingProblem, states: np.ndarray) -> np.ndarray:
    """Energies of a batch of states, shape (k, n) -> (k,)."""
    S = np.asarray(states, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] != problem.n_spins:
        raise DimensionError(f"states must have shape (k, {problem.n_spins})")
    e = S @ problem.biases
    if problem.edges.size:
        e += (S[:, problem.edges[:, 0]] * S[:, problem.edges[:, 1]]) @ problem.weights
    return e


def make_sample(problem: IsingProblem, state) -> Sample:
    s = as_spins(state, problem.n_spins)
    return Sample(s, energy(problem, s))


def apply_nudge(problem: IsingProblem, output_indices, targets, beta: float) -> IsingProblem:
    """Return a copy with ``h_i -> h_i - beta * target_i`` on the output spins.

    The nudged biases are not clipped to ``h_range``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    idx = np.asarray(output_indices, dtype=np.int64).reshape(-1)
    t = np.asarray(targets).reshape(-1)
    if idx.shape != t.shape:
        raise DimensionError("one target per output index is required")
    if idx.size and (idx.min() < 0 or idx.max() >= problem.n_spins):
        raise IndexError("output index out of range")
    if not np.all((t == 1) | (t == -1)):
        raise ValueError("targets must be +-1")
    h = problem.biases.copy()
    h[idx] -= beta * t
    return problem.replace(biases=h)


def clip_parameters(problem: IsingProblem) -> IsingProblem:
    w = np.clip(problem.weights, *problem.j_range)
    h = np.clip(problem.biases, *problem.h_range)
    if np.array_equal(w, problem.weights) and np.array_equal(h, problem.biases):
        return problem
    return problem.replace(weights=w, biases=h)


def enumerate_states(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """States ``start..stop`` in lexicographic order (-1 before +1, first spin most significant)."""
    stop = 2**n if stop is None else stop
    k = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (k >> np.arange(n - 1, -1, -1, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


def ground_state_bruteforce(problem: IsingProblem, chunk: int = 1 << 16) -> Sample:
    """Exact minimizer by enumeration; ties go to the lexicographically smallest state."""
    n = problem.n_spins
    if n > MAX_BRUTEFORCE_SPINS:
        raise ProblemSizeError(f"brute force limited to {MAX_BRUTEFORCE_SPINS} spins, got {n}")
    total = 2**n
    starts = range(0, total, chunk)

    def block(start):
        return energies(problem, enumerate_states(n, start, min(total, start + chunk)))

    if total <= chunk:
        e = block(0)
        best_k = int(np.flatnonzero(e <= e.min() + TIE_TOL)[0])
    else:
        # two passes keep memory flat: global minimum, then first state within tolerance
        best_e = min(float(block(s).min()) for s in starts)
        for start in starts:
            hit = np.flatnonzero(block(start) <= best_e + TIE_TOL)
            if hit.size:
                best_k = start + int(hit[0])
                break
    state = enumerate_states(n, best_k, best_k + 1)[0]
    return make_sample(problem, state)


# ---------------------------------------------------------------------------
# text format:  "ising <n>", then "h <i> <value>" and "J <i> <j> <value>" lines


def dumps_problem(problem: IsingProblem) -> str:
    lines = [f"ising {problem.n_spins}"]
    lines += [f"h {i} {v!r}" for i, v in enumerate(problem.biases.tolist())]
    lines += [
        f"J {int(i)} {int(j)} {float(w)!r}" for (i, j), w in zip(problem.edges, problem.weights)
    ]
    return "\n".join(lines) + "\n"


def loads_problem(text: str, **ranges) -> IsingProblem:
    n = None
    h = None
    couplings = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "ising":
                n = int(parts[1])
                h = np.zeros(n)
            elif parts[0] == "h":
                h[int(parts[1])] = float(parts[2])
            elif parts[0] == "J":
                i, j = int(parts[1]), int(parts[2])
                if i <= j:
                    raise ValueError("J records need i > j")
                if (i, j) in couplings:
                    raise ValueError("duplicate J record")
                couplings[(i, j)] = float(parts[3])
            else:
                raise ValueError(f"unknown record {parts[0]!r}")
        except (IndexError, TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc or 'malformed record'}") from None
    if n is None:
        raise ValueError("missing 'ising <n>' header")
    return IsingProblem.from_dict(n, couplings, h, **ranges)
