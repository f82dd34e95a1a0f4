"""Chimera graphs, chained embeddings and the handcrafted convolution layout.

Site indexing is row-major by cell; inside a cell the four horizontal spins
come first, then the four vertical ones. Horizontal spins link to the same
position in the left/right cells, vertical spins to the cells above/below.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ising import IsingProblem, as_spins

CELL = 4
H, V = 0, 1


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class ChimeraGraph:
    rows: int
    cols: int
    edges: frozenset  # of (a, b) with a > b

    cell_size = CELL

    @property
    def n_spins(self) -> int:
        return self.rows * self.cols * 2 * CELL

    def site(self, r: int, c: int, side: int, k: int) -> int:
        if not (0 <= r < self.rows and 0 <= c < self.cols and side in (H, V) and 0 <= k < CELL):
            raise IndexError(f"no site ({r}, {c}, {side}, {k}) in a {self.rows}x{self.cols} graph")
        return ((r * self.cols + c) * 2 + side) * CELL + k

    def has_edge(self, a: int, b: int) -> bool:
        return (max(a, b), min(a, b)) in self.edges

    def neighbors(self, a: int) -> list[int]:
        return sorted([x for e in self.edges if a in e for x in e if x != a])


def build_chimera(rows: int, cols: int) -> ChimeraGraph:
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    g = ChimeraGraph(rows, cols, frozenset())
    edges = set()

    def add(a, b):
        edges.add((max(a, b), min(a, b)))

    for r in range(rows):
        for c in range(cols):
            for k in range(CELL):
                for l in range(CELL):
                    add(g.site(r, c, H, k), g.site(r, c, V, l))
                if c + 1 < cols:
                    add(g.site(r, c, H, k), g.site(r, c + 1, H, k))
                if r + 1 < rows:
                    add(g.site(r, c, V, k), g.site(r + 1, c, V, k))
    return ChimeraGraph(rows, cols, frozenset(edges))


@dataclass(frozen=True)
class Embedding:
    """Logical spin -> chain of physical sites."""

    chains: Mapping[int, tuple[int, ...]]
    chain_strength: float = 1.0

    def __post_init__(self):
        chains = {int(k): tuple(int(s) for s in v) for k, v in dict(self.chains).items()}
        if any(len(v) == 0 for v in chains.values()):
            raise EmbeddingError("empty chain")
        if sorted(chains) != list(range(len(chains))):
            raise EmbeddingError("logical indices must be 0..n-1")
        object.__setattr__(self, "chains", dict(sorted(chains.items())))
        # the sign is fixed by embed_problem; only the magnitude is meaningful
        if self.chain_strength == 0:
            raise EmbeddingError("chain strength must be nonzero")

    @property
    def n_logical(self) -> int:
        return len(self.chains)

    def n_sites(self) -> int:
        return sum(len(c) for c in self.chains.values())

    def spins_per_neuron(self) -> float:
        return self.n_sites() / self.n_logical

    def validate(self, graph: ChimeraGraph) -> None:
        seen: dict[int, int] = {}
        for logical, chain in self.chains.items():
            for s in chain:
                if not 0 <= s < graph.n_spins:
                    raise EmbeddingError(f"site {s} outside the graph")
                if s in seen:
                    raise EmbeddingError(f"site {s} shared by chains {seen[s]} and {logical}")
                seen[s] = logical
            if not _connected(chain, graph):
                raise EmbeddingError(f"chain {logical} is not connected")

    def dumps(self) -> str:
        return "".join(f"{k}: [{', '.join(map(str, v))}]\n" for k, v in self.chains.items())

    @classmethod
    def loads(cls, text: str, chain_strength: float = 1.0) -> "Embedding":
        chains = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, _, rest = line.partition(":")
            sites = rest.strip().strip("[]")
            chains[int(key)] = tuple(int(s) for s in sites.split(",") if s.strip())
        return cls(chains, chain_strength)


def _connected(chain: Sequence[int], graph: ChimeraGraph) -> bool:
    members = set(chain)
    stack, reached = [chain[0]], {chain[0]}
    while stack:
        a = stack.pop()
        for b in members - reached:
            if graph.has_edge(a, b):
                reached.add(b)
                stack.append(b)
    return reached == members


def _chain_edges(chain: Sequence[int], graph: ChimeraGraph) -> list[tuple[int, int]]:
    return sorted(
        (max(a, b), min(a, b))
        for i, a in enumerate(chain)
        for b in chain[i + 1:]
        if graph.has_edge(a, b)
    )


def embed_problem(logical: IsingProblem, emb: Embedding, graph: ChimeraGraph) -> IsingProblem:
    """Place a logical problem on the physical graph.

    Biases go on the first site of each chain, every logical coupling on the
    lowest-index physical edge between the two chains, and every edge inside
    a chain gets ``-chain_strength`` (ferromagnetic under the +J convention).
    """
    emb.validate(graph)
    missing = set(range(logical.n_spins)) - set(emb.chains)
    if missing:
        raise EmbeddingError(f"logical spins without a chain: {sorted(missing)[:5]}")
    h = np.zeros(graph.n_spins)
    for i, chain in emb.chains.items():
        if i < logical.n_spins:
            h[chain[0]] += logical.biases[i]
    J: dict[tuple[int, int], float] = {}
    for (i, j), w in zip(logical.edges.tolist(), logical.weights.tolist()):
        candidates = [
            (max(a, b), min(a, b))
            for a in emb.chains[i]
            for b in emb.chains[j]
            if graph.has_edge(a, b)
        ]
        if not candidates:
            raise EmbeddingError(f"no physical edge between chains {i} and {j}")
        J[min(candidates, key=lambda e: (e[1], e[0]))] = w
    strength = -abs(emb.chain_strength)
    for chain in emb.chains.values():
        for e in _chain_edges(chain, graph):
            J[e] = strength
    return IsingProblem.from_dict(graph.n_spins, J, h, j_range=logical.j_range, h_range=logical.h_range)


def unembed(physical, emb: Embedding) -> np.ndarray:
    """Majority vote per chain; exact ties take the first site's value."""
    s = as_spins(physical)
    out = np.empty(emb.n_logical, dtype=np.int8)
    for i, chain in emb.chains.items():
        vals = s[list(chain)]
        total = int(vals.sum())
        out[i] = 1 if total > 0 else -1 if total < 0 else vals[0]
    return out


def embed_state(logical_state, emb: Embedding, n_physical: int, fill: int = -1) -> np.ndarray:
    """Write a logical state onto its chains (all sites aligned); unused sites get ``fill``."""
    s = as_spins(logical_state)
    out = np.full(n_physical, fill, dtype=np.int8)
    for i, chain in emb.chains.items():
        out[list(chain)] = s[i]
    return out


# ---------------------------------------------------------------------------
# handcrafted layout for the 3x3-input convolutional network


@dataclass(frozen=True)
class ConvLayout:
    """Logical index blocks of the conv network.

    inputs[p, k]  input copy of pixel k (row-major in the 2x2 patch) of patch p
    conv[p, f]    filter f applied to patch p
    pool[f]       average-pooled feature f (the only chained spins)
    outputs[o]    classifier outputs
    """

    n_patches: int = 4
    n_filters: int = 4
    patch_size: int = 4
    n_outputs: int = 4

    @property
    def inputs(self) -> np.ndarray:
        return np.arange(self.n_patches * self.patch_size).reshape(self.n_patches, self.patch_size)

    @property
    def conv(self) -> np.ndarray:
        base = self.n_patches * self.patch_size
        return base + np.arange(self.n_patches * self.n_filters).reshape(self.n_patches, self.n_filters)

    @property
    def pool(self) -> np.ndarray:
        return self.n_patches * (self.patch_size + self.n_filters) + np.arange(self.n_filters)

    @property
    def outputs(self) -> np.ndarray:
        return self.pool[-1] + 1 + np.arange(self.n_outputs)

    @property
    def n_logical(self) -> int:
        return int(self.outputs[-1]) + 1


# corner cells hold the four convolution crossbars, the centre cell the classifier
CROSSBAR_CELLS = ((0, 0), (0, 2), (2, 0), (2, 2))
CLASSIFIER_CELL = (1, 1)


def build_conv_embedding(spec, graph: ChimeraGraph, chain_strength: float | None = None) -> Embedding:
    """Handcrafted embedding of the 3x3 conv network on a >= 3x3 Chimera block.

    Each corner cell is a crossbar: its horizontal spins carry the patch
    pixels, its vertical spins the four filter outputs. Pooling chain ``f``
    runs through vertical ``f`` of cells (1, 0) and (1, 2), which touch the
    ``f``-th outputs of the crossbars above and below them, and through
    horizontal ``f`` of the middle row, whose centre site feeds the
    classifier crossbar. Classifier outputs are the centre cell's verticals.
    """
    if graph.rows < 3 or graph.cols < 3:
        raise EmbeddingError("the conv layout needs at least a 3x3 block of cells")
    layout = ConvLayout(n_filters=spec.n_filters, n_outputs=spec.n_outputs)
    if layout.n_filters > CELL or layout.n_outputs > CELL or layout.patch_size > CELL:
        raise EmbeddingError("each crossbar holds at most 4x4 couplings")
    chains: dict[int, tuple[int, ...]] = {}
    for p, (r, c) in enumerate(CROSSBAR_CELLS):
        for k in range(layout.patch_size):
            chains[int(layout.inputs[p, k])] = (graph.site(r, c, H, k),)
        for f in range(layout.n_filters):
            chains[int(layout.conv[p, f])] = (graph.site(r, c, V, f),)
    for f in range(layout.n_filters):
        chains[int(layout.pool[f])] = (
            graph.site(1, 0, V, f),
            graph.site(1, 0, H, f),
            graph.site(1, 1, H, f),
            graph.site(1, 2, H, f),
            graph.site(1, 2, V, f),
        )
    for o in range(layout.n_outputs):
        chains[int(layout.outputs[o])] = (graph.site(*CLASSIFIER_CELL, V, o),)
    strength = spec.chain_strength if chain_strength is None else chain_strength
    emb = Embedding(chains, strength)
    emb.validate(graph)
    return emb
