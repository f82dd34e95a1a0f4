"""Neural-network architectures expressed as Ising problems.

Master parameters are stored unscaled. Building a problem multiplies them by
the architecture's scaling factors, so the chip sees ``scale * master``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .ising import DEFAULT_H_RANGE, DEFAULT_J_RANGE, IsingProblem, clip_parameters
from .topology import ChimeraGraph, ConvLayout, Embedding, build_chimera, build_conv_embedding, embed_problem

CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class FcArchitecture:
    n_inputs: int = 784
    n_hidden: int = 120
    n_classes: int = 10
    spins_per_class: int = 4
    input_scale: float = 0.5
    chip_scale: float = 0.25
    j_range: tuple[float, float] = DEFAULT_J_RANGE
    h_range: tuple[float, float] = DEFAULT_H_RANGE

    kind = "fc"

    def __post_init__(self):
        if min(self.n_inputs, self.n_hidden, self.n_classes, self.spins_per_class) < 1:
            raise ValueError("layer sizes must be positive")
        if not (self.input_scale > 0 and self.chip_scale > 0):
            raise ValueError("scales must be positive")

    @property
    def n_outputs(self) -> int:
        return self.n_classes * self.spins_per_class

    @property
    def n_spins(self) -> int:
        return self.n_hidden + self.n_outputs

    @property
    def hidden_indices(self) -> np.ndarray:
        return np.arange(self.n_hidden)

    @property
    def output_indices(self) -> np.ndarray:
        return self.n_hidden + np.arange(self.n_outputs)


@dataclass
class FcParameters:
    W_input: np.ndarray
    h_bias_hidden: np.ndarray
    J_hidden_output: np.ndarray
    h_bias_output: np.ndarray

    @classmethod
    def init(cls, arch: FcArchitecture, rng: np.random.Generator) -> "FcParameters":
        a_in = 1 / np.sqrt(arch.n_inputs)
        a_hid = 1 / np.sqrt(arch.n_hidden)
        return cls(
            W_input=rng.uniform(-a_in, a_in, (arch.n_inputs, arch.n_hidden)),
            h_bias_hidden=np.zeros(arch.n_hidden),
            J_hidden_output=rng.uniform(-a_hid, a_hid, (arch.n_hidden, arch.n_outputs)),
            h_bias_output=np.zeros(arch.n_outputs),
        )

    @classmethod
    def zeros(cls, arch: FcArchitecture) -> "FcParameters":
        return cls(
            np.zeros((arch.n_inputs, arch.n_hidden)),
            np.zeros(arch.n_hidden),
            np.zeros((arch.n_hidden, arch.n_outputs)),
            np.zeros(arch.n_outputs),
        )


@dataclass(frozen=True)
class ConvArchitecture:
    input_hw: int = 3
    kernel: int = 2
    stride: int = 1
    padding: int = 0
    n_filters: int = 4
    pool_coef: float = 0.25
    n_classes: int = 2
    spins_per_class: int = 2
    input_bias_magnitude: float = 4.0
    filter_scale: float = 0.1
    class_scale: float = 0.1
    chain_strength: float = 2.0
    j_range: tuple[float, float] = (-1.0, 1.0)
    h_range: tuple[float, float] = DEFAULT_H_RANGE
    graph_rows: int = 3
    graph_cols: int = 3

    kind = "conv"

    def __post_init__(self):
        fmap = (self.input_hw + 2 * self.padding - self.kernel) // self.stride + 1
        if (self.input_hw, self.kernel, self.stride, self.padding) != (3, 2, 1, 0) or fmap != 2:
            raise ValueError("only the 3x3 input / 2x2 kernel / stride 1 layout is embeddable")
        if self.n_filters != 4 or self.n_outputs != 4:
            raise ValueError("the classifier crossbar is 4x4: 4 filters and 4 output spins")

    @property
    def n_outputs(self) -> int:
        return self.n_classes * self.spins_per_class

    @property
    def patches(self) -> list[tuple[int, int]]:
        return [(0, 0), (0, 1), (1, 0), (1, 1)]

    @property
    def layout(self) -> ConvLayout:
        return ConvLayout(n_filters=self.n_filters, n_outputs=self.n_outputs)

    def graph(self) -> ChimeraGraph:
        return build_chimera(self.graph_rows, self.graph_cols)


@dataclass
class ConvParameters:
    filters: np.ndarray  # (n_filters, kernel, kernel), shared by every crossbar
    W_class: np.ndarray  # (n_filters, n_outputs)
    biases: np.ndarray  # (n_outputs,)

    @classmethod
    def init(cls, arch: ConvArchitecture, rng: np.random.Generator) -> "ConvParameters":
        k = arch.kernel
        a_conv = 1 / np.sqrt(k * k)
        a_cls = 1 / np.sqrt(arch.n_filters)
        return cls(
            filters=rng.uniform(-a_conv, a_conv, (arch.n_filters, k, k)),
            W_class=rng.uniform(-a_cls, a_cls, (arch.n_filters, arch.n_outputs)),
            biases=np.zeros(arch.n_outputs),
        )


@dataclass(frozen=True)
class DetArchitecture:
    """Layered network for the deterministic reference (binary activations, real weights)."""

    n_inputs: int = 784
    n_hidden: int = 120
    n_classes: int = 10
    spins_per_class: int = 4

    kind = "det"

    def __post_init__(self):
        if min(self.n_inputs, self.n_hidden, self.n_classes, self.spins_per_class) < 1:
            raise ValueError("layer sizes must be positive")

    @property
    def n_outputs(self) -> int:
        return self.n_classes * self.spins_per_class


@dataclass
class DetParameters:
    W_input: np.ndarray  # (n_inputs, n_hidden)
    b_hidden: np.ndarray
    W_hidden_output: np.ndarray  # (n_hidden, n_outputs)
    b_output: np.ndarray

    @classmethod
    def init(cls, arch: DetArchitecture, rng: np.random.Generator) -> "DetParameters":
        a_in = 1 / np.sqrt(arch.n_inputs)
        a_hid = 1 / np.sqrt(arch.n_hidden)
        return cls(
            W_input=rng.uniform(-a_in, a_in, (arch.n_inputs, arch.n_hidden)),
            b_hidden=np.zeros(arch.n_hidden),
            W_hidden_output=rng.uniform(-a_hid, a_hid, (arch.n_hidden, arch.n_outputs)),
            b_output=np.zeros(arch.n_outputs),
        )


# ---------------------------------------------------------------------------
# fully connected


def compute_input_bias(x, params: FcParameters, arch: FcArchitecture) -> np.ndarray:
    """Hidden-spin biases ``x . (input_scale * W_input) + h_bias_hidden``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != arch.n_inputs or params.W_input.shape != (arch.n_inputs, arch.n_hidden):
        raise ValueError(f"input of length {x.shape[0]} does not match {params.W_input.shape}")
    return x @ (arch.input_scale * params.W_input) + params.h_bias_hidden


_fc_edge_cache: dict[tuple[int, int], np.ndarray] = {}


def _fc_edges(n_hidden: int, n_outputs: int) -> np.ndarray:
    key = (n_hidden, n_outputs)
    if key not in _fc_edge_cache:
        # edge (n_hidden + o, h), output-major so the keys are already sorted
        o, h = np.meshgrid(np.arange(n_outputs), np.arange(n_hidden), indexing="ij")
        e = np.stack([n_hidden + o.ravel(), h.ravel()], axis=1)
        _fc_edge_cache[key] = e
    return _fc_edge_cache[key]


def build_fc_problem(arch: FcArchitecture, params: FcParameters, x):
    """Bipartite hidden/output problem for one input; returns (problem, hidden, outputs)."""
    h = np.concatenate([compute_input_bias(x, params, arch), arch.chip_scale * params.h_bias_output])
    w = (arch.chip_scale * params.J_hidden_output).T.ravel()
    problem = IsingProblem(
        arch.n_spins, _fc_edges(arch.n_hidden, arch.n_outputs), w, h,
        j_range=arch.j_range, h_range=arch.h_range,
    )
    return clip_parameters(problem), arch.hidden_indices, arch.output_indices


# ---------------------------------------------------------------------------
# convolutional


@dataclass(frozen=True)
class ConvProblem:
    physical: IsingProblem
    logical: IsingProblem
    embedding: Embedding
    layout: ConvLayout

    @property
    def output_sites(self) -> np.ndarray:
        return np.array([self.embedding.chains[int(i)][0] for i in self.layout.outputs])


_conv_embedding_cache: dict = {}


def conv_embedding(arch: ConvArchitecture) -> tuple[ChimeraGraph, Embedding]:
    key = (arch.graph_rows, arch.graph_cols, arch.chain_strength)
    if key not in _conv_embedding_cache:
        graph = arch.graph()
        _conv_embedding_cache[key] = (graph, build_conv_embedding(arch, graph))
    return _conv_embedding_cache[key]


def patches_of(pixels, arch: ConvArchitecture) -> np.ndarray:
    """(n_patches, kernel*kernel) view of a 3x3 image, patches in row-major order."""
    img = np.asarray(pixels, dtype=np.float64).reshape(arch.input_hw, arch.input_hw)
    k = arch.kernel
    return np.stack([img[r:r + k, c:c + k].ravel() for r, c in arch.patches])


def build_conv_problem(arch: ConvArchitecture, params: ConvParameters, pixels) -> ConvProblem:
    """Logical conv network for one binary 3x3 image, embedded on the Chimera block.

    Input spins get bias ``input_bias_magnitude * pixel``. Pooling couplings
    have magnitude ``pool_coef`` and are ferromagnetic, like chains.
    """
    px = np.asarray(pixels).reshape(-1)
    if px.shape[0] != arch.input_hw**2 or not np.all((px == 1) | (px == -1)):
        raise ValueError("conv inputs must be 9 pixels of value +-1")
    layout = arch.layout
    patch = patches_of(px, arch)
    h = np.zeros(layout.n_logical)
    J: dict[tuple[int, int], float] = {}
    chip_filters = arch.filter_scale * params.filters.reshape(arch.n_filters, -1)
    for p in range(layout.n_patches):
        h[layout.inputs[p]] = arch.input_bias_magnitude * patch[p]
        for f in range(arch.n_filters):
            c = int(layout.conv[p, f])
            for k in range(layout.patch_size):
                J[(c, int(layout.inputs[p, k]))] = chip_filters[f, k]
            J[(int(layout.pool[f]), c)] = -arch.pool_coef
    for f in range(arch.n_filters):
        for o in range(arch.n_outputs):
            J[(int(layout.outputs[o]), int(layout.pool[f]))] = arch.class_scale * params.W_class[f, o]
    h[layout.outputs] = arch.class_scale * params.biases
    logical = clip_parameters(
        IsingProblem.from_dict(layout.n_logical, J, h, j_range=arch.j_range, h_range=arch.h_range)
    )
    graph, emb = conv_embedding(arch)
    return ConvProblem(embed_problem(logical, emb, graph), logical, emb, layout)


# ---------------------------------------------------------------------------
# readout


def readout(output_spins, n_classes: int, spins_per_class: int) -> int:
    """Class with the largest spin sum; ties go to the lowest class index."""
    s = np.asarray(output_spins).reshape(-1)
    if s.shape[0] != n_classes * spins_per_class:
        raise ValueError("output size does not match n_classes * spins_per_class")
    return int(np.argmax(s.reshape(n_classes, spins_per_class).sum(axis=1)))


def target_spins(label: int, n_classes: int, spins_per_class: int) -> np.ndarray:
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} outside [0, {n_classes})")
    t = -np.ones((n_classes, spins_per_class), dtype=np.int8)
    t[label] = 1
    return t.ravel()


# ---------------------------------------------------------------------------
# checkpoints: a single .npz with one array per named tensor plus a JSON header


def save_checkpoint(path, arch, params, **header) -> None:
    meta = {"format": CHECKPOINT_FORMAT, "kind": arch.kind, "architecture": asdict(arch)}
    meta.update(header)
    arrays = {f.name: getattr(params, f.name) for f in fields(params)}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path):
    """Return (architecture, parameters, header)."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__header__"]))
            arrays = {k: data[k].copy() for k in data.files if k != "__header__"}
    except (OSError, ValueError, KeyError) as exc:
        raise ValueError(f"unreadable checkpoint {path}: {exc}") from exc
    arch_kw = {k: tuple(v) if isinstance(v, list) else v for k, v in meta["architecture"].items()}
    if meta.get("kind") == "fc":
        return FcArchitecture(**arch_kw), FcParameters(**arrays), meta
    if meta.get("kind") == "conv":
        return ConvArchitecture(**arch_kw), ConvParameters(**arrays), meta
    if meta.get("kind") == "det":
        return DetArchitecture(**arch_kw), DetParameters(**arrays), meta
    raise ValueError(f"unknown checkpoint kind {meta.get('kind')!r}")


def copy_params(params):
    return replace(params, **{f.name: getattr(params, f.name).copy() for f in fields(params)})
