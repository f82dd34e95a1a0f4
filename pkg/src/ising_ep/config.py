"""Flat ``key = value`` run configuration with dotted section keys.

Lines starting with ``#`` are comments. Values are parsed against the type
of the key's default: integers, floats, booleans (true/false), strings,
``none`` for optional values, and ``lo, hi`` pairs for ranges. Unknown keys
are rejected. Defaults depend on ``task``: the conv task uses beta 5,
learning rates 0.1, chain strength 2 and couplings in [-1, 1].

Example::

    task = conv-patterns
    train.epochs = 50
    annealer.n_reads = 10
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

TASKS = ("fc-mnist", "conv-patterns")
SAMPLERS = ("sa", "bruteforce", "deterministic")

Pair = tuple  # marker type for "lo, hi" ranges


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit code 2."""


# key -> (type, default). ``None`` defaults take the type given; Optional[int] is (int, None).
SCHEMA: dict[str, tuple[type, Any]] = {
    "task": (str, "fc-mnist"),
    "sampler": (str, "sa"),
    "seed": (int, 0),
    "output_dir": (str, "runs/default"),
    "data.dir": (str, "data/mnist"),
    "data.train_per_class": (int, 100),
    "data.test_per_class": (int, 10),
    "train.epochs": (int, 50),
    "train.beta": (float, 2.0),
    "train.lr_w": (float, 1e-2),
    "train.lr_b": (float, 1e-3),
    "train.skip_nudge": (bool, True),
    "train.clip": (bool, True),
    "train.conv_sign": (int, -1),
    "train.checkpoint_every": (int, 10),
    "train.wall_clock": (bool, False),
    "annealer.t_hot_factor": (float, 2.0),
    "annealer.t_cold": (float, 0.01),
    "annealer.n_sweeps": (int, 200),
    "annealer.n_sweeps_reverse": (int, None),
    "annealer.reverse_fraction": (float, 0.25),
    "annealer.n_reads": (int, 10),
    "annealer.seed": (int, None),
    "fc.n_hidden": (int, 120),
    "fc.spins_per_class": (int, 4),
    "fc.input_scale": (float, 0.5),
    "fc.chip_scale": (float, 0.25),
    "fc.j_range": (Pair, (-2.0, 2.0)),
    "fc.h_range": (Pair, (-4.0, 4.0)),
    "conv.pool_coef": (float, 0.25),
    "conv.chain_strength": (float, 2.0),
    "conv.filter_scale": (float, 0.1),
    "conv.class_scale": (float, 0.1),
    "conv.input_bias_magnitude": (float, 4.0),
    "conv.j_range": (Pair, (-1.0, 1.0)),
    "conv.h_range": (Pair, (-4.0, 4.0)),
    "det.T": (int, 30),
    "det.K": (int, 50),
    "det.dt": (float, 0.5),
    "det.window": (Pair, (-0.5, 0.5)),
    "det.gate_nudge": (bool, False),
    "energy.n_samples": (int, 1000),
    "energy.image_index": (int, 0),
    "energy.bins": (int, 50),
}

TASK_DEFAULTS: dict[str, dict[str, Any]] = {
    "fc-mnist": {},
    "conv-patterns": {"train.beta": 5.0, "train.lr_w": 0.1, "train.lr_b": 0.1},
}

DETERMINISTIC_DEFAULTS = {"train.lr_w": 0.1, "train.lr_b": 0.01}


def _coerce(key: str, raw: str):
    kind, default = SCHEMA[key]
    text = raw.strip()
    if default is None and text.lower() == "none":
        return None
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError("expected true or false")
            return low == "true"
        if kind is Pair:
            parts = [float(p) for p in text.strip("()[] ").split(",")]
            if len(parts) != 2 or not parts[0] < parts[1]:
                raise ValueError("expected 'lo, hi' with lo < hi")
            return tuple(parts)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw.strip()!r} ({exc})") from None


def parse_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """Parse config text into typed values; unknown keys raise ConfigError."""
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{n}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def parse_overrides(pairs) -> dict[str, Any]:
    """``["key=value", ...]`` as given on the command line."""
    return parse_text("\n".join(pairs), "--set")


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def as_text(self) -> str:
        def fmt(v):
            if isinstance(v, bool):
                return str(v).lower()
            if isinstance(v, tuple):
                return f"{v[0]!r}, {v[1]!r}"
            return "none" if v is None else str(v)

        return "".join(f"{k} = {fmt(v)}\n" for k, v in sorted(self.values.items()))


def build_config(*layers: dict[str, Any]) -> RunConfig:
    """Merge layers (later wins) over the task-dependent defaults and validate."""
    merged: dict[str, Any] = {}
    for layer in layers:
        merged.update(layer)
    task = merged.get("task", SCHEMA["task"][1])
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    sampler = merged.get("sampler", SCHEMA["sampler"][1])
    values = {k: d for k, (_, d) in SCHEMA.items()}
    values.update(TASK_DEFAULTS[task])
    if sampler == "deterministic":
        values.update(DETERMINISTIC_DEFAULTS)
    values.update(merged)
    validate(values)
    return RunConfig(values)


def validate(v: dict[str, Any]) -> None:
    if v["sampler"] not in SAMPLERS:
        raise ConfigError(f"sampler must be one of {SAMPLERS}, got {v['sampler']!r}")
    if v["sampler"] == "deterministic" and v["task"] != "fc-mnist":
        raise ConfigError("the deterministic sampler only exists for task fc-mnist")
    if not v["train.beta"] > 0:
        raise ConfigError("train.beta must be positive (it divides the gradient)")
    for key in ("train.lr_w", "train.lr_b", "annealer.t_hot_factor", "det.dt"):
        if not v[key] > 0:
            raise ConfigError(f"{key} must be positive")
    for key in ("train.epochs", "annealer.n_sweeps", "annealer.n_reads", "det.T", "det.K",
                "energy.n_samples", "energy.bins", "fc.n_hidden", "fc.spins_per_class",
                "data.train_per_class", "data.test_per_class"):
        if v[key] < 1:
            raise ConfigError(f"{key} must be >= 1")
    for key in ("seed", "train.checkpoint_every", "energy.image_index"):
        if v[key] < 0:
            raise ConfigError(f"{key} must be >= 0")
    if v["annealer.seed"] is not None and v["annealer.seed"] < 0:
        raise ConfigError("annealer.seed must be >= 0")
    if v["annealer.n_sweeps_reverse"] is not None and v["annealer.n_sweeps_reverse"] < 1:
        raise ConfigError("annealer.n_sweeps_reverse must be >= 1")
    if v["annealer.t_cold"] < 0:
        raise ConfigError("annealer.t_cold must be >= 0")
    if not 0 < v["annealer.reverse_fraction"] <= 1:
        raise ConfigError("annealer.reverse_fraction must lie in (0, 1]")
    if v["train.conv_sign"] not in (-1, 1):
        raise ConfigError("train.conv_sign must be -1 or 1")
    if v["conv.chain_strength"] == 0:
        raise ConfigError("conv.chain_strength must be nonzero")
    if not 0 < v["det.dt"] <= 1:
        raise ConfigError("det.dt must lie in (0, 1]")
    if not v["det.window"][0] < 0 <= v["det.window"][1]:
        raise ConfigError("det.window must satisfy lo < 0 <= hi")


def load_config(path=None, overrides: dict[str, Any] | None = None) -> RunConfig:
    layers = []
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        layers.append(parse_text(text, str(path)))
    layers.append(overrides or {})
    return build_config(*layers)
