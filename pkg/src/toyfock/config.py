"""Experiment configuration: JSON schema, loading and object construction.

The format is strict: unknown keys are rejected with their path so typos
fail loudly instead of silently skewing a study.  See docs/config.md for
the documented schema and the reproducible random-operator stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .grid import Partition, StepFunction
from .operators import (
    CoupledOperator,
    SplitMix64,
    fnv1a64,
    preset_operator,
    random_coupled,
)

_PRESETS = ("time", "creation", "annihilation", "conservation", "identity")
_STUDY_KINDS = ("validate", "weak-convergence", "strong-convergence", "ito",
                "iterint-identity")
MAX_DYADIC_LEVEL = 10


class ConfigError(ValueError):
    """Raised for malformed configs; the message carries the offending path."""


def _reject_unknown(obj: dict, allowed: set[str], path: str):
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}: missing required key")
    return obj[key]


@dataclass
class StudySpec:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    d: int
    dim_h: int
    horizon: float
    levels: list[int]
    explicit_partitions: list[Partition]
    test_functions: dict[str, StepFunction]
    operator_specs: dict[str, dict]
    studies: list[StudySpec]
    seed: int
    output_dir: str

    def partitions(self) -> list[tuple[int, Partition]]:
        """(level, partition) pairs; explicit lists get levels -1, -2, ..."""
        out = [(lv, Partition.dyadic(self.horizon, lv)) for lv in self.levels]
        out += [(-(k + 1), p) for k, p in enumerate(self.explicit_partitions)]
        return out

    def operator(self, name: str, arity_hint: int | None = None) -> CoupledOperator:
        spec = self.operator_specs.get(name)
        if spec is None:
            raise ConfigError(f"operators.{name}: not declared")
        if "preset" in spec:
            return preset_operator(spec["preset"], self.dim_h, self.d,
                                   spec.get("channel", 0))
        if "blocks" in spec:
            from .operators import NoiseBlocks

            b = spec["blocks"]
            return NoiseBlocks(
                e=_parse_cmat(b["e"]), f=_parse_cmat(b["f"]),
                g=_parse_cmat(b["g"]), h=_parse_cmat(b["h"]),
            ).assemble()
        rnd = spec["random"]
        arity = rnd.get("arity", arity_hint or 1)
        seed = rnd.get("seed")
        if seed is None:
            seed = SplitMix64(self.seed ^ fnv1a64(name)).next_u64()
        return random_coupled(seed, self.dim_h, self.d, arity)

    def step_function(self, name: str) -> StepFunction:
        try:
            return self.test_functions[name]
        except KeyError:
            raise ConfigError(f"test_functions.{name}: not declared") from None

    def initial_vector(self, spec, default_dim: int) -> np.ndarray:
        if spec is None:
            v = np.zeros(default_dim, dtype=np.complex128)
            v[0] = 1.0
            return v
        v = np.asarray([complex(re, im) for re, im in spec], dtype=np.complex128)
        if v.size != default_dim:
            raise ConfigError(f"initial vector has {v.size} entries, "
                              f"dim_h is {default_dim}")
        return v


def _parse_cmat(rows) -> np.ndarray:
    return np.asarray([[complex(re, im) for re, im in row] for row in rows],
                      dtype=np.complex128)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    _reject_unknown(raw, {"dimensions", "horizon", "partitions", "test_functions",
                          "operators", "studies", "seed", "output_dir"}, "config")

    dims = _require(raw, "dimensions", "config")
    _reject_unknown(dims, {"d", "dim_h"}, "config.dimensions")
    d = int(_require(dims, "d", "config.dimensions"))
    dim_h = int(_require(dims, "dim_h", "config.dimensions"))
    if not (1 <= d <= 3 and 1 <= dim_h <= 4):
        raise ConfigError("config.dimensions: desk scale is 1<=d<=3, 1<=dim_h<=4")

    horizon = float(_require(raw, "horizon", "config"))
    if horizon <= 0:
        raise ConfigError("config.horizon: must be positive")

    parts = _require(raw, "partitions", "config")
    _reject_unknown(parts, {"dyadic_levels", "explicit"}, "config.partitions")
    levels = [int(x) for x in parts.get("dyadic_levels", [])]
    if any(not 0 <= lv <= MAX_DYADIC_LEVEL for lv in levels):
        raise ConfigError(f"config.partitions.dyadic_levels: levels must lie in "
                          f"[0, {MAX_DYADIC_LEVEL}]")
    explicit = []
    for k, times in enumerate(parts.get("explicit", [])):
        try:
            p = Partition(times)
        except ValueError as exc:
            raise ConfigError(f"config.partitions.explicit[{k}]: {exc}") from None
        if abs(p.horizon - horizon) > 1e-12:
            raise ConfigError(f"config.partitions.explicit[{k}]: horizon mismatch")
        explicit.append(p)
    if not levels and not explicit:
        raise ConfigError("config.partitions: declare dyadic_levels or explicit")

    fns = {}
    for name, obj in _require(raw, "test_functions", "config").items():
        _reject_unknown(obj, {"breakpoints", "values"}, f"config.test_functions.{name}")
        try:
            fns[name] = StepFunction.from_json(obj)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"config.test_functions.{name}: {exc}") from None
        if fns[name].d != d:
            raise ConfigError(f"config.test_functions.{name}: d != {d}")
        if fns[name].support_end > horizon + 1e-12:
            raise ConfigError(f"config.test_functions.{name}: support exceeds horizon")

    ops = {}
    for name, obj in _require(raw, "operators", "config").items():
        _reject_unknown(obj, {"preset", "channel", "random", "blocks"},
                        f"config.operators.{name}")
        if "preset" in obj and obj["preset"] not in _PRESETS:
            raise ConfigError(f"config.operators.{name}.preset: unknown preset "
                              f"{obj['preset']!r}")
        if "random" in obj:
            _reject_unknown(obj["random"], {"arity", "seed"},
                            f"config.operators.{name}.random")
        if not any(k in obj for k in ("preset", "random", "blocks")):
            raise ConfigError(f"config.operators.{name}: needs preset, random or blocks")
        ops[name] = obj

    studies = []
    study_keys = {
        "validate": {"kind", "tolerance_override"},
        "weak-convergence": {"kind", "operator", "f", "g", "u", "v", "t"},
        "strong-convergence": {"kind", "operator", "f", "u", "t", "reference_level"},
        "ito": {"kind", "y", "x", "f", "g", "u", "v", "t", "z_y", "z_x"},
        "iterint-identity": {"kind", "operator", "arity", "f", "g", "u", "v", "t"},
    }
    for k, obj in enumerate(_require(raw, "studies", "config")):
        kind = _require(obj, "kind", f"config.studies[{k}]")
        if kind not in _STUDY_KINDS:
            raise ConfigError(f"config.studies[{k}].kind: unknown kind {kind!r}")
        _reject_unknown(obj, study_keys[kind], f"config.studies[{k}]")
        params = {key: val for key, val in obj.items() if key != "kind"}
        for ref_key in ("operator", "y", "x", "z_y", "z_x"):
            if ref_key in params and params[ref_key] not in ops:
                raise ConfigError(
                    f"config.studies[{k}].{ref_key}: operator "
                    f"{params[ref_key]!r} not declared")
        for ref_key in ("f", "g"):
            if ref_key in params and params[ref_key] not in fns:
                raise ConfigError(
                    f"config.studies[{k}].{ref_key}: test function "
                    f"{params[ref_key]!r} not declared")
        studies.append(StudySpec(kind, params))
    if not studies:
        raise ConfigError("config.studies: at least one study required")

    seed = int(raw.get("seed", 0)) & ((1 << 64) - 1)
    output_dir = str(raw.get("output_dir", "out"))
    return ExperimentConfig(d, dim_h, horizon, levels, explicit, fns, ops,
                            studies, seed, output_dir)
