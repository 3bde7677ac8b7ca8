"""Run configuration documents.

A config is a YAML mapping with a ``schema_version`` field, a ``model``
block holding the primitive parameters and optional blocks for the curve
grid, the verification grids and the simulation settings. Unknown keys are
rejected at every level so typos never pass silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .params import GrossBlock, ModelParams
from .sim import COMPARISONS, SimConfig
from .verify import GridSpec

SCHEMA_VERSION = 1

_MODEL_KEYS = {f.name for f in fields(ModelParams)}
_GROSS_KEYS = {f.name for f in fields(GrossBlock)}
_GRID_KEYS = {f.name for f in fields(GridSpec)}
_SIM_KEYS = {"dt", "n_paths", "seed", "x1", "x2", "horizon", "antithetic", "injection", "compare"}
_TOP_KEYS = {"schema_version", "model", "closure", "grid", "verify", "simulate", "name"}


class SchemaError(ConfigError):
    """The config document does not match the schema; ``field`` names the offender."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class SimSettings:
    """Simulation block: the sampler config plus the rules to compare against."""

    config: SimConfig = SimConfig()
    injection: str = "a7-reflect"
    compare: tuple[str, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    name: str = ""
    closure: str = "published"
    grid: tuple[float, float, float] = (0.0, 4.0, 0.01)
    verify: GridSpec = GridSpec()
    sim: SimSettings = field(default_factory=SimSettings)


def _reject_unknown(block: dict, allowed: set, where: str) -> None:
    extra = sorted(set(block) - allowed)
    if extra:
        path = f"{where}.{extra[0]}" if where else extra[0]
        raise SchemaError(path, "unknown key")


def _mapping(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(where, "must be a mapping")
    return value


def _number(value, where: str) -> float:
    # YAML 1.1 reads "5e-4" (no dot) as a string.
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise SchemaError(where, f"must be a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(where, f"must be a number, got {value!r}")
    return float(value)


def parse_grid(text) -> tuple[float, float, float]:
    """``"MIN:MAX:STEP"`` or a 3-element list into a validated triple."""
    if isinstance(text, str):
        parts = text.split(":")
        if len(parts) != 3:
            raise SchemaError("grid", f"expected MIN:MAX:STEP, got {text!r}")
        try:
            lo, hi, step = (float(p) for p in parts)
        except ValueError:
            raise SchemaError("grid", f"expected numbers in {text!r}") from None
    elif isinstance(text, (list, tuple)) and len(text) == 3:
        lo, hi, step = (_number(v, "grid") for v in text)
    else:
        raise SchemaError("grid", f"expected MIN:MAX:STEP, got {text!r}")
    if not all(math.isfinite(v) for v in (lo, hi, step)):
        raise SchemaError("grid", "entries must be finite")
    if lo < 0 or hi < lo or step <= 0:
        raise SchemaError("grid", "need 0 <= MIN <= MAX and STEP > 0")
    return lo, hi, step


def grid_points(grid: tuple[float, float, float]):
    """Grid nodes ``MIN + k*STEP`` up to ``MAX`` (inclusive within rounding)."""
    lo, hi, step = grid
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def _params(block) -> ModelParams:
    block = _mapping(block, "model")
    _reject_unknown(block, _MODEL_KEYS, "model")
    missing = sorted(_MODEL_KEYS - {"gross"} - set(block))
    if missing:
        raise SchemaError(f"model.{missing[0]}", "missing")
    values = {k: _number(block[k], f"model.{k}") for k in block if k != "gross"}
    gross = None
    if block.get("gross") is not None:
        g = _mapping(block["gross"], "model.gross")
        _reject_unknown(g, _GROSS_KEYS, "model.gross")
        missing = sorted(_GROSS_KEYS - set(g))
        if missing:
            raise SchemaError(f"model.gross.{missing[0]}", "missing")
        gross = GrossBlock(**{k: _number(v, f"model.gross.{k}") for k, v in g.items()})
    return ModelParams(**values, gross=gross)


def _grid_spec(block) -> GridSpec:
    block = _mapping(block, "verify")
    _reject_unknown(block, _GRID_KEYS, "verify")
    out = {}
    for k, v in block.items():
        kind = type(getattr(GridSpec(), k))
        out[k] = int(_number(v, f"verify.{k}")) if kind is int else _number(v, f"verify.{k}")
    return replace(GridSpec(), **out)


def _sim(block) -> SimSettings:
    block = _mapping(block, "simulate")
    _reject_unknown(block, _SIM_KEYS, "simulate")
    cfg = SimConfig()
    changes = {}
    for key, attr in (("dt", "dt"), ("x1", "x1_0"), ("x2", "x2_0"), ("horizon", "horizon")):
        if key in block and block[key] is not None:
            changes[attr] = _number(block[key], f"simulate.{key}")
    for key in ("n_paths", "seed"):
        if key in block:
            v = block[key]
            if isinstance(v, bool) or not isinstance(v, int):
                raise SchemaError(f"simulate.{key}", f"must be an integer, got {v!r}")
            changes[key] = v
    if "antithetic" in block:
        if not isinstance(block["antithetic"], bool):
            raise SchemaError("simulate.antithetic", "must be true or false")
        changes["antithetic"] = block["antithetic"]
    injection = block.get("injection", "a7-reflect")
    if injection not in ("a7-reflect", "a7-ruin", "none"):
        raise SchemaError("simulate.injection", f"unknown mode {injection!r}")
    compare = block.get("compare", []) or []
    if not isinstance(compare, list) or any(c not in COMPARISONS for c in compare):
        raise SchemaError("simulate.compare", f"entries must be among {list(COMPARISONS)}")
    return SimSettings(replace(cfg, **changes), injection, tuple(compare))


def from_mapping(doc) -> RunConfig:
    """Validate a parsed document and build a :class:`RunConfig`.

    Only the document structure is checked here; parameter ranges are
    checked by the solver so every entry point reports them the same way.
    """
    doc = _mapping(doc, "config")
    _reject_unknown(doc, _TOP_KEYS, "")
    if "schema_version" not in doc:
        raise SchemaError("schema_version", "missing")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaError("schema_version", f"unsupported version {doc['schema_version']!r}")
    if "model" not in doc:
        raise SchemaError("model", "missing")
    closure = doc.get("closure", "published")
    if closure not in ("published", "consistent"):
        raise SchemaError("closure", f"must be 'published' or 'consistent', got {closure!r}")
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise SchemaError("name", "must be a string")
    return RunConfig(
        params=_params(doc["model"]),
        name=name,
        closure=closure,
        grid=parse_grid(doc["grid"]) if "grid" in doc else RunConfig.grid,
        verify=_grid_spec(doc["verify"]) if "verify" in doc else GridSpec(),
        sim=_sim(doc["simulate"]) if "simulate" in doc else SimSettings(),
    )


def load(path) -> RunConfig:
    """Read and validate a YAML config file."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError("config", f"not valid YAML: {exc}") from None
    return from_mapping(doc)


def to_mapping(run: RunConfig) -> dict:
    """Inverse of :func:`from_mapping` (defaults included)."""
    sim = run.sim.config
    return {
        "schema_version": SCHEMA_VERSION,
        "name": run.name,
        "model": run.params.to_dict(),
        "closure": run.closure,
        "grid": list(run.grid),
        "verify": {f.name: getattr(run.verify, f.name) for f in fields(GridSpec)},
        "simulate": {
            "dt": sim.dt,
            "n_paths": sim.n_paths,
            "seed": sim.seed,
            "x1": sim.x1_0,
            "x2": sim.x2_0,
            "horizon": sim.horizon,
            "antithetic": sim.antithetic,
            "injection": run.sim.injection,
            "compare": list(run.sim.compare),
        },
    }


__all__ = [
    "RunConfig",
    "SchemaError",
    "SimSettings",
    "from_mapping",
    "grid_points",
    "load",
    "parse_grid",
    "to_mapping",
]
