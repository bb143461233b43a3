"""Experiment configuration: a YAML document with a fixed schema.

Unknown keys are rejected.  Example::

    kind: lyapunov
    model: {alpha: 0.3, lambda: 1.0, disorder: uniform}
    energies: [0.5]
    n: 100000
    realizations: 200
    seed: 42
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any

import yaml

from .model import (
    DEFAULT_BAND_GUARD,
    DEFAULT_RESONANCE_TOL,
    BandEdgeError,
    DisorderSpec,
    ModelParams,
    UnsupportedDistribution,
    energy_point,
)

__all__ = ["ConfigError", "ExperimentConfig", "KINDS", "load_config", "parse_config", "apply_override"]

KINDS = (
    "lyapunov",
    "fourth-moment",
    "spectrum-decay",
    "direction",
    "correlator",
    "greens",
    "moments",
    "phase-sweep",
    "diagnostics",
)


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ModelSection:
    alpha: float = 0.5
    lam: float = 1.0
    disorder: str = "uniform"

    def params(self) -> ModelParams:
        return ModelParams(self.alpha, self.lam, DisorderSpec(self.disorder))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: ModelSection = field(default_factory=ModelSection)
    energies: tuple[float, ...] = (0.5,)
    n: int = 100_000
    L: int = 2000
    realizations: int = 50
    seed: int = 0
    output: str | None = None
    # kind-specific knobs
    interval: tuple[float, float] = (-1.0, 1.0)
    p: float = 2.0
    s: float = 0.2
    m: int = 0
    theta0: float = 0.0
    n_grid: tuple[int, ...] | None = None
    window: str = "smooth"
    window_margin: float = 0.25
    lambda_grid: tuple[float, ...] | None = None
    alpha_grid: tuple[float, ...] | None = None
    band_guard: float = DEFAULT_BAND_GUARD
    resonance_tol: float = DEFAULT_RESONANCE_TOL

    # -------------------------------------------------------- serialisation
    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "model":
                v = {"alpha": v.alpha, "lambda": v.lam, "disorder": v.disorder}
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @property
    def params(self) -> ModelParams:
        return self.model.params()


_TUPLE_FLOAT = {"energies", "interval", "lambda_grid", "alpha_grid"}
_TUPLE_INT = {"n_grid"}
_INT = {"n", "L", "realizations", "seed", "m"}
_FLOAT = {"p", "s", "theta0", "window_margin", "band_guard", "resonance_tol"}
_STR = {"kind", "window"}


def _as_float(name: str, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(name, f"must be finite, got {v!r}")
    return v


def _as_int(name: str, v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(name, f"expected an integer, got {v!r}")
    return int(v)


def parse_config(data: dict[str, Any]) -> ExperimentConfig:
    """Build and validate a config from a plain mapping (as loaded from YAML)."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(unknown[0], f"unknown key (allowed: {', '.join(sorted(known))})")
    if "kind" not in data:
        raise ConfigError("kind", f"missing; expected one of {', '.join(KINDS)}")
    kw: dict[str, Any] = {}
    for key, v in data.items():
        if key == "model":
            kw["model"] = _parse_model(v)
        elif key == "output":
            if v is not None and not isinstance(v, str):
                raise ConfigError(key, f"expected a path string, got {v!r}")
            kw[key] = v
        elif v is None and key in {"n_grid", "lambda_grid", "alpha_grid"}:
            kw[key] = None
        elif key in _TUPLE_FLOAT:
            if not isinstance(v, (list, tuple)):
                raise ConfigError(key, f"expected a list of numbers, got {v!r}")
            kw[key] = tuple(_as_float(f"{key}[{i}]", x) for i, x in enumerate(v))
        elif key in _TUPLE_INT:
            if not isinstance(v, (list, tuple)):
                raise ConfigError(key, f"expected a list of integers, got {v!r}")
            kw[key] = tuple(_as_int(f"{key}[{i}]", x) for i, x in enumerate(v))
        elif key in _INT:
            kw[key] = _as_int(key, v)
        elif key in _FLOAT:
            kw[key] = _as_float(key, v)
        elif key in _STR:
            if not isinstance(v, str):
                raise ConfigError(key, f"expected a string, got {v!r}")
            kw[key] = v
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def _parse_model(v) -> ModelSection:
    if not isinstance(v, dict):
        raise ConfigError("model", "expected a mapping with alpha, lambda, disorder")
    unknown = sorted(set(v) - {"alpha", "lambda", "disorder"})
    if unknown:
        raise ConfigError(f"model.{unknown[0]}", "unknown key (allowed: alpha, lambda, disorder)")
    d = ModelSection()
    alpha = _as_float("model.alpha", v.get("alpha", d.alpha))
    lam = _as_float("model.lambda", v.get("lambda", d.lam))
    disorder = v.get("disorder", d.disorder)
    if not isinstance(disorder, str):
        raise ConfigError("model.disorder", f"expected a string, got {disorder!r}")
    return ModelSection(alpha, lam, disorder)


def validate(cfg: ExperimentConfig) -> None:
    """Check the module preconditions that a run of ``cfg`` would hit."""
    if cfg.kind not in KINDS:
        raise ConfigError("kind", f"unknown experiment kind {cfg.kind!r}; expected one of {', '.join(KINDS)}")
    try:
        params = cfg.params
    except UnsupportedDistribution as exc:
        raise ConfigError("model.disorder", str(exc)) from None
    except ValueError as exc:
        raise ConfigError("model.alpha", str(exc)) from None
    if cfg.realizations < 1:
        raise ConfigError("realizations", f"must be >= 1, got {cfg.realizations}")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {cfg.seed}")
    if not cfg.energies:
        raise ConfigError("energies", "must not be empty")
    if cfg.band_guard <= 0 or cfg.band_guard >= 2:
        raise ConfigError("band_guard", f"must lie in (0, 2), got {cfg.band_guard}")
    if len(cfg.interval) != 2 or cfg.interval[0] >= cfg.interval[1]:
        raise ConfigError("interval", f"expected [lo, hi] with lo < hi, got {list(cfg.interval)}")
    if cfg.window not in ("smooth", "indicator"):
        raise ConfigError("window", f"expected 'smooth' or 'indicator', got {cfg.window!r}")
    if cfg.kind != "phase-sweep":
        for i, E in enumerate(cfg.energies):
            try:
                energy_point(E, cfg.resonance_tol, cfg.band_guard)
            except BandEdgeError as exc:
                raise ConfigError(f"energies[{i}]", str(exc)) from None
    kind = cfg.kind
    chain_kinds = {"lyapunov", "fourth-moment", "direction", "diagnostics", "phase-sweep"}
    if kind in chain_kinds and cfg.n < 1000:
        raise ConfigError("n", f"chain length must be >= 1000, got {cfg.n}")
    box_kinds = {"spectrum-decay", "correlator", "greens", "moments"}
    if kind in box_kinds and not 1 <= cfg.L <= 5000:
        raise ConfigError("L", f"box size must lie in [1, 5000], got {cfg.L}")
    if kind == "lyapunov" and params.alpha > 0.5:
        raise ConfigError("model.alpha", f"lyapunov estimates need alpha <= 1/2, got {params.alpha}")
    if kind == "fourth-moment" and params.alpha <= 0.5:
        raise ConfigError("model.alpha", f"fourth-moment runs need alpha > 1/2, got {params.alpha}")
    if kind == "spectrum-decay" and not 0 < params.alpha <= 0.5:
        raise ConfigError("model.alpha", f"decay fits need alpha in (0, 1/2], got {params.alpha}")
    if kind == "correlator" and cfg.realizations < 30:
        raise ConfigError("realizations", f"correlator fits need >= 30 realizations, got {cfg.realizations}")
    if kind == "greens" and not 0 < cfg.s < 1:
        raise ConfigError("s", f"must lie in (0, 1), got {cfg.s}")
    if kind == "moments" and cfg.p < 0:
        raise ConfigError("p", f"must be >= 0, got {cfg.p}")
    if kind in {"correlator", "greens"}:
        if not 0 <= cfg.m <= cfg.L:
            raise ConfigError("m", f"base site must lie in [0, L], got {cfg.m}")
        if cfg.n_grid is not None and any(not 0 <= x <= cfg.L for x in cfg.n_grid):
            raise ConfigError("n_grid", "sites must lie in [0, L]")
    if kind == "phase-sweep":
        for name in ("lambda_grid", "alpha_grid"):
            g = getattr(cfg, name)
            if g is not None and not g:
                raise ConfigError(name, "must not be empty")
        for i, a in enumerate(cfg.alpha_grid or (params.alpha,)):
            if a <= 0:
                raise ConfigError(f"alpha_grid[{i}]", f"must be positive, got {a}")


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"invalid YAML in {path}: {exc}") from None
    return parse_config(data)


def apply_override(data: dict[str, Any], assignment: str) -> None:
    """Apply ``KEY=VALUE`` (dotted keys for nesting; value parsed as YAML) in place."""
    if "=" not in assignment:
        raise ConfigError("--override", f"expected KEY=VALUE, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(key, f"cannot parse value {raw!r}: {exc}") from None
    parts = key.strip().split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(key, f"{part} is not a mapping")
    node[parts[-1]] = value
