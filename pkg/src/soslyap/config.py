"""Flat text job configuration for the command-line front end.

Grammar: one ``key = value`` assignment per line; blank lines and lines
starting with ``#`` are skipped.  Values are a number, a bare word, or a
comma-separated list of numbers.  Polynomial coefficients are listed in
ascending order of degree.  Unknown keys are rejected outright, which
catches typos before a batch run burns solver time.

``emit_config`` writes every known key in a fixed order, so emit ->
parse -> emit is byte-stable and parse(emit(cfg)) == cfg.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

from .polynomials import Poly
from .systems import PdeSystem

__all__ = [
    "ConfigError",
    "JobConfig",
    "parse_config",
    "emit_config",
    "load_config",
    "build_system",
    "resolve_profile",
]


class ConfigError(ValueError):
    """Malformed, unknown, or inconsistent configuration input."""


@dataclass
class JobConfig:
    # plant: coefficient lists are ascending in x
    a: tuple[float, ...] = (1.0,)
    b: tuple[float, ...] = (0.0,)
    c: tuple[float, ...] = (0.0,)
    bc: str = "mixed"
    alpha: float | None = None
    # certificate shape and margins
    d1: int = 3
    d2: int | None = None
    epsilon: float = 1e-3
    delta: float = 1e-3
    # sweep layout
    parameter: str = "lambda"
    degrees: tuple[int, ...] = ()
    bracket: tuple[float, float] | None = None
    resolution: float = 1e-3
    mode: str = "auto"
    static_variant: bool = False
    kernel_free: bool = False
    # simulation
    T: float = 3.0
    dt: float = 1e-4
    N: int = 201
    w0: str | tuple[float, ...] = "two_bump"
    w0_hat: str | tuple[float, ...] | None = None
    loop: str = "zero"
    # inversion demo
    invert_nodes: int = 257
    invert_kmax: int = 10
    # plumbing (command line flags override)
    out: str | None = None
    jobs: int | None = None


_FIELD_ORDER = [f.name for f in fields(JobConfig)]


def _format_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, tuple):
        return ", ".join(repr(float(v)) if isinstance(v, float) else str(v) for v in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def emit_config(cfg: JobConfig) -> str:
    lines = []
    for name in _FIELD_ORDER:
        val = getattr(cfg, name)
        if val is None:
            continue
        lines.append(f"{name} = {_format_value(val)}")
    return "\n".join(lines) + "\n"


def _parse_number_list(raw: str, key: str) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",")]
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated number list, got {raw!r}")


def _coerce(key: str, raw: str):
    kind = _KINDS[key]
    if kind == "floats":
        return _parse_number_list(raw, key)
    if kind == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}")
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
    if kind == "ints":
        vals = _parse_number_list(raw, key)
        if any(v != int(v) for v in vals):
            raise ConfigError(f"{key}: expected integers, got {raw!r}")
        return tuple(int(v) for v in vals)
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {raw!r}")
    if kind == "pair":
        vals = _parse_number_list(raw, key)
        if len(vals) != 2:
            raise ConfigError(f"{key}: expected exactly two numbers, got {raw!r}")
        return vals
    if kind == "profile":
        if "," in raw or _is_number(raw):
            return _parse_number_list(raw, key)
        return raw
    return raw  # word


def _is_number(raw: str) -> bool:
    try:
        float(raw)
        return True
    except ValueError:
        return False


_KINDS = {
    "a": "floats",
    "b": "floats",
    "c": "floats",
    "bc": "word",
    "alpha": "float",
    "d1": "int",
    "d2": "int",
    "epsilon": "float",
    "delta": "float",
    "parameter": "word",
    "degrees": "ints",
    "bracket": "pair",
    "resolution": "float",
    "mode": "word",
    "static_variant": "bool",
    "kernel_free": "bool",
    "T": "float",
    "dt": "float",
    "N": "int",
    "w0": "profile",
    "w0_hat": "profile",
    "loop": "word",
    "invert_nodes": "int",
    "invert_kmax": "int",
    "out": "word",
    "jobs": "int",
}


def parse_config(text: str) -> JobConfig:
    cfg = JobConfig()
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _KINDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        seen.add(key)
        setattr(cfg, key, _coerce(key, raw))
    _validate(cfg)
    return cfg


def load_config(path) -> JobConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _validate(cfg: JobConfig) -> None:
    if not cfg.a:
        raise ConfigError("a: diffusion coefficient list must be nonempty")
    if cfg.bc not in ("mixed", "dirichlet"):
        raise ConfigError(f"bc: expected mixed or dirichlet, got {cfg.bc!r}")
    if cfg.parameter not in ("lambda", "delta"):
        raise ConfigError(f"parameter: expected lambda or delta, got {cfg.parameter!r}")
    if cfg.loop not in ("zero", "state_feedback", "output_feedback"):
        raise ConfigError(f"loop: unknown loop shape {cfg.loop!r}")
    if cfg.mode not in ("auto", "primal", "dual", "control", "control_static", "observer"):
        raise ConfigError(f"mode: unknown mode {cfg.mode!r}")
    if cfg.d1 < 1 or (cfg.d2 is not None and cfg.d2 < 1):
        raise ConfigError("certificate degrees must be at least 1")
    if cfg.epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if cfg.delta <= 0:
        raise ConfigError("delta must be positive")
    if cfg.bracket is not None and cfg.bracket[0] >= cfg.bracket[1]:
        raise ConfigError("bracket: lower end must be below upper end")
    for key in ("w0", "w0_hat"):
        val = getattr(cfg, key)
        if isinstance(val, str):
            from .pde_sim import W0_PRESETS

            if val not in W0_PRESETS:
                known = ", ".join(sorted(W0_PRESETS))
                raise ConfigError(f"{key}: unknown preset {val!r} (presets: {known})")


def build_system(cfg: JobConfig) -> PdeSystem:
    from .systems import InvalidSystem

    try:
        return PdeSystem(
            Poly.from_coeffs("x", list(cfg.a)),
            Poly.from_coeffs("x", list(cfg.b)),
            Poly.from_coeffs("x", list(cfg.c)),
            cfg.bc,
            alpha=cfg.alpha,
        )
    except InvalidSystem as exc:
        raise ConfigError(str(exc)) from exc


def resolve_profile(spec) -> Callable[[np.ndarray], np.ndarray]:
    """Initial-state spec (preset name or ascending coefficients) to a callable."""
    from .pde_sim import W0_PRESETS

    if spec is None:
        raise ConfigError("missing initial-state profile")
    if isinstance(spec, str):
        try:
            return W0_PRESETS[spec]
        except KeyError:
            known = ", ".join(sorted(W0_PRESETS))
            raise ConfigError(f"unknown preset {spec!r} (presets: {known})")
    poly = Poly.from_coeffs("x", list(spec))
    return lambda x: poly.eval_grid({"x": x}) * np.ones_like(x)
