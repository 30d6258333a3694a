"""Run configuration: one strictly validated JSON document.

All defaults reproduce the reference tank experiment::

    {
      "water":  {"purchase_cost": 0.25, "shortage_penalty": 0.5, "flush_penalty": 0.5,
                 "holding_slope": 15.0, "event_rate": 40.0, "duration_rate": 2.0,
                 "horizon_cap": 6, "discount": 0.8},
      "solver": {"epsilon": 0.1, "n_atoms": 500, "seed": 0,
                 "x_max": 120.0, "n_x": 241, "u_max": 120.0, "n_u": 241},
      "vi":     {"tol": 1e-6, "max_iter": 100000, "discounts": [0.8, 0.95, 0.99]},
      "sim":    {"episodes": 10000, "tail_tol": 0.001, "seed": 1}
    }

Every block and key is optional; unknown ones are rejected.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields, replace

from .water import WaterParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WaterBlock:
    purchase_cost: float = 0.25
    shortage_penalty: float = 0.5
    flush_penalty: float = 0.5
    holding_slope: float = 15.0
    event_rate: float = 40.0
    duration_rate: float = 2.0
    horizon_cap: int = 6
    discount: float = 0.8


@dataclass(frozen=True)
class SolverBlock:
    epsilon: float = 0.1
    n_atoms: int = 500
    seed: int = 0
    x_max: float = 120.0
    n_x: int = 241
    u_max: float = 120.0
    n_u: int = 241


@dataclass(frozen=True)
class VIBlock:
    tol: float = 1e-6
    max_iter: int = 100_000
    discounts: tuple = (0.8, 0.95, 0.99)


@dataclass(frozen=True)
class SimBlock:
    episodes: int = 10_000
    tail_tol: float = 1e-3
    seed: int = 1


@dataclass(frozen=True)
class RunConfig:
    water: WaterBlock = field(default_factory=WaterBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    vi: VIBlock = field(default_factory=VIBlock)
    sim: SimBlock = field(default_factory=SimBlock)

    def water_params(self, **overrides) -> WaterParams:
        kw = asdict(self.water)
        kw.update({k: v for k, v in asdict(self.solver).items() if k != "epsilon"})
        kw.update(overrides)
        return WaterParams(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vi"]["discounts"] = list(d["vi"]["discounts"])
        return d

    def with_overrides(self, seed=None, epsilon=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, solver=replace(cfg.solver, seed=seed), sim=replace(cfg.sim, seed=seed))
        if epsilon is not None:
            cfg = replace(cfg, solver=replace(cfg.solver, epsilon=epsilon))
        check(cfg)
        return cfg


_BLOCKS = {"water": WaterBlock, "solver": SolverBlock, "vi": VIBlock, "sim": SimBlock}
_U64 = 2**64


def _line_of(text: str, key: str, after: int = 0) -> int | None:
    m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, after)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(text, block, key=None):
    pos = 0
    if text is not None:
        bm = re.compile(r'"%s"\s*:' % re.escape(block)).search(text)
        pos = bm.start() if bm else 0
        line = _line_of(text, key, pos) if key else _line_of(text, block)
        if line is not None:
            return f"line {line}: "
    return ""


def _coerce(value, typ, name):
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected {typ.__name__}, got boolean")
    if typ is float and isinstance(value, (int, float)):
        return float(value)
    if typ is int and isinstance(value, int):
        return value
    if typ is tuple and isinstance(value, list):
        return tuple(_coerce(v, float, f"{name}[]") for v in value)
    raise ConfigError(f"{name}: expected {typ.__name__}, got {type(value).__name__}")


def from_dict(doc: dict, text: str | None = None) -> RunConfig:
    """Build a config from parsed JSON; ``text`` lets errors carry line numbers."""
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object")
    blocks = {}
    for name, value in doc.items():
        if name not in _BLOCKS:
            raise ConfigError(f"{_where(text, name)}unknown block {name!r}")
        cls = _BLOCKS[name]
        if not isinstance(value, dict):
            raise ConfigError(f"{_where(text, name)}block {name!r} must be an object")
        types = {f.name: type(f.default) for f in fields(cls)}
        kw = {}
        for key, raw in value.items():
            if key not in types:
                raise ConfigError(f"{_where(text, name, key)}unknown key {key!r} in block {name!r}")
            try:
                kw[key] = _coerce(raw, types[key], f"{name}.{key}")
            except ConfigError as exc:
                raise ConfigError(f"{_where(text, name, key)}{exc}") from None
        blocks[name] = cls(**kw)
    cfg = RunConfig(**blocks)
    check(cfg, text)
    return cfg


def check(cfg: RunConfig, text: str | None = None) -> None:
    problems = []
    try:
        cfg.water_params()
    except ValueError as exc:
        for item in str(exc).split(": ", 1)[-1].split("; "):
            key = item.split(":", 1)[0]
            block = "water" if key in WaterBlock.__dataclass_fields__ else "solver"
            problems.append(f"{_where(text, block, key)}{block}.{item}")
    s, v, m = cfg.solver, cfg.vi, cfg.sim
    if not s.epsilon > 0:
        problems.append(f"{_where(text, 'solver', 'epsilon')}solver.epsilon: must be > 0")
    for block, obj in (("solver", s), ("sim", m)):
        if not 0 <= obj.seed < _U64:
            problems.append(f"{_where(text, block, 'seed')}{block}.seed: must be an unsigned 64-bit integer")
    if not v.tol > 0:
        problems.append(f"{_where(text, 'vi', 'tol')}vi.tol: must be > 0")
    if not v.max_iter >= 1:
        problems.append(f"{_where(text, 'vi', 'max_iter')}vi.max_iter: must be >= 1")
    if not v.discounts or not all(0 <= g < 1 for g in v.discounts):
        problems.append(f"{_where(text, 'vi', 'discounts')}vi.discounts: need values in [0, 1)")
    if not m.episodes >= 1:
        problems.append(f"{_where(text, 'sim', 'episodes')}sim.episodes: must be >= 1")
    if not m.tail_tol > 0:
        problems.append(f"{_where(text, 'sim', 'tail_tol')}sim.tail_tol: must be > 0")
    if problems:
        raise ConfigError("\n".join(problems))


def loads(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from None
    return from_dict(doc, text)


def load(path) -> RunConfig:
    with open(path) as fh:
        return loads(fh.read())
