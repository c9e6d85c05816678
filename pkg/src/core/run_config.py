"""
Run Configuration

A run is described by a small text file of ``key = value`` lines with ``#``
comments. Every key is optional; missing keys take the defaults below,
which reproduce the bench timing (2 MHz symbols, 5 ms basis blocks).

    # 80% channel
    seed = 7
    eta = 0.8
    delta = 0.14
    epsilon_pa = 2^-64
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Optional

from src.core.gaussian_source import ChannelModel, SourceMode, SourceModel, TimingConfig
from src.core.security import Attack, SecurityContext
from src.processors.distillation import EveBound

logger = logging.getLogger(__name__)

TRANSPORTS = ("queue", "socket")


class ConfigError(ValueError):
    """Invalid run configuration; names the offending key and line."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


# ── Value parsers ───────────────────────────────────────────────────

_POWER = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*\^\s*(-?\d+(?:\.\d+)?)\s*$")


def _parse_float(raw: str) -> float:
    """Float, also accepting ``base^exponent`` such as ``2^-64``."""
    m = _POWER.match(raw)
    if m:
        return float(m.group(1)) ** float(m.group(2))
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError(f"not a finite number: {raw}")
    return value


def _parse_int(raw: str) -> int:
    value = _parse_float(raw)
    if value != int(value):
        raise ValueError(f"not an integer: {raw}")
    return int(value)


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {raw}")


def _parse_optional_float(raw: str) -> Optional[float]:
    return None if raw.strip().lower() in ("", "none") else _parse_float(raw)


_PARSERS: dict[str, Callable[[str], Any]] = {
    "seed": _parse_int,
    "n_symbols": _parse_int,
    "source_mode": lambda raw: SourceMode(raw.strip().lower()),
    "V": _parse_float,
    "r": _parse_optional_float,
    "eta": _parse_float,
    "delta": _parse_float,
    "attack": lambda raw: Attack(raw.strip().lower()),
    "symbol_rate_hz": _parse_float,
    "dt_switch_s": _parse_float,
    "dT_sample_s": _parse_float,
    "sideband_hz": _parse_float,
    "epsilon_pa": _parse_float,
    "cascade_passes": _parse_int,
    "reconciliation_efficiency": _parse_float,
    "postselect": _parse_bool,
    "eve_bound": lambda raw: EveBound(raw.strip().lower()),
    "transport": lambda raw: raw.strip().lower(),
    "out_dir": lambda raw: raw.strip(),
}

_RANGES: dict[str, tuple[Callable[[Any], bool], str]] = {
    "seed": (lambda v: v >= 0, "must be >= 0"),
    "n_symbols": (lambda v: v > 0, "must be > 0"),
    "V": (lambda v: v >= 1.0, "must be >= 1"),
    "r": (lambda v: v is None or v >= 0.0, "must be >= 0"),
    "eta": (lambda v: 0.0 < v <= 1.0, "must satisfy 0 < eta <= 1"),
    "delta": (lambda v: v >= 0.0, "must be >= 0"),
    "symbol_rate_hz": (lambda v: v > 0.0, "must be > 0"),
    "dt_switch_s": (lambda v: v > 0.0, "must be > 0"),
    "dT_sample_s": (lambda v: v > 0.0, "must be > 0"),
    "sideband_hz": (lambda v: v >= 0.0, "must be >= 0"),
    "epsilon_pa": (lambda v: 0.0 < v < 1.0, "must satisfy 0 < epsilon < 1"),
    "cascade_passes": (lambda v: v >= 1, "must be >= 1"),
    "reconciliation_efficiency": (lambda v: v >= 1.0, "must be >= 1"),
    "transport": (lambda v: v in TRANSPORTS, f"must be one of {', '.join(TRANSPORTS)}"),
    "out_dir": (lambda v: bool(v), "must not be empty"),
}


def _check_range(key: str, value: Any) -> None:
    if key in _RANGES:
        ok, why = _RANGES[key]
        if not ok(value):
            raise ConfigError(f"'{key}' {why} (got {value!r})", key=key)


# ── RunConfig ───────────────────────────────────────────────────────

@dataclass
class RunConfig:
    """Public parameters shared by both parties of a run."""

    seed: int = 0
    n_symbols: int = 100_000
    source_mode: SourceMode = SourceMode.EFFECTIVE
    V: float = 8.35
    r: Optional[float] = None
    eta: float = 0.8
    delta: float = 0.14
    attack: Attack = Attack.COLLECTIVE
    symbol_rate_hz: float = 2e6
    dt_switch_s: float = 5e-3
    dT_sample_s: float = 5e-7
    sideband_hz: float = 2e6
    epsilon_pa: float = 2.0 ** -64
    cascade_passes: int = 4
    reconciliation_efficiency: float = 1.25
    postselect: bool = True
    eve_bound: EveBound = EveBound.MEAN
    transport: str = "queue"
    out_dir: str = "output"

    def __post_init__(self) -> None:
        self.source_mode = SourceMode(self.source_mode)
        self.attack = Attack(self.attack)
        self.eve_bound = EveBound(self.eve_bound)
        for f in fields(self):
            _check_range(f.name, getattr(self, f.name))
        if self.dt_switch_s < self.dT_sample_s:
            raise ConfigError("'dt_switch_s' must not be shorter than 'dT_sample_s'", key="dt_switch_s")
        if self.source_mode is SourceMode.MINIMUM_UNCERTAINTY and self.r is not None:
            self.V = math.cosh(2.0 * self.r)
        if 2.0 * self.eta <= self.delta:
            logger.warning(f"2*eta <= delta (eta={self.eta}, delta={self.delta}): no secure key is expected")

    # -- serialisation helpers --

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        for key in ("source_mode", "attack", "eve_bound"):
            data[key] = data[key].value
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunConfig:
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown key '{sorted(unknown)[0]}'", key=sorted(unknown)[0])
        return cls(**data)

    def with_overrides(self, **overrides: Any) -> RunConfig:
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(data)

    # -- derived models --

    def source(self) -> SourceModel:
        if self.source_mode is SourceMode.MINIMUM_UNCERTAINTY:
            r = self.r if self.r is not None else 0.5 * math.acosh(self.V)
            return SourceModel.from_r(r)
        return SourceModel.effective(self.V, self.r)

    def channel(self) -> ChannelModel:
        return ChannelModel(eta=self.eta, delta=self.delta)

    def timing(self) -> TimingConfig:
        return TimingConfig(
            dt_switch=self.dt_switch_s,
            dT_sample=self.dT_sample_s,
            symbol_rate=self.symbol_rate_hz,
            sideband_hz=self.sideband_hz,
        )

    def security_context(self) -> SecurityContext:
        return SecurityContext(eta=self.eta, delta=self.delta, V=self.source().V, attack=self.attack)


# ── Loading ─────────────────────────────────────────────────────────

def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines into a validated RunConfig."""
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{raw_line.strip()}'", line=lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"Unknown key '{key}'", key=key, line=lineno)
        if key in values:
            raise ConfigError(f"Duplicate key '{key}' (first set on line {lines[key]})", key=key, line=lineno)
        try:
            value = _PARSERS[key](raw)
        except ValueError as e:
            raise ConfigError(f"Malformed value for '{key}': {e}", key=key, line=lineno) from None
        try:
            _check_range(key, value)
        except ConfigError as e:
            raise ConfigError(str(e), key=key, line=lineno) from None
        values[key] = value
        lines[key] = lineno

    try:
        return RunConfig(**values)
    except ConfigError as e:
        raise ConfigError(str(e), key=e.key, line=lines.get(e.key)) from None


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a run configuration file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ConfigError(f"Config file {path.name} is not UTF-8 text: {e.reason} at byte {e.start}") from None
    config = parse_config(text)
    logger.info(f"Loaded config {path.name}: eta={config.eta}, delta={config.delta}, V={config.V}")
    return config
