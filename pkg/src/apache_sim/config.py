"""INI configuration: [ring] [fu] [dimm] [scheduler].

Every key is optional; missing keys take the dataclass defaults. The bundled
calibration file (data/calibration.ini) documents the values used for the
op/s and bandwidth numbers. ``load_config`` falls back to the file named by
APACHE_SIM_CONFIG, then to the bundled calibration.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import Optional

from apache_sim.arch import FuConfig
from apache_sim.errors import ConfigurationError, InvalidParameterError
from apache_sim.memory import DimmConfig

ENV_VAR = "APACHE_SIM_CONFIG"


@dataclass(frozen=True)
class RingConfig:
    """Timing-level parameter sets (full scale, never run functionally)."""

    # gate bootstrapping
    tfhe_n: int = 500
    tfhe_N: int = 1024
    tfhe_bk_levels: int = 2
    tfhe_ks_t: int = 4
    tfhe_word_bits: int = 32
    # circuit bootstrapping
    cb_n: int = 630
    cb_N: int = 1024
    cb_bk_levels: int = 2
    cb_levels: int = 2
    cb_privks_t: int = 2
    cb_word_bits: int = 64
    # leveled CKKS
    ckks_N: int = 1 << 16
    ckks_limbs: int = 44
    ckks_dnum: int = 4
    ckks_special: int = 11
    ckks_word_bits: int = 32
    # VSP-style RAM
    vsp_lwe_n: int = 1024
    vsp_word_bits: int = 64
    vsp_ram_entries: int = 512
    # key-switch dims for the bandwidth comparison (grid-search result)
    pubks_n: int = 2048
    pubks_t: int = 11
    pubks_key_bytes: float = 79 * (1 << 20)
    privks_p: int = 3
    privks_n: int = 2048
    privks_t: int = 8
    privks_key_bytes: float = 1.8 * (1 << 30)

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigurationError(f"ring.{f.name} must be positive")
        for name in ("tfhe_word_bits", "cb_word_bits", "ckks_word_bits", "vsp_word_bits"):
            if getattr(self, name) not in (32, 64):
                raise ConfigurationError(f"ring.{name} must be 32 or 64")


@dataclass(frozen=True)
class SchedulerConfig:
    dimms: int = 2
    io_bandwidth: float = 32e9  # bytes/s, one shared host channel
    wave_size: int = 64  # same-key operators sharing one streamed key
    aggregate: bool = True

    def __post_init__(self):
        if self.dimms < 1:
            raise ConfigurationError("scheduler.dimms must be >= 1")
        if self.io_bandwidth <= 0 or self.wave_size < 1:
            raise ConfigurationError("io_bandwidth and wave_size must be positive")


@dataclass(frozen=True)
class SimConfig:
    ring: RingConfig = field(default_factory=RingConfig)
    fu: FuConfig = field(default_factory=FuConfig)
    dimm: DimmConfig = field(default_factory=DimmConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)

    def with_dimms(self, n: int) -> "SimConfig":
        return replace(self, scheduler=replace(self.scheduler, dimms=n))

    def with_fu(self, **kw) -> "SimConfig":
        return replace(self, fu=replace(self.fu, **kw))


SECTIONS = {"ring": RingConfig, "fu": FuConfig, "dimm": DimmConfig, "scheduler": SchedulerConfig}


def _parse(raw: str, default, key: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(float(raw)) if "e" in raw.lower() else int(raw, 0)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str) -> SimConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case (tRCD etc.)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(str(exc)) from exc
    parts = {}
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigurationError(f"unknown section [{name}]")
    for name, cls in SECTIONS.items():
        defaults = cls()
        known = {f.name for f in fields(cls)}
        kw = {}
        if cp.has_section(name):
            for key, raw in cp.items(name):
                if key not in known:
                    raise ConfigurationError(f"unknown key {name}.{key}")
                kw[key] = _parse(raw, getattr(defaults, key), f"{name}.{key}")
        try:
            parts[name] = cls(**kw)
        except InvalidParameterError as exc:
            raise ConfigurationError(str(exc)) from exc
    return SimConfig(**parts)


def default_config_text() -> str:
    return resources.files("apache_sim").joinpath("data/calibration.ini").read_text()


def load_config(path: Optional[str] = None) -> SimConfig:
    path = path or os.environ.get(ENV_VAR)
    if path is None:
        return parse_config(default_config_text())
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc


def dump_config(cfg: SimConfig) -> str:
    """Resolved config as INI text (written next to every report)."""
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        sec = getattr(cfg, name)
        for f in fields(sec):
            lines.append(f"{f.name} = {getattr(sec, f.name)}")
        lines.append("")
    return "\n".join(lines)
