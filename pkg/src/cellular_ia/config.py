"""INI configuration schema and loader.

Recognised sections and keys::

    [system]    L, M, K, N                       (integers)
    [feedback]  t_fb, t_c                        (reals, t_c > 0)
    [scheme]    name, snr_db, trials, seed,
                constellation, genie
    [sweep]     preset, mode, rho, M, L, K,
                n_min, n_max, schemes, empirical
    [output]    dir, transcript, narrative

Any other section or key is rejected.  ``snr_db = inf`` means noiseless;
``rho`` accepts fractions such as ``3/2``; ``schemes`` is comma separated.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Mapping, Optional, Tuple

from .analysis import PRESETS, SweepSpec
from .core import CONSTELLATIONS, FeedbackModel, SystemConfig
from .errors import InvalidConfigError
from .schemes import SCHEMES


class ConfigError(InvalidConfigError):
    """Malformed configuration file or override."""


def _int(v):
    return int(v)


def _float(v):
    v = v.strip().lower()
    if v in ("inf", "+inf", "infinity"):
        return math.inf
    return float(v)


def _bool(v):
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _scheme(v):
    v = v.strip().lower()
    if v not in SCHEMES:
        raise ValueError(f"unknown scheme {v!r}")
    return v


def _schemes(v):
    return tuple(_scheme(s) for s in v.split(",") if s.strip())


def _constellation(v):
    v = v.strip().lower()
    if v not in CONSTELLATIONS:
        raise ValueError(f"unknown constellation {v!r}")
    return v


def _mode(v):
    v = v.strip()
    if v not in ("fixed_rho", "fixed_M"):
        raise ValueError(f"mode must be fixed_rho or fixed_M, got {v!r}")
    return v


def _preset(v):
    v = v.strip()
    if v not in PRESETS:
        raise ValueError(f"unknown preset {v!r}; choose from {sorted(PRESETS)}")
    return v


SCHEMA = {
    "system": {"L": _int, "M": _int, "K": _int, "N": _int},
    "feedback": {"t_fb": _float, "t_c": _float},
    "scheme": {"name": _scheme, "snr_db": _float, "trials": _int, "seed": _int,
               "constellation": _constellation, "genie": _bool},
    "sweep": {"preset": _preset, "mode": _mode, "rho": Fraction, "M": _int, "L": _int,
              "K": _int, "n_min": _int, "n_max": _int, "schemes": _schemes, "empirical": _bool},
    "output": {"dir": str, "transcript": _bool, "narrative": _bool},
}


@dataclass
class Settings:
    """Parsed values keyed by (section, key)."""

    values: Dict[Tuple[str, str], object] = field(default_factory=dict)

    def get(self, section, key, default=None):
        return self.values.get((section, key), default)

    def has_section(self, section):
        return any(s == section for s, _ in self.values)

    def set(self, section, key, raw: str):
        self.values[section, key] = _parse(section, key, raw)

    def system(self, default: Optional[SystemConfig] = None) -> SystemConfig:
        keys = ("L", "M", "K", "N")
        present = [k for k in keys if ("system", k) in self.values]
        if not present:
            if default is None:
                raise ConfigError("missing [system] section")
            return default
        missing = [k for k in keys if k not in present]
        if missing:
            raise ConfigError(f"[system] is missing key(s): {', '.join(missing)}")
        return SystemConfig(*(self.values["system", k] for k in keys))

    def feedback(self) -> FeedbackModel:
        return FeedbackModel(self.get("feedback", "t_fb", 1.0), self.get("feedback", "t_c", 1.0))

    def sweep(self) -> SweepSpec:
        preset = self.get("sweep", "preset")
        if preset is not None:
            return PRESETS[preset]
        mode = self.get("sweep", "mode")
        if mode is None:
            raise ConfigError("[sweep] needs either 'preset' or 'mode'")
        try:
            return SweepSpec(
                mode=mode,
                L=self.get("sweep", "L", 2),
                K=self.get("sweep", "K", 3),
                n_range=(self.get("sweep", "n_min", 5), self.get("sweep", "n_max", 25)),
                rho=self.get("sweep", "rho"),
                M=self.get("sweep", "M"),
                schemes=self.get("sweep", "schemes", ("tdma", "rir", "bdria")),
            )
        except InvalidConfigError as exc:
            raise ConfigError(f"[sweep]: {exc}") from None


def _parse(section, key, raw):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    conv = SCHEMA[section].get(key)
    if conv is None:
        raise ConfigError(f"unknown key '{key}' in section [{section}]")
    try:
        return conv(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad value for '{section}.{key}': {exc}") from None


def load_config(path) -> Settings:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (M vs m)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    settings = Settings()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            settings.set(section, key, raw)
    return settings


def apply_overrides(settings: Settings, overrides: Mapping[str, str]) -> Settings:
    """Apply ``section.key=value`` overrides on top of a loaded file."""
    for dotted, raw in overrides.items():
        if "." not in dotted:
            raise ConfigError(f"override '{dotted}' must look like section.key=value")
        section, key = dotted.split(".", 1)
        settings.set(section, key, raw)
    return settings
