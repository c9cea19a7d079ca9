"""Flat key-value training configuration files.

Files contain ``key = value`` lines with ``#`` comments. Every key is also a
CLI flag; flags override the file. Unknown keys are rejected so typos fail
loudly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .validation import DataError


class ConfigError(DataError):
    """Raised for malformed configuration files or values."""


@dataclass
class TrainSettings:
    connectivity: str = "dense"
    boosting: bool = True
    learning_rate: float = 0.3
    max_layers: int = 100
    patience: int = 3
    k_folds: int = 3
    slots_per_kind: int = 4
    search: bool = True
    search_lo: int | None = None
    search_hi: int | None = None
    search_step: int | None = None
    n_estimators: int | None = None
    holdout_fraction: float = 0.2
    score_features: bool = False
    score_mode: str | None = None
    weighted_bootstrap: bool = False
    refit_full: bool = False
    force_layers: int | None = None
    seed: int = 0
    threads: int | None = None

    def as_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name: f for f in fields(TrainSettings)}

_BOOL_WORDS = {"true": True, "1": True, "yes": True, "on": True,
               "false": False, "0": False, "no": False, "off": False}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if raw.lower() in ("none", "null", ""):
        return None
    default = _FIELDS[key].default
    ftype = _FIELDS[key].type
    if isinstance(default, bool) or ftype == "bool":
        if raw.lower() not in _BOOL_WORDS:
            raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[raw.lower()]
    if "float" in str(ftype):
        return float(raw)
    if "int" in str(ftype):
        return int(raw)
    return raw


def read_config_file(path) -> TrainSettings:
    settings = TrainSettings()
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
            key, raw = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if key not in _FIELDS:
                raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
            try:
                setattr(settings, key, _coerce(key, raw))
            except ValueError:
                raise ConfigError(f"{path}: line {lineno}: bad value {raw.strip()!r} "
                                  f"for key {key!r}") from None
    return settings


def apply_overrides(settings: TrainSettings, overrides: dict) -> TrainSettings:
    """Apply non-None override values (CLI flags win over the file)."""
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown setting {key!r}")
        setattr(settings, key, value)
    return settings
