"""Run configuration: a flat ``key = value`` file plus command-line overrides.

Blank lines and lines starting with ``#`` are ignored.  Relative paths are
resolved against the directory of the config file.  ``to_text`` emits every
key in a fixed order; its SHA-256 is the config digest recorded with outputs.
"""

from __future__ import annotations

import hashlib
import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path

PATH_KEYS = ("dumps", "lexicon_pos", "lexicon_neg", "market", "factors", "financials", "ccis", "sectors", "out_dir")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # inputs and outputs; ``dumps`` is a comma-separated list
    dumps: str = ""
    dump_format: str = "csv"
    lexicon_pos: str = ""
    lexicon_neg: str = ""
    market: str = ""
    factors: str = ""
    financials: str = ""
    ccis: str = ""
    sectors: str = ""
    out_dir: str = "out"
    # ingest and eligibility
    window_start: str = "2008-11-01"
    window_end: str = "2017-12-31"
    min_reviews: int = 1000
    min_span_days: int = 365
    # features
    week_convention: str = "iso"
    accumulation_weeks: int = 1
    # characteristics
    beta_window: int = 50
    beta_min_obs: int = 30
    illiq_scale: float = 1e6
    sigma_window: int = 8
    sigma_min_obs: int = 4
    vol_window: int = 8
    vol_min_obs: int = 6
    surprise_clamp: float | None = None
    publication_lag_weeks: int = 0
    # estimation
    se: str = "clustered"
    time_fe: str = "year"
    gmm_lag_min: int = 2
    gmm_lag_max: int = 4
    collapse: bool = False
    time_dummies: bool = False
    outcome: str = "ret_lead"
    regressor: str = "diff_neg"
    model: str = "static"
    lag_controls: bool = False
    tables: str = "all"
    # synthetic data and Monte Carlo
    synth_firms: int = 3
    synth_weeks: int = 60
    synth_rate: float = 11.0
    synth_duplicates: int = 20
    synth_invalid: int = 10
    cnst_effect: float = 0.0
    mc_estimator: str = "gmm"
    mc_reps: int = 200
    mc_firms: int = 200
    mc_weeks: int = 10
    mc_rho: float = 0.5
    mc_beta: float = 1.0
    mc_noise_ar2: float = 0.0
    mc_collapse: bool = False
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.dump_format not in ("csv", "jsonl"):
            raise ConfigError(f"dump_format must be csv or jsonl, got {self.dump_format!r}")
        if self.week_convention not in ("iso", "friday"):
            raise ConfigError(f"week_convention must be iso or friday, got {self.week_convention!r}")
        if self.se not in ("classical", "clustered", "robust"):
            raise ConfigError(f"se must be classical, clustered or robust, got {self.se!r}")
        if self.time_fe not in ("year", "week", "none"):
            raise ConfigError(f"time_fe must be year, week or none, got {self.time_fe!r}")
        if self.model not in ("static", "dynamic"):
            raise ConfigError(f"model must be static or dynamic, got {self.model!r}")
        if self.accumulation_weeks < 1 or self.min_reviews < 0 or self.min_span_days < 0:
            raise ConfigError("accumulation_weeks must be >= 1 and thresholds non-negative")

    @property
    def dump_paths(self) -> list[Path]:
        return [Path(p.strip()) for p in self.dumps.split(",") if p.strip()]

    @property
    def time_fe_value(self) -> str | None:
        return None if self.time_fe == "none" else self.time_fe

    def with_overrides(self, pairs: dict[str, str]) -> "RunConfig":
        return replace(self, **{k: _coerce(k, v) for k, v in pairs.items()})

    def resolve_paths(self, base: Path) -> "RunConfig":
        changes = {}
        for key in PATH_KEYS:
            value = getattr(self, key)
            if not value:
                continue
            parts = [p.strip() for p in value.split(",") if p.strip()]
            changes[key] = ",".join(str((base / p).resolve()) if not Path(p).is_absolute() else p for p in parts)
        return replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_render(v)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_TYPES = typing.get_type_hints(RunConfig)


def _render(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(key: str, raw: str):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    tp = _TYPES[key]
    text = raw.strip()
    optional = type(None) in typing.get_args(tp)
    if optional:
        if text.lower() in ("", "none"):
            return None
        tp = next(a for a in typing.get_args(tp) if a is not type(None))
    try:
        if tp is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return text


def parse_pairs(lines) -> dict[str, str]:
    pairs = {}
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the file (if any), then overrides; paths resolved last."""
    cfg = RunConfig()
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cfg = cfg.with_overrides(parse_pairs(path.read_text(encoding="utf-8").splitlines()))
        base = path.parent
    file_paths = cfg.resolve_paths(base)
    if overrides:
        # override paths are relative to the working directory
        over = RunConfig().with_overrides(overrides).resolve_paths(Path.cwd())
        resolved = {k: getattr(over, k) if k in PATH_KEYS else overrides[k] for k in overrides}
        cfg = replace(file_paths, **{k: (v if k in PATH_KEYS else _coerce(k, v)) for k, v in resolved.items()})
    else:
        cfg = file_paths
    return cfg
