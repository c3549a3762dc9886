"""
Experiment configuration files.

Configs are YAML trees of plain numbers. Keys carry their unit in the
suffix (``_ns``, ``_us``, ``_m``, ``_deg``); angles are in degrees and
converted to radians only when the simulation objects are built. A loaded
config is normalised against :data:`DEFAULTS`, so ``load(dump(c)) == c``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from relqkd.core_math import SignalAlphabet
from relqkd.errors import ConfigError, DomainError
from relqkd.photonics import DetectorModel, InterferometerModel, db_to_transmittance
from relqkd.protocol import SeriesConfig, SeriesSeeds
from relqkd.spacetime import ChannelGeometry

__all__ = ["DEFAULTS", "ExperimentConfig", "load_config", "numeric_keys", "DEFAULT_CONFIG_PATH"]

DEFAULT_CONFIG_PATH = Path(__file__).with_name("data") / "demo_defaults.yaml"

DEFAULTS: dict[str, Any] = {
    "series": {
        "n_pulses": 32768,
        "count": 100,
        "seed": 2014,
        "randomness": "lfsr",
        "sifting": "prng",
        "qber_sample_fraction": None,
        "timing_jitter_ns": 0.0,
    },
    "alphabet": {"mu": 0.1, "phi_deg": 130.0, "phase0_deg": 0.0},
    "geometry": {
        "distance_m": 55.0,
        "group_index": 1.0003,
        "pulse_separation_ns": 22.0,
        "detection_window_ns": 4.0,
        "clock_period_us": 4.0,
        "late_offset_us": 2.0,
        "processing_delay_ns": 0.0,
    },
    "interferometer": {"visibility": 0.99, "static_phase_deg": 0.0, "insertion_transmittance": 1.0},
    "detector": {"efficiency": 0.3, "dark_prob": 1e-5},
    "channel": {"transmittance": db_to_transmittance(3.0), "extra_system_transmittance": 1.0},
    "attack": {"name": "none", "params": {}},
    "output": {"dir": None, "formats": ["json", "csv"], "workers": 1},
}

_INT_KEYS = {("series", "n_pulses"), ("series", "count"), ("series", "seed"), ("output", "workers")}
_NULLABLE = {("series", "qber_sample_fraction"), ("output", "dir")}
_STRING_KEYS = {("series", "randomness"), ("series", "sifting"), ("attack", "name")}


def _coerce(path: tuple[str, str], value: Any) -> Any:
    key = ".".join(path)
    if value is None:
        if path in _NULLABLE:
            return None
        raise ConfigError(f"{key} may not be null")
    if path in _STRING_KEYS or path == ("output", "dir"):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    if path == ("output", "formats"):
        if isinstance(value, str):
            value = [value]
        bad = [f for f in value if f not in ("json", "csv")]
        if bad:
            raise ConfigError(f"output.formats: unknown format(s) {bad}")
        return list(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        # YAML 1.1 reads "1e-5" as a string
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number, got {value!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key} must be finite")
    if path in _INT_KEYS:
        if float(value) != int(value):
            raise ConfigError(f"{key} must be an integer")
        return int(value)
    return float(value)


def _normalise(raw: dict[str, Any]) -> dict[str, Any]:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    data = copy.deepcopy(DEFAULTS)
    for section, body in raw.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key, value in body.items():
            if section == "attack" and key == "params":
                if not isinstance(value, dict):
                    raise ConfigError("attack.params must be a mapping")
                data["attack"]["params"] = dict(value)
                continue
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            data[section][key] = _coerce((section, key), value)
    return data


def numeric_keys(data: dict[str, Any] | None = None) -> list[str]:
    """Dotted keys that accept a number (the sweepable parameters)."""
    data = data if data is not None else DEFAULTS
    out = []
    for section, body in data.items():
        if section == "output":
            continue
        for key, value in body.items():
            if section == "attack" and key == "params":
                out += [f"attack.params.{k}" for k, v in value.items() if isinstance(v, (int, float)) and not isinstance(v, bool)]
            elif (section, key) in _NULLABLE or (isinstance(value, (int, float)) and not isinstance(value, bool)):
                out.append(f"{section}.{key}")
    return out


@dataclass
class ExperimentConfig:
    """Normalised experiment description (see :data:`DEFAULTS` for keys)."""

    data: dict[str, Any]

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "ExperimentConfig":
        cfg = cls(_normalise(raw))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict[str, Any]:
        return copy.deepcopy(self.data)

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False, default_flow_style=False)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dump())

    def with_value(self, dotted: str, value: Any) -> "ExperimentConfig":
        """Copy with one dotted key replaced (YAML-parsed if given as text)."""
        parts = dotted.split(".")
        raw = self.to_dict()
        if isinstance(value, str):
            value = yaml.safe_load(value)
        if parts[:2] == ["attack", "params"] and len(parts) == 3:
            raw["attack"]["params"][parts[2]] = value
        elif len(parts) == 2 and parts[0] in DEFAULTS and parts[1] in DEFAULTS[parts[0]]:
            raw[parts[0]][parts[1]] = value
        else:
            raise ConfigError(f"unknown key {dotted!r}; valid keys: {', '.join(numeric_keys(self.data))}")
        return ExperimentConfig.from_dict(raw)

    @property
    def n_series(self) -> int:
        return self.data["series"]["count"]

    @property
    def seed(self) -> int:
        return self.data["series"]["seed"]

    @property
    def attack_name(self) -> str:
        return self.data["attack"]["name"]

    @property
    def attack_params(self) -> dict[str, Any]:
        return dict(self.data["attack"]["params"])

    def series_config(self, index: int = 0) -> SeriesConfig:
        d = self.data
        s, a, g, i, det, ch = (d[k] for k in ("series", "alphabet", "geometry", "interferometer", "detector", "channel"))
        try:
            return SeriesConfig(
                n_pulses=s["n_pulses"],
                alphabet=SignalAlphabet.from_degrees(a["mu"], a["phi_deg"], a["phase0_deg"]),
                geometry=ChannelGeometry(
                    distance=g["distance_m"],
                    group_index=g["group_index"],
                    pulse_separation=g["pulse_separation_ns"] * 1e-9,
                    detection_window=g["detection_window_ns"] * 1e-9,
                    clock_period=g["clock_period_us"] * 1e-6,
                    late_offset=g["late_offset_us"] * 1e-6,
                    processing_delay=g["processing_delay_ns"] * 1e-9,
                ),
                interferometer=InterferometerModel(
                    visibility=i["visibility"],
                    static_phase=math.radians(i["static_phase_deg"]),
                    insertion_transmittance=i["insertion_transmittance"],
                ),
                detector=DetectorModel(efficiency=det["efficiency"], dark_prob=det["dark_prob"]),
                channel_transmittance_one_way=ch["transmittance"],
                extra_system_transmittance=ch["extra_system_transmittance"],
                seeds=SeriesSeeds.derive(s["seed"], index),
                randomness=s["randomness"],
                sifting=s["sifting"],
                qber_sample_fraction=s["qber_sample_fraction"],
                timing_jitter=s["timing_jitter_ns"] * 1e-9,
            )
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self) -> None:
        from relqkd.adversary import make_strategy

        if self.data["series"]["count"] < 1:
            raise ConfigError("series.count must be >= 1")
        if self.data["output"]["workers"] < 1:
            raise ConfigError("output.workers must be >= 1")
        self.series_config(0).validate()
        try:
            make_strategy(self.attack_name, self.attack_params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"attack: {exc}") from exc

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ExperimentConfig) and self.data == other.data


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Read a YAML config; ``None`` loads the shipped demo-default config."""
    p = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    try:
        raw = yaml.safe_load(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {p}: {exc}") from exc
    return ExperimentConfig.from_dict(raw or {})
