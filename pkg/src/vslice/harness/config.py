"""INI-style experiment configuration.

Sections map onto the config dataclasses: [experiment], [highway],
[channel], [scenario], [train]. Any key left out keeps its default.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from ..channel import ChannelConfig
from ..mobility import HighwayConfig
from ..scenario import ScenarioConfig, network
from ..trainer import TrainConfig

ALGORITHMS = ("dql", "oma-mp", "noma-mp", "noma-rp", "oracle")
SWEEPS = ("safety-size", "deadline", "nonsafety-max")
# default axes and units of each sweep variable
SWEEP_DEFAULTS = {
    "safety-size": ((2, 4, 6, 8, 10), "300B"),
    "deadline": ((1, 2, 3, 4, 5), "slot"),
    "nonsafety-max": ((1, 2, 3, 4), "1Mbit"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    network: str = "2,2,1,5"
    algorithms: tuple = ("dql", "oma-mp", "noma-mp", "noma-rp")
    episodes: int = 100
    seeds: tuple = (0,)
    out: str = "runs/default"
    sweep: str | None = None
    sweep_values: tuple = ()
    sweep_unit: str | None = None
    greedy: bool = False
    oracle_cap: int = 10 ** 7
    svg: bool = False
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


def _parse_value(text: str, like):
    text = text.strip()
    if isinstance(like, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(float(text)) if "e" in text.lower() else int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, tuple):
        items = [s for s in text.replace(";", ",").split(",") if s.strip()]
        if like and isinstance(like[0], str):
            return tuple(s.strip() for s in items)
        if like and isinstance(like[0], int):
            return tuple(int(s) for s in items)
        return tuple(float(s) for s in items)
    if like is None:
        if text.lower() in ("", "none"):
            return None
        if "," in text:
            return tuple(int(s) for s in text.split(",") if s.strip())
        return text
    return text


def _apply(obj, section: str, items: dict, skip=()):
    known = {f.name: f for f in fields(obj)}
    changes = {}
    for key, raw in items.items():
        name = key.replace("-", "_")
        if name not in known or name in skip:
            raise ConfigError(f"[{section}] {key}: unknown key")
        try:
            changes[name] = _parse_value(raw, getattr(obj, name))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    try:
        return replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    for a in cfg.algorithms:
        if a not in ALGORITHMS:
            raise ConfigError(f"[experiment] algorithms: unknown algorithm {a!r}; choose from {ALGORITHMS}")
    if cfg.episodes < 1:
        raise ConfigError("[experiment] episodes: must be >= 1")
    if not cfg.seeds:
        raise ConfigError("[experiment] seeds: at least one seed is required")
    if cfg.sweep is not None and cfg.sweep not in SWEEPS:
        raise ConfigError(f"[experiment] sweep: unknown sweep {cfg.sweep!r}; choose from {SWEEPS}")
    if cfg.oracle_cap < 1:
        raise ConfigError("[experiment] oracle_cap: must be >= 1")
    try:
        network(cfg.network)
    except ValueError as exc:
        raise ConfigError(f"[experiment] network: {exc}") from None
    sc = cfg.scenario
    if not all(c >= 0 for c in sc.coverage_levels_m):
        raise ConfigError("[scenario] coverage_levels_m: coverages must be >= 0")
    if len(sc.power_levels_dbm) < 2:
        raise ConfigError("[scenario] power_levels_dbm: need silence plus at least one level")
    lo, hi = sc.nonsafety_bits_range
    if not 0 < lo <= hi:
        raise ConfigError("[scenario] nonsafety_bits_range: need 0 < low <= high")
    if sc.safety_bits <= 0:
        raise ConfigError("[scenario] safety_bits: must be positive")
    return cfg


def load_config(path=None, text: str | None = None) -> ExperimentConfig:
    """Parse an INI file (or text); an empty file yields every default."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path) as fh:
                parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    known = {"experiment", "highway", "channel", "scenario", "train"}
    for s in parser.sections():
        if s not in known:
            raise ConfigError(f"[{s}]: unknown section")
    sect = {s: dict(parser[s]) for s in parser.sections()}

    exp = _apply(ExperimentConfig(), "experiment", sect.get("experiment", {}), skip=("scenario", "train"))
    hw = _apply(HighwayConfig(), "highway", sect.get("highway", {}), skip=("seed",))
    ch = _apply(ChannelConfig(), "channel", sect.get("channel", {}))
    try:
        net = network(exp.network)
    except ValueError as exc:
        raise ConfigError(f"[experiment] network: {exc}") from None
    sc = _apply(replace(ScenarioConfig(), network=net, highway=hw, channel=ch), "scenario",
                sect.get("scenario", {}), skip=("network", "highway", "channel", "seed"))
    tr = _apply(replace(TrainConfig(), network=exp.network), "train",
                sect.get("train", {}), skip=("network",))
    return validate(replace(exp, scenario=sc, train=tr))
