"""Noise-normalized V2V link gains: WINNER+ B1 LOS pathloss, log-normal
shadowing and Rayleigh fast fading.

Random draws come from counter-keyed streams, so every value is a pure
function of (seed, episode, slot, link) and links can be evaluated in any
order.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .mobility import RECEIVER, TRANSMITTER, Topology, pairwise_distances

SPEED_OF_LIGHT = 3.0e8
MIN_DISTANCE_M = 3.0
FIRST_SEGMENT_MAX_M = 10.0

_SHADOW_TAG = 0x5AD0
_FADING_TAG = 0xFAD1


@dataclass(frozen=True)
class ChannelConfig:
    carrier_ghz: float = 2.0
    rb_bandwidth_hz: float = 1e6
    antenna_gain_dbi: float = 3.0
    noise_figure_db: float = 9.0
    antenna_height_m: float = 1.5
    shadow_std_db: float = 3.0
    noise_power_dbm: float = -114.0
    seed: int = 0

    def __post_init__(self):
        for name in ("carrier_ghz", "antenna_gain_dbi", "noise_figure_db", "antenna_height_m",
                     "shadow_std_db", "noise_power_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.rb_bandwidth_hz > 0:
            raise ValueError("rb_bandwidth_hz must be positive")
        if self.antenna_height_m <= 1.0:
            raise ValueError("antenna_height_m must exceed 1 m (effective height h - 1)")

    @property
    def effective_height_m(self) -> float:
        return self.antenna_height_m - 1.0

    @property
    def breakpoint_m(self) -> float:
        h = self.effective_height_m
        return 4.0 * h * h * self.carrier_ghz * 1e9 / SPEED_OF_LIGHT

    @property
    def noise_w(self) -> float:
        # receiver noise figure is added on top of the thermal floor, once
        return 10.0 ** ((self.noise_power_dbm + self.noise_figure_db - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelTensor:
    gains: np.ndarray  # (m, n, F) linear, noise-normalized
    slot_index: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("v,w,f,gain_db\n")
        m, n, F = self.gains.shape
        with np.errstate(divide="ignore"):
            db = 10.0 * np.log10(self.gains)
        for v in range(m):
            for w in range(n):
                for f in range(F):
                    buf.write(f"{v},{w},{f},{db[v, w, f]:.6f}\n")
        return buf.getvalue()


def _first_segment(d, fc_ghz):
    return 22.7 * np.log10(d) + 41.0 + 20.0 * np.log10(fc_ghz / 5.0)


def _second_segment(d, fc_ghz, h_eff):
    return (40.0 * np.log10(d) + 9.45 - 2 * 17.3 * np.log10(h_eff)
            + 2.7 * np.log10(fc_ghz / 5.0))


def pathloss_db(d_m, cfg: ChannelConfig):
    """WINNER+ B1 LOS pathloss in dB; accepts a scalar or an array of meters.

    Distances up to 10 m (and below the breakpoint) use the first segment,
    clamped at 3 m; beyond that the post-breakpoint segment applies.
    """
    d = np.asarray(d_m, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("distance must be positive")
    fc = cfg.carrier_ghz
    near = (d <= FIRST_SEGMENT_MAX_M) | (d < cfg.breakpoint_m)
    pl = np.where(
        near,
        _first_segment(np.maximum(d, MIN_DISTANCE_M), fc),
        _second_segment(np.maximum(d, MIN_DISTANCE_M), fc, cfg.effective_height_m),
    )
    return float(pl) if pl.ndim == 0 else pl


def _stream(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in key]))


def draw_shadowing(v: int, w: int, seed: int, episode: int = 0, std_db: float = 3.0) -> float:
    """Zero-mean Gaussian shadowing in dB for one (transmitter, receiver) pair.

    Constant for the whole episode.
    """
    return float(_stream(seed, episode, _SHADOW_TAG, v, w).normal(0.0, std_db))


def shadowing_matrix(m: int, n: int, seed: int, episode: int = 0, std_db: float = 3.0) -> np.ndarray:
    return np.array([[draw_shadowing(v, w, seed, episode, std_db) for w in range(n)] for v in range(m)])


def fast_fading(seed: int, episode: int, t: int, shape: tuple) -> np.ndarray:
    """Rayleigh fading power |h|^2 ~ Exp(1), i.i.d. per (v, w, f) at slot t."""
    return _stream(seed, episode, _FADING_TAG, t, *shape).exponential(1.0, size=shape)


def gain_from_components(pl_db, shadow_db, fading_power, cfg: ChannelConfig):
    """g = 10^((-PL + 2*G_ant + shadow)/10) * |h|^2 / N0."""
    rx_db = -np.asarray(pl_db) + 2.0 * cfg.antenna_gain_dbi + np.asarray(shadow_db)
    return 10.0 ** (rx_db / 10.0) * np.asarray(fading_power) / cfg.noise_w


def reference_gain(cfg: ChannelConfig, d_m: float = 10.0) -> float:
    """Deterministic gain at distance d with 0 dB shadowing and unit fading."""
    return float(gain_from_components(pathloss_db(d_m, cfg), 0.0, 1.0, cfg))


def gain_tensor(dist: np.ndarray, shadow_db: np.ndarray, fading: np.ndarray, cfg: ChannelConfig) -> np.ndarray:
    """Gains (m, n, F) from distances (m, n), shadowing (m, n), fading (m, n, F)."""
    pl = pathloss_db(dist, cfg)
    base = gain_from_components(pl, shadow_db, 1.0, cfg)
    return base[:, :, None] * fading


def channel_tensor(topo: Topology, cfg: ChannelConfig, n_freq: int, t: int = 0, episode: int = 0) -> ChannelTensor:
    tx = topo.xy(TRANSMITTER)
    rx = topo.xy(RECEIVER)
    m, n = len(tx), len(rx)
    dist = pairwise_distances(tx, rx)
    shadow = shadowing_matrix(m, n, cfg.seed, episode, cfg.shadow_std_db)
    fading = fast_fading(cfg.seed, episode, t, (m, n, n_freq))
    return ChannelTensor(gain_tensor(dist, shadow, fading, cfg), t)


def link_gain(v: int, w: int, f: int, t: int, topo: Topology, cfg: ChannelConfig,
              n_freq: int = 1, episode: int = 0) -> float:
    """Gain of a single link; v indexes transmitters, w indexes receivers (0-based)."""
    m = len(topo.transmitters)
    n = len(topo.receivers)
    if not (0 <= v < m and 0 <= w < n):
        raise IndexError("link index out of range")
    return float(channel_tensor(topo, cfg, n_freq, t, episode).gains[v, w, f])
