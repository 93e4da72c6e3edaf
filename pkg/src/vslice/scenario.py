"""Network presets and per-episode scenario generation.

An Episode freezes everything random about one horizon: vehicle drop,
trajectories, shadowing, fast fading for every slot, and packet
requirements. The learner, the baselines and the oracle can all be run
on the same Episode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelConfig, fast_fading, gain_tensor, shadowing_matrix
from .mobility import RECEIVER, TRANSMITTER, HighwayConfig, drop_vehicles, pairwise_distances, trajectory
from .noma import NON_SAFETY, SAFETY
from .vra import PacketSpec, VraInstance

SILENT_DBM = -100.0
DEFAULT_COVERAGES_M = (0.0, 100.0, 200.0, 400.0, 800.0, 1000.0, 1200.0, 1400.0)
DEFAULT_POWERS_DBM = (SILENT_DBM, 5.0, 10.0, 15.0, 20.0, 23.0, 27.0, 30.0)
SAFETY_BITS = 1200 * 8

_DROP_TAG = 0xD50
_PACKET_TAG = 0xBAC


def dbm_to_w(dbm: float) -> float:
    if dbm <= SILENT_DBM:
        return 0.0
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class NetworkConfig:
    m: int
    n: int
    F: int
    T: int
    slot_s: float

    @property
    def name(self) -> str:
        return f"{self.m},{self.n},{self.F},{self.T}"


NETWORKS = {
    "2,2,1,5": NetworkConfig(2, 2, 1, 5, 0.020),
    "5,4,2,10": NetworkConfig(5, 4, 2, 10, 0.010),
    "6,4,4,20": NetworkConfig(6, 4, 4, 20, 0.005),
}


def network(name: str) -> NetworkConfig:
    key = name.strip().strip("()").replace(" ", "")
    if key in NETWORKS:
        return NETWORKS[key]
    parts = key.split(",")
    if len(parts) == 5:
        m, n, F, T = (int(x) for x in parts[:4])
        return NetworkConfig(m, n, F, T, float(parts[4]))
    if len(parts) == 4:
        m, n, F, T = (int(x) for x in parts)
        return NetworkConfig(m, n, F, T, 0.1 / T)  # 100 ms horizon
    raise ValueError(f"unknown network {name!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    network: NetworkConfig = NETWORKS["2,2,1,5"]
    highway: HighwayConfig = field(default_factory=HighwayConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    coverage_levels_m: tuple = DEFAULT_COVERAGES_M
    power_levels_dbm: tuple = DEFAULT_POWERS_DBM
    safety_bits: float = SAFETY_BITS
    nonsafety_bits_range: tuple = (0.1e6, 1.0e6)
    safety_arrival_slot: int = 1
    # inclusive range for the safety deadline e_v; None -> (ceil(T/2), T)
    deadline_range: tuple | None = None
    seed: int = 0

    @property
    def p_max_w(self) -> float:
        return dbm_to_w(max(self.power_levels_dbm))

    def deadline_bounds(self) -> tuple:
        T = self.network.T
        lo, hi = self.deadline_range if self.deadline_range else (math.ceil(T / 2), T)
        lo = max(lo, self.safety_arrival_slot)
        hi = min(hi, T)
        if lo > hi:
            raise ValueError("empty safety deadline range")
        return lo, hi


@dataclass(frozen=True)
class Packets:
    sigma: np.ndarray  # (m, 2) bits, [non-safety, safety]
    arrival: np.ndarray  # (m,) 1-based
    deadline: np.ndarray  # (m,) 1-based

    def specs(self, T: int) -> tuple:
        out = []
        for v in range(len(self.sigma)):
            out.append(PacketSpec(v, "n", float(self.sigma[v, NON_SAFETY]), 1, T))
            out.append(PacketSpec(v, "s", float(self.sigma[v, SAFETY]), int(self.arrival[v]), int(self.deadline[v])))
        return tuple(out)


@dataclass(frozen=True, eq=False)
class Episode:
    k: int
    gains: np.ndarray  # (T, m, n, F)
    rx_dist: np.ndarray  # (T, m, n)
    tx_dist: np.ndarray  # (T, m, m)
    packets: Packets
    topologies: tuple

    def instance(self, cfg: ScenarioConfig, oma: bool = False) -> VraInstance:
        net = cfg.network
        levels = tuple(sorted(dbm_to_w(p) for p in cfg.power_levels_dbm if p > SILENT_DBM))
        return VraInstance(
            m=net.m, n=net.n, F=net.F, T=net.T, tau_s=net.slot_s, beta_hz=cfg.channel.rb_bandwidth_hz,
            p_max_w=np.full(net.m, cfg.p_max_w), power_levels_w=levels,
            coverage_levels_m=tuple(c for c in cfg.coverage_levels_m if c > 0),
            packets=self.packets.specs(net.T), gains=self.gains, rx_dist=self.rx_dist, oma=oma,
        )


def _key_rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in key]))


def draw_packets(cfg: ScenarioConfig, seed: int, k: int) -> Packets:
    net = cfg.network
    rng = _key_rng(seed, k, _PACKET_TAG)
    lo, hi = cfg.nonsafety_bits_range
    sigma = np.empty((net.m, 2))
    sigma[:, NON_SAFETY] = rng.uniform(lo, hi, size=net.m)
    sigma[:, SAFETY] = cfg.safety_bits
    d_lo, d_hi = cfg.deadline_bounds()
    deadline = rng.integers(d_lo, d_hi + 1, size=net.m)
    arrival = np.full(net.m, cfg.safety_arrival_slot)
    return Packets(sigma, arrival, deadline)


def make_episode(cfg: ScenarioConfig, k: int, seed: int | None = None, packets: Packets | None = None) -> Episode:
    """Generate episode k; fully determined by (cfg, seed, k)."""
    seed = cfg.seed if seed is None else seed
    net = cfg.network
    drop_seed = int(_key_rng(seed, k, _DROP_TAG).integers(0, 2 ** 63))
    hw = replace(cfg.highway, seed=drop_seed)
    topo0 = drop_vehicles(hw, net.m, net.n)
    topos = trajectory(topo0, net.slot_s, net.T)
    rx_dist = np.empty((net.T, net.m, net.n))
    tx_dist = np.empty((net.T, net.m, net.m))
    for t, topo in enumerate(topos):
        tx, rx = topo.xy(TRANSMITTER), topo.xy(RECEIVER)
        rx_dist[t] = pairwise_distances(tx, rx)
        tx_dist[t] = pairwise_distances(tx, tx)
    ch_seed = (seed * 1_000_003 + cfg.channel.seed) & 0xFFFFFFFF
    shadow = shadowing_matrix(net.m, net.n, ch_seed, k, cfg.channel.shadow_std_db)
    gains = np.empty((net.T, net.m, net.n, net.F))
    for t in range(net.T):
        fading = fast_fading(ch_seed, k, t, (net.m, net.n, net.F))
        gains[t] = gain_tensor(rx_dist[t], shadow, fading, cfg.channel)
    if packets is None:
        packets = draw_packets(cfg, seed, k)
    return Episode(k, gains, rx_dist, tx_dist, packets, tuple(topos))
