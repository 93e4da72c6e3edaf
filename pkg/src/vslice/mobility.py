"""Highway vehicle drop and kinematics.

Six-lane highway: lanes 0-2 carry forward traffic (right to left, negative
speed), lanes 3-5 carry backward traffic (left to right). Lanes are indexed
top to bottom.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

TRANSMITTER = "transmitter"
RECEIVER = "receiver"


def kmh_to_mps(v: float) -> float:
    return v / 3.6


def _default_forward() -> tuple:
    return tuple(60.0 + 2 * (i - 1) * 10.0 for i in (1, 2, 3))


def _default_backward() -> tuple:
    return tuple(100.0 - 2 * (i - 1) * 10.0 for i in (1, 2, 3))


@dataclass(frozen=True)
class HighwayConfig:
    road_length_m: float = 2000.0
    lane_width_m: float = 4.0
    lanes_per_direction: int = 3
    forward_lane_speeds_kmh: tuple = field(default_factory=_default_forward)
    backward_lane_speeds_kmh: tuple = field(default_factory=_default_backward)
    headway_s: float = 2.5
    seed: int = 0

    def __post_init__(self):
        if not self.road_length_m > 0 or not self.lane_width_m > 0:
            raise ValueError("road_length_m and lane_width_m must be positive")
        if self.headway_s <= 0:
            raise ValueError("headway_s must be positive")
        for speeds in (self.forward_lane_speeds_kmh, self.backward_lane_speeds_kmh):
            if len(speeds) != self.lanes_per_direction:
                raise ValueError("one speed per lane is required")
            if any(s <= 0 for s in speeds):
                raise ValueError("lane speeds must be positive")

    @property
    def n_lanes(self) -> int:
        return 2 * self.lanes_per_direction

    def lane_velocity_mps(self, lane: int) -> float:
        """Signed speed of a lane; forward lanes move toward decreasing x."""
        k = self.lanes_per_direction
        if lane < k:
            return -kmh_to_mps(self.forward_lane_speeds_kmh[lane])
        return kmh_to_mps(self.backward_lane_speeds_kmh[lane - k])

    def lane_center_m(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width_m

    def mean_gap_m(self, lane: int) -> float:
        return self.headway_s * abs(self.lane_velocity_mps(lane))


@dataclass(frozen=True)
class VehicleState:
    id: int
    kind: str
    lane: int
    position_m: float
    speed_mps: float
    y_m: float


@dataclass(frozen=True)
class Topology:
    vehicles: tuple
    time_s: float = 0.0
    road_length_m: float = 2000.0

    def __post_init__(self):
        object.__setattr__(self, "_index", {veh.id: veh for veh in self.vehicles})

    def get(self, vid: int) -> VehicleState:
        try:
            return self._index[vid]
        except KeyError:
            raise KeyError(f"unknown vehicle id {vid}") from None

    def of_kind(self, kind: str) -> list:
        return [veh for veh in self.vehicles if veh.kind == kind]

    @property
    def transmitters(self) -> list:
        return self.of_kind(TRANSMITTER)

    @property
    def receivers(self) -> list:
        return self.of_kind(RECEIVER)

    def xy(self, kind: str) -> np.ndarray:
        """(k, 2) array of (along-road, lateral) coordinates, ordered by id."""
        vs = sorted(self.of_kind(kind), key=lambda veh: veh.id)
        return np.array([[veh.position_m, veh.y_m] for veh in vs], dtype=float).reshape(-1, 2)

    def to_text(self) -> str:
        lines = [f"# t={self.time_s:.6f}", "id kind lane x y speed"]
        for veh in sorted(self.vehicles, key=lambda veh: veh.id):
            lines.append(
                f"{veh.id} {veh.kind} {veh.lane} {veh.position_m:.6f} {veh.y_m:.3f} {veh.speed_mps:.6f}"
            )
        return "\n".join(lines) + "\n"


def sample_lane_positions(cfg: HighwayConfig, lane: int, rng: np.random.Generator) -> np.ndarray:
    """Poisson drop along one lane: exponential gaps with mean headway * |v|."""
    mean_gap = cfg.mean_gap_m(lane)
    positions = []
    x = rng.exponential(mean_gap)
    while x < cfg.road_length_m:
        positions.append(x)
        x += rng.exponential(mean_gap)
    return np.asarray(positions, dtype=float)


def drop_vehicles(cfg: HighwayConfig, m: int, n: int) -> Topology:
    """Drop vehicles on every lane and label m transmitters and n receivers.

    Transmitters get ids 0..m-1, receivers m..m+n-1.
    """
    if m < 1 or n < 1:
        raise ValueError("need at least one transmitter and one receiver")
    rng = np.random.default_rng(cfg.seed)
    pool = []
    for lane in range(cfg.n_lanes):
        for x in sample_lane_positions(cfg, lane, rng):
            pool.append((lane, float(x)))
    if len(pool) < m + n:
        density = (m + n) / (cfg.road_length_m * cfg.n_lanes)
        raise ValueError(
            f"only {len(pool)} vehicles generated but m+n={m + n} required; "
            f"need at least {density:.4g} vehicles per lane-meter (shorten headway or lengthen road)"
        )
    chosen = rng.choice(len(pool), size=m + n, replace=False)
    vehicles = []
    for vid, k in enumerate(chosen):
        lane, x = pool[k]
        vehicles.append(
            VehicleState(
                id=vid,
                kind=TRANSMITTER if vid < m else RECEIVER,
                lane=lane,
                position_m=x,
                speed_mps=cfg.lane_velocity_mps(lane),
                y_m=cfg.lane_center_m(lane),
            )
        )
    return Topology(tuple(vehicles), 0.0, cfg.road_length_m)


def advance(topo: Topology, dt_s: float) -> Topology:
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    L = topo.road_length_m
    moved = tuple(
        replace(veh, position_m=(veh.position_m + veh.speed_mps * dt_s) % L) for veh in topo.vehicles
    )
    return Topology(moved, topo.time_s + dt_s, L)


def distance(topo: Topology, a: int, b: int) -> float:
    if a == b:
        raise ValueError("distance needs two distinct vehicles")
    va, vb = topo.get(a), topo.get(b)
    return float(np.hypot(va.position_m - vb.position_m, va.y_m - vb.y_m))


def pairwise_distances(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of two (k, 2) coordinate arrays."""
    diff = src[:, None, :] - dst[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def trajectory(topo: Topology, dt_s: float, steps: int) -> Sequence:
    """Snapshots at 0, dt, ..., (steps-1)*dt."""
    out = [topo]
    for _ in range(steps - 1):
        out.append(advance(out[-1], dt_s))
    return out
