"""The vehicle resource allocation (VRA) problem: instances, candidate
assignments, the constraint checker and the delivered-pairs objective.

Index conventions (all 0-based): transmitters v < m, receivers w < n,
frequency-slots f < F, time-slots t < T, packet i in {0: non-safety,
1: safety}. Packet arrival/deadline slots are stored 1-based, as in the
problem statement, and converted where used.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .noma import NON_SAFETY, SAFETY, sinr_tensor

CONSTRAINT_TAGS = ("4b", "4c", "4d", "4e", "4f", "4g", "4h", "4i", "4j", "oma")
RATE_RTOL = 1e-9


@dataclass(frozen=True)
class PacketSpec:
    owner: int
    slice: str  # "n" or "s"
    size_bits: float
    arrival_slot: int = 1
    deadline_slot: int = 1

    def __post_init__(self):
        if self.slice not in ("n", "s"):
            raise ValueError(f"unknown slice {self.slice!r}")
        if not self.size_bits > 0:
            raise ValueError("packet size must be positive")
        if not 1 <= self.arrival_slot <= self.deadline_slot:
            raise ValueError("need 1 <= arrival <= deadline")


@dataclass(frozen=True)
class Violation:
    constraint_tag: str
    indices: tuple
    detail: str

    def __post_init__(self):
        if self.constraint_tag not in CONSTRAINT_TAGS:
            raise ValueError(f"unknown constraint tag {self.constraint_tag}")


@dataclass(frozen=True, eq=False)
class VraInstance:
    m: int
    n: int
    F: int
    T: int
    tau_s: float
    beta_hz: float
    p_max_w: np.ndarray
    power_levels_w: tuple
    coverage_levels_m: tuple
    packets: tuple
    gains: np.ndarray  # (T, m, n, F)
    rx_dist: np.ndarray | None = None  # (T, m, n); None means every receiver is reachable
    oma: bool = False
    slices: tuple = (NON_SAFETY, SAFETY)

    def __post_init__(self):
        object.__setattr__(self, "p_max_w", np.broadcast_to(np.asarray(self.p_max_w, float), (self.m,)).copy())
        object.__setattr__(self, "gains", np.asarray(self.gains, float))
        if len(self.packets) != 2 * self.m:
            raise ValueError("need exactly two packets per transmitter")
        if self.gains.shape != (self.T, self.m, self.n, self.F):
            raise ValueError(f"gains shape {self.gains.shape} != {(self.T, self.m, self.n, self.F)}")
        if self.rx_dist is not None:
            object.__setattr__(self, "rx_dist", np.asarray(self.rx_dist, float))
            if self.rx_dist.shape != (self.T, self.m, self.n):
                raise ValueError("rx_dist shape mismatch")
        sig = np.zeros((self.m, 2))
        arr = np.ones(self.m, dtype=int)
        dead = np.full(self.m, self.T, dtype=int)
        for pk in self.packets:
            i = NON_SAFETY if pk.slice == "n" else SAFETY
            sig[pk.owner, i] = pk.size_bits
            if i == SAFETY:
                if pk.deadline_slot > self.T:
                    raise ValueError("safety deadline beyond horizon")
                arr[pk.owner] = pk.arrival_slot
                dead[pk.owner] = pk.deadline_slot
        object.__setattr__(self, "sigma", sig)
        object.__setattr__(self, "arrival", arr)
        object.__setattr__(self, "deadline", dead)

    @property
    def max_coverage_m(self) -> float:
        return max(self.coverage_levels_m) if self.coverage_levels_m else np.inf

    def reachable(self, t: int) -> np.ndarray:
        """(m, n) mask of receivers inside the largest coverage at slot t."""
        if self.rx_dist is None:
            return np.ones((self.m, self.n), dtype=bool)
        return self.rx_dist[t] <= self.max_coverage_m

    def safety_window(self, v: int) -> range:
        """0-based admissible slots for the safety packet of v."""
        return range(self.arrival[v] - 1, self.deadline[v])

    def slot_allowed(self, v: int, t: int, i: int) -> bool:
        if i not in self.slices:
            return False
        return i == NON_SAFETY or self.arrival[v] - 1 <= t < self.deadline[v]

    def to_dict(self) -> dict:
        # field order is fixed; see README "Instance format"
        return {
            "m": self.m, "n": self.n, "F": self.F, "T": self.T,
            "tau_s": self.tau_s, "beta_hz": self.beta_hz,
            "p_max_w": self.p_max_w.tolist(),
            "power_levels_w": list(self.power_levels_w),
            "coverage_levels_m": list(self.coverage_levels_m),
            "packets": [[p.owner, p.slice, p.size_bits, p.arrival_slot, p.deadline_slot] for p in self.packets],
            "gains": self.gains.tolist(),
            "rx_dist": None if self.rx_dist is None else self.rx_dist.tolist(),
            "oma": self.oma,
            "slices": list(self.slices),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VraInstance":
        return cls(
            m=d["m"], n=d["n"], F=d["F"], T=d["T"], tau_s=d["tau_s"], beta_hz=d["beta_hz"],
            p_max_w=np.array(d["p_max_w"]), power_levels_w=tuple(d["power_levels_w"]),
            coverage_levels_m=tuple(d["coverage_levels_m"]),
            packets=tuple(PacketSpec(*row) for row in d["packets"]),
            gains=np.array(d["gains"]),
            rx_dist=None if d.get("rx_dist") is None else np.array(d["rx_dist"]),
            oma=bool(d.get("oma", False)), slices=tuple(d.get("slices", (0, 1))),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "VraInstance":
        return cls.from_dict(json.loads(text))

    def with_(self, **changes) -> "VraInstance":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return VraInstance(**d)


@dataclass
class Assignment:
    x: np.ndarray  # (m, n, F, T, 2) in {0, 1}
    y: np.ndarray  # (m, n, 2) in {0, 1}
    p: np.ndarray  # (m, F, T, 2) watts

    @classmethod
    def zeros(cls, inst: VraInstance) -> "Assignment":
        m, n, F, T = inst.m, inst.n, inst.F, inst.T
        return cls(
            np.zeros((m, n, F, T, 2), dtype=np.int8),
            np.zeros((m, n, 2), dtype=np.int8),
            np.zeros((m, F, T, 2)),
        )

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "y": self.y.tolist(), "p": self.p.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Assignment":
        return cls(np.array(d["x"], dtype=np.int8), np.array(d["y"], dtype=np.int8), np.array(d["p"], float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Assignment":
        return cls.from_dict(json.loads(text))


def objective(a: Assignment) -> int:
    """Number of delivered (transmitter, receiver, packet) pairs."""
    return int(np.sum(a.y))


def accumulated_bits(inst: VraInstance, a: Assignment) -> np.ndarray:
    """Achievable bits per (v, w, i) summed over every RB, shape (m, n, 2)."""
    bt = inst.beta_hz * inst.tau_s
    total = np.zeros((inst.m, inst.n, 2))
    for t in range(inst.T):
        profile = a.p[:, :, t, :]
        if not profile.any():
            continue
        s = sinr_tensor(profile, inst.gains[t])
        total += bt * np.log2(1.0 + s).sum(axis=2)
    return total


def _check_shapes(inst: VraInstance, a: Assignment):
    m, n, F, T = inst.m, inst.n, inst.F, inst.T
    want = {"x": (m, n, F, T, 2), "y": (m, n, 2), "p": (m, F, T, 2)}
    for name, shape in want.items():
        got = getattr(a, name).shape
        if got != shape:
            raise ValueError(f"assignment.{name} has shape {got}, expected {shape}")


def check_feasible(inst: VraInstance, a: Assignment) -> list:
    """Every violated constraint of the VRA program, one Violation per offending index."""
    _check_shapes(inst, a)
    out = []
    x, y, p = a.x, a.y, a.p

    for name, arr in (("x", x), ("y", y)):
        for idx in zip(*np.nonzero((arr != 0) & (arr != 1))):
            out.append(Violation("4b", (name,) + tuple(int(k) for k in idx), f"{name} not binary"))

    pmax = inst.p_max_w[:, None, None, None]
    bad = (p < 0) | (p > pmax * (1 + 1e-12))
    for idx in zip(*np.nonzero(bad)):
        out.append(Violation("4c", tuple(int(k) for k in idx), f"power {p[idx]:.6g} W outside [0, p_max]"))

    bits = accumulated_bits(inst, a)
    need = inst.sigma[:, None, :] * y
    short = (y > 0) & (bits < need * (1 - RATE_RTOL))
    for v, w, i in zip(*np.nonzero(short)):
        out.append(Violation("4d", (int(v), int(w), int(i)),
                             f"{bits[v, w, i]:.6g} achievable bits < {inst.sigma[v, i]:.6g} required"))

    # at most one frequency per (v, t, i) across all receivers
    used = x.any(axis=1)  # (m, F, T, 2)
    for v, t, i in zip(*np.nonzero(used.sum(axis=1) > 1)):
        out.append(Violation("4e", (int(v), int(t), int(i)), "packet sent on more than one frequency in a slot"))

    yb = y[:, :, None, None, :]
    for idx in zip(*np.nonzero(x > yb)):
        out.append(Violation("4f", tuple(int(k) for k in idx), "x set without y"))

    for idx in zip(*np.nonzero(y > x.sum(axis=(2, 3)))):
        out.append(Violation("4g", tuple(int(k) for k in idx), "y set without any scheduled RB"))

    for idx in zip(*np.nonzero(x[..., 0] + x[..., 1] > 1)):
        out.append(Violation("4h", tuple(int(k) for k in idx), "both slices on one RB"))

    for v in range(inst.m):
        window = np.zeros(inst.T, dtype=bool)
        window[list(inst.safety_window(v))] = True
        outside = np.flatnonzero(~window)
        hits = x[v, :, :, :, SAFETY][:, :, outside]
        for w, f, k in zip(*np.nonzero(hits)):
            t = outside[k]
            out.append(Violation("4i", (v, int(w), int(f), int(t)), "safety packet outside its window"))

    cap = inst.p_max_w[:, None, None, None] * x.max(axis=1)
    for idx in zip(*np.nonzero(p > cap * (1 + 1e-12))):
        out.append(Violation("4j", tuple(int(k) for k in idx), "power on an RB without a scheduled receiver"))

    if inst.oma:
        busy = (p > 0).any(axis=-1)  # (m, F, T)
        for f, t in zip(*np.nonzero(busy.sum(axis=0) > 1)):
            out.append(Violation("oma", (int(f), int(t)), "RB shared by several transmitters"))
    return out


def induced_assignment(inst: VraInstance, power: np.ndarray, targeted: np.ndarray, delivered: np.ndarray) -> Assignment:
    """Build an Assignment from a transmission log.

    power:     (m, F, T, 2) watts actually radiated
    targeted:  (m, n, F, T, 2) receiver w was an intended target of that RB
    delivered: (m, n, 2) pairs whose accumulated bits reached the packet size

    Only RBs that served a delivered pair are kept; a transmission that
    reached no delivered receiver is dropped, which can only lower
    interference for the others.
    """
    d = delivered.astype(bool)
    x = (targeted.astype(bool) & d[:, :, None, None, :]).astype(np.int8)
    keep = x.any(axis=1)
    p = np.where(keep, power, 0.0)
    return Assignment(x, d.astype(np.int8), p)
