"""Exact optimum of a VRA instance over a discrete action grid.

Each transmitter, in each slot, either stays silent or sends a slice set
({n}, {s} or both) on a frequency at one of the grid power levels. Coverage
is fixed at the largest radius: a wider coverage never removes bits from a
receiver, so it dominates every smaller one.

Two search strategies share the same per-slot joint action sets:

* ``enumerate`` walks every joint trajectory (refuses above ``cap``);
* ``dp`` sweeps slots forward over accumulated-bits states, merging
  identical states and discarding Pareto-dominated ones. Bits are capped at
  the packet size, so a dominated state can never finish with more
  deliveries. A coarse pass first finds a good schedule; the exact pass
  then drops any state that cannot beat it. The result is exact.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .noma import NON_SAFETY, SAFETY, sinr_tensor
from .vra import RATE_RTOL, Assignment, VraInstance, induced_assignment

DEFAULT_CAP = 10 ** 7

# slice sets as tuples of packet indices
SLICE_SETS = ((), (NON_SAFETY,), (SAFETY,), (NON_SAFETY, SAFETY))


class OracleRefused(ValueError):
    pass


@dataclass(frozen=True)
class AgentChoice:
    slices: tuple
    freq: int
    power_w: float

    @property
    def silent(self) -> bool:
        return not self.slices or self.power_w <= 0


SILENT = AgentChoice((), 0, 0.0)


def packet_frequencies(choice: AgentChoice, F: int) -> dict:
    """Frequency used by each packet; with both slices the non-safety packet
    moves to the next frequency so the two never share an RB."""
    if choice.silent:
        return {}
    if len(choice.slices) == 2:
        return {SAFETY: choice.freq, NON_SAFETY: (choice.freq + 1) % F}
    return {choice.slices[0]: choice.freq}


def agent_choices(inst: VraInstance, v: int, t: int, power_levels=None) -> list:
    levels = inst.power_levels_w if power_levels is None else power_levels
    levels = [p for p in levels if 0 < p <= inst.p_max_w[v] * (1 + 1e-12)]
    out = [SILENT]
    for ss in SLICE_SETS[1:]:
        if not all(inst.slot_allowed(v, t, i) for i in ss):
            continue
        if len(ss) == 2 and inst.F < 2:
            continue
        for f in range(inst.F):
            for p in levels:
                out.append(AgentChoice(ss, f, p))
    return out


def joint_actions(inst: VraInstance, t: int, power_levels=None) -> list:
    per_agent = [agent_choices(inst, v, t, power_levels) for v in range(inst.m)]
    joint = []
    for combo in itertools.product(*per_agent):
        if inst.oma:
            used = [f for c in combo for f in packet_frequencies(c, inst.F).values()]
            if len(used) != len(set(used)):
                continue
        joint.append(combo)
    return joint


def slot_power(inst: VraInstance, combo) -> np.ndarray:
    profile = np.zeros((inst.m, inst.F, 2))
    for v, c in enumerate(combo):
        for i, f in packet_frequencies(c, inst.F).items():
            profile[v, f, i] = c.power_w
    return profile


def slot_increment(inst: VraInstance, t: int, combo) -> np.ndarray:
    """Bits added to each (v, w, i) by one joint action at slot t, (m, n, 2)."""
    profile = slot_power(inst, combo)
    if not profile.any():
        return np.zeros((inst.m, inst.n, 2))
    s = sinr_tensor(profile, inst.gains[t])
    bits = inst.beta_hz * inst.tau_s * np.log2(1.0 + s).sum(axis=2)
    return bits * inst.reachable(t)[:, :, None]


def delivered_mask(inst: VraInstance, acc: np.ndarray) -> np.ndarray:
    acc = acc.reshape(inst.m, inst.n, 2)
    sig = inst.sigma[:, None, :]
    ok = acc >= sig * (1 - RATE_RTOL)
    ok[:, :, [i for i in (0, 1) if i not in inst.slices]] = False
    return ok


def joint_action_bound(inst: VraInstance, t: int, power_levels=None) -> int:
    """Joint actions at slot t before OMA filtering (exact for NOMA)."""
    return math.prod(len(agent_choices(inst, v, t, power_levels)) for v in range(inst.m))


def search_space_size(inst: VraInstance, power_levels=None) -> int:
    """Number of joint trajectories; an upper bound for OMA instances."""
    return math.prod(joint_action_bound(inst, t, power_levels) for t in range(inst.T))


def schedule_to_assignment(inst: VraInstance, schedule) -> Assignment:
    """Turn a per-slot list of joint actions into a feasible Assignment."""
    m, n, F, T = inst.m, inst.n, inst.F, inst.T
    power = np.zeros((m, F, T, 2))
    targeted = np.zeros((m, n, F, T, 2), dtype=bool)
    acc = np.zeros((m, n, 2))
    for t, combo in enumerate(schedule):
        power[:, :, t, :] = slot_power(inst, combo)
        reach = inst.reachable(t)
        for v, c in enumerate(combo):
            for i, f in packet_frequencies(c, F).items():
                targeted[v, :, f, t, i] = reach[v]
        acc += slot_increment(inst, t, combo)
    return induced_assignment(inst, power, targeted, delivered_mask(inst, acc))


def pareto_front(X: np.ndarray) -> np.ndarray:
    """Indices of the rows of X not weakly dominated by another row (duplicates collapse)."""
    if len(X) == 0:
        return np.zeros(0, dtype=int)
    X, first = np.unique(X, axis=0, return_index=True)
    order = np.argsort(-X.sum(axis=1), kind="stable")
    kept = []
    kept_rows = np.empty_like(X)
    for k in order:
        row = X[k]
        if kept and np.any(np.all(kept_rows[: len(kept)] >= row, axis=1)):
            continue
        kept_rows[len(kept)] = row
        kept.append(k)
    return first[np.array(kept, dtype=int)]


def _slot_tables(inst: VraInstance, power_levels, cap: int) -> list:
    """Per slot: joint actions and their bit increments, dominated ones removed."""
    live_slices = np.zeros((inst.m, inst.n, 2))
    live_slices[:, :, list(inst.slices)] = 1.0
    live_slices = live_slices.reshape(-1)
    ceiling = _ceiling(inst)
    for t in range(inst.T):
        per_slot = joint_action_bound(inst, t, power_levels)
        if per_slot > cap:
            raise OracleRefused(f"{per_slot} joint actions in slot {t} exceed cap {cap}")
    tables = []
    for t in range(inst.T):
        joint = joint_actions(inst, t, power_levels)
        inc = np.array([slot_increment(inst, t, c).reshape(-1) for c in joint]) * live_slices
        keep = pareto_front(np.minimum(inc, ceiling))
        tables.append(([joint[k] for k in keep], inc[keep]))
    return tables


def _ceiling(inst: VraInstance) -> np.ndarray:
    return np.repeat(inst.sigma[:, None, :], inst.n, axis=1).reshape(-1)


def _dp(inst: VraInstance, tables: list, cap: int, quantum: int | None = None, incumbent: int = -1):
    """Forward sweep over accumulated-bits states.

    Components that can no longer reach their packet size are zeroed, and
    states whose delivery upper bound does not beat ``incumbent`` are
    dropped. With ``quantum`` set, bits are floored to sigma/quantum steps,
    which under-counts and so yields a schedule whose true score is at
    least the reported one.

    Returns (score, schedule, work) or None if nothing beats the incumbent.
    """
    D = inst.m * inst.n * 2
    ceiling = _ceiling(inst)
    need = ceiling * (1 - RATE_RTOL)
    remaining = np.zeros((inst.T + 1, D))
    for t in range(inst.T - 1, -1, -1):
        remaining[t] = remaining[t + 1] + tables[t][1].max(axis=0)
    states = np.zeros((1, D))
    history = []
    work = 0
    for t, (joint, inc) in enumerate(tables):
        work += len(states) * len(inc)
        if work > cap:
            raise OracleRefused(
                f"oracle work {work} exceeds cap {cap} (joint trajectories: {search_space_size(inst, power_levels)})"
            )
        cand = np.minimum(states[:, None, :] + inc[None, :, :], ceiling).reshape(-1, D)
        if quantum:
            step = ceiling / quantum
            cand = np.floor(cand / step) * step
        done = cand >= need
        live = ~done & (cand + remaining[t + 1] >= need)
        cand = np.where(done, ceiling, np.where(live, cand, 0.0))
        viable = np.flatnonzero((done | live).sum(axis=1) > incumbent)
        if len(viable) == 0:
            return None
        keep = viable[pareto_front(cand[viable])]
        parent, act = np.divmod(keep, len(inc))
        history.append([(int(pa), joint[ac]) for pa, ac in zip(parent, act)])
        states = cand[keep]
    counts = (states >= need).sum(axis=1)
    best = int(np.argmax(counts))
    if counts[best] <= incumbent:
        return None
    schedule = []
    k = best
    for t in range(inst.T - 1, -1, -1):
        parent, combo = history[t][k]
        schedule.append(combo)
        k = parent
    schedule.reverse()
    return int(counts[best]), schedule, work


def _exact(inst: VraInstance, power_levels, cap: int, quantum: int = 8):
    tables = _slot_tables(inst, power_levels, cap)
    found = _dp(inst, tables, cap, quantum=quantum)
    lower, schedule = -1, None
    if found is not None:
        schedule = found[1]
        lower = schedule_score(inst, schedule)
        cap -= found[2]
    better = _dp(inst, tables, cap, incumbent=lower)
    if better is not None:
        return better[0], better[1]
    return lower, schedule


def schedule_score(inst: VraInstance, schedule) -> int:
    acc = sum(slot_increment(inst, t, c) for t, c in enumerate(schedule))
    return int(delivered_mask(inst, acc).sum())


def _enumerate(inst: VraInstance, power_levels, cap: int):
    size = search_space_size(inst, power_levels)
    if size > cap:
        raise OracleRefused(f"search space of {size} joint trajectories exceeds cap {cap}")
    joints = [joint_actions(inst, t, power_levels) for t in range(inst.T)]
    incs = [[slot_increment(inst, t, c) for c in joints[t]] for t in range(inst.T)]
    best = (-1, None)

    def rec(t, acc, path):
        nonlocal best
        if t == inst.T:
            score = int(delivered_mask(inst, acc).sum())
            if score > best[0]:
                best = (score, list(path))
            return
        for k, combo in enumerate(joints[t]):
            path.append(combo)
            rec(t + 1, acc + incs[t][k], path)
            path.pop()

    rec(0, np.zeros((inst.m, inst.n, 2)), [])
    return best


def brute_force_oracle(inst: VraInstance, power_levels=None, cap: int = DEFAULT_CAP, method: str = "dp"):
    """Maximum number of delivered pairs and an Assignment attaining it.

    ``power_levels`` (watts) is the discrete power grid; defaults to the
    instance's own level set.
    """
    if method == "dp":
        best, schedule = _exact(inst, power_levels, cap)
    elif method == "enumerate":
        best, schedule = _enumerate(inst, power_levels, cap)
    else:
        raise ValueError(f"unknown oracle method {method!r}")
    return best, schedule_to_assignment(inst, schedule)
