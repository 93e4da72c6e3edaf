"""Centralized matching benchmarks: OMA-MP, NOMA-MP and NOMA-RP.

These read the whole gain trace up front, unlike the online learners.

A demand is one (transmitter, packet) pair. Its stream holds one frequency
per slot (-1 when idle). Coverage is drawn at random per transmitter and
the safety packet gets a random start slot inside its window, after which
it is streamed up to its deadline. While simulating, a demand only radiates
in slots where some receiver in its coverage still misses the packet.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .noma import NON_SAFETY, SAFETY, sinr_tensor
from .vra import RATE_RTOL, VraInstance, check_feasible, induced_assignment

KINDS = ("OMA-MP", "NOMA-MP", "NOMA-RP")


@dataclass
class Matching:
    coverage_m: np.ndarray  # (m,)
    safety_start: np.ndarray  # (m,) 0-based first slot of the safety stream
    freq: np.ndarray  # (m, T, 2) int, -1 idle
    power_w: np.ndarray  # (m, T, 2)
    oma: bool
    unassigned: list = field(default_factory=list)  # (v, i, t) demands left without an RB

    def copy(self) -> "Matching":
        return Matching(self.coverage_m.copy(), self.safety_start.copy(), self.freq.copy(),
                        self.power_w.copy(), self.oma, list(self.unassigned))


@dataclass
class Outcome:
    delivered: np.ndarray  # (m, n, 2) bool
    acc: np.ndarray  # (m, n, 2) bits
    power: np.ndarray  # (m, F, T, 2)
    targeted: np.ndarray  # (m, n, F, T, 2)
    coverage_log: np.ndarray  # (T, m, n)

    def score(self, sigma: np.ndarray) -> tuple:
        """Delivered pairs, then capped accumulated bits."""
        return int(self.delivered.sum()), float(np.minimum(self.acc, sigma[:, None, :]).sum())


def covered(inst: VraInstance, coverage_m: np.ndarray, t: int) -> np.ndarray:
    """(m, n) receivers inside each transmitter's coverage at slot t."""
    if inst.rx_dist is None:
        return np.ones((inst.m, inst.n), dtype=bool)
    return inst.rx_dist[t] <= coverage_m[:, None]


def admissible(inst: VraInstance, v: int, i: int, start: int) -> range:
    if i == NON_SAFETY:
        return range(inst.T)
    return range(start, inst.deadline[v])


def initial_matching(inst: VraInstance, mode: str, rng: np.random.Generator, power: str = "max") -> Matching:
    """mode: "oma" or "noma"; power: "max" or "random" (uniform over the non-silent levels)."""
    if mode not in ("oma", "noma"):
        raise ValueError(f"unknown mode {mode!r}")
    if power not in ("max", "random"):
        raise ValueError(f"unknown power rule {power!r}")
    m, F, T = inst.m, inst.F, inst.T
    levels = [c for c in inst.coverage_levels_m if c > 0] or [np.inf]
    cov = np.array([levels[rng.integers(len(levels))] for _ in range(m)], dtype=float)
    starts = np.array([rng.integers(inst.arrival[v] - 1, inst.deadline[v]) for v in range(m)])
    freq = np.full((m, T, 2), -1)
    if power == "max":
        pw = np.repeat(inst.p_max_w[:, None, None], T, axis=1).repeat(2, axis=2).astype(float)
    else:
        lv = np.asarray(inst.power_levels_w, float)
        pw = lv[rng.integers(len(lv), size=(m, T, 2))]
        pw = np.minimum(pw, inst.p_max_w[:, None, None])
    unassigned = []
    for t in range(T):
        cv = covered(inst, cov, t)
        gsum = (inst.gains[t] * cv[:, :, None]).sum(axis=1)  # (m, F)
        demands = []
        for v in range(m):
            if not cv[v].any():
                continue
            # safety first so it wins a same-transmitter tie
            for i in (SAFETY, NON_SAFETY):
                if i in inst.slices and t in admissible(inst, v, i, starts[v]):
                    demands.append((v, i))
        demands.sort(key=lambda d: -gsum[d[0]].max())  # stable: safety stays ahead within v
        taken = set()
        own = {}
        for v, i in demands:
            for f in np.argsort(-gsum[v], kind="stable"):
                f = int(f)
                if (mode == "oma" and f in taken) or own.get((v, f)):
                    continue
                freq[v, t, i] = f
                taken.add(f)
                own[(v, f)] = True
                break
            else:
                unassigned.append((v, i, t))
    return Matching(cov, starts, freq, pw, mode == "oma", unassigned)


def _step(inst: VraInstance, mt: Matching, t: int, acc: np.ndarray, done: np.ndarray):
    """One slot of play; returns (acc, done, profile, send, covered)."""
    m = inst.m
    cv = covered(inst, mt.coverage_m, t)
    fr = mt.freq[:, t, :]
    open_ = (cv[:, :, None] & ~done).any(axis=1)  # (m, 2)
    send = (fr >= 0) & open_
    profile = np.zeros((m, inst.F, 2))
    if not send.any():
        return acc, done, profile, send, cv
    vv = np.arange(m)
    for i in (0, 1):
        v_on = vv[send[:, i]]
        profile[v_on, fr[v_on, i], i] = mt.power_w[v_on, t, i]
    s = sinr_tensor(profile, inst.gains[t])  # (m, n, F, 2)
    f_idx = np.where(fr >= 0, fr, 0)
    s_sel = np.take_along_axis(s, np.broadcast_to(f_idx[:, None, None, :], (m, inst.n, 1, 2)), axis=2)[:, :, 0, :]
    active = cv[:, :, None] & send[:, None, :]
    bits = inst.beta_hz * inst.tau_s * np.log2(1.0 + s_sel)
    acc = acc + np.where(active & ~done, bits, 0.0)
    done = done | (active & (acc >= inst.sigma[:, None, :] * (1 - RATE_RTOL)))
    return acc, done, profile, send, cv


def simulate(inst: VraInstance, mt: Matching) -> Outcome:
    m, n, F, T = inst.m, inst.n, inst.F, inst.T
    acc = np.zeros((m, n, 2))
    done = np.zeros((m, n, 2), bool)
    power = np.zeros((m, F, T, 2))
    targeted = np.zeros((m, n, F, T, 2), dtype=bool)
    cov_log = np.zeros((T, m, n), dtype=bool)
    for t in range(T):
        acc, done, profile, send, cv = _step(inst, mt, t, acc, done)
        power[:, :, t, :] = profile
        cov_log[t] = cv & send.any(axis=1)[:, None]
        for v, i in zip(*np.nonzero(send)):
            targeted[v, :, mt.freq[v, t, i], t, i] = cv[v]
    return Outcome(_live(inst, done), acc, power, targeted, cov_log)


def _live(inst: VraInstance, done: np.ndarray) -> np.ndarray:
    done = done.copy()
    done[:, :, [i for i in (0, 1) if i not in inst.slices]] = False
    return done


def _score_from(inst: VraInstance, mt: Matching, t0: int, acc, done) -> tuple:
    for t in range(t0, inst.T):
        acc, done, *_ = _step(inst, mt, t, acc, done)
    done = _live(inst, done)
    return int(done.sum()), float(np.minimum(acc, inst.sigma[:, None, :]).sum())


def _prefixes(inst: VraInstance, mt: Matching) -> list:
    """(acc, delivered) entering each slot."""
    out = []
    acc = np.zeros((inst.m, inst.n, 2))
    done = np.zeros((inst.m, inst.n, 2), bool)
    for t in range(inst.T):
        out.append((acc, done))
        acc, done, *_ = _step(inst, mt, t, acc, done)
    return out


def _swap_ok(mt: Matching, t: int, a: tuple, b: tuple) -> bool:
    fa, fb = mt.freq[a[0], t, a[1]], mt.freq[b[0], t, b[1]]
    if fa == fb:
        return False
    for (v, i), f in ((a, fb), (b, fa)):
        other = mt.freq[v, t, 1 - i]
        if f >= 0 and other == f and (v, 1 - i) not in (a, b):
            return False  # two slices of one transmitter on the same RB
    return True


def swap_improve(mt: Matching, inst: VraInstance, max_rounds: int = 1000, history: list | None = None) -> Matching:
    """Exchange the slot-t frequencies of two demands while that strictly improves the score.

    A demand may only receive an RB in a slot where it is admissible; the
    set of occupied RBs per slot never changes, so OMA exclusivity holds at
    every step. ``history`` collects the accepted scores.
    """
    mt = mt.copy()
    best = simulate(inst, mt).score(inst.sigma)
    if history is not None:
        history.append(best)
    m, T = inst.m, inst.T
    eligible = np.zeros((m, T, 2), dtype=bool)
    for v in range(m):
        for i in inst.slices:
            eligible[v, list(admissible(inst, v, i, mt.safety_start[v])), i] = True
    demands = [(v, i) for v in range(m) for i in inst.slices]
    for _ in range(max_rounds):
        improved = False
        prefixes = _prefixes(inst, mt)
        for t in range(T):
            for x in range(len(demands)):
                for y in range(x + 1, len(demands)):
                    a, b = demands[x], demands[y]
                    fa, fb = mt.freq[a[0], t, a[1]], mt.freq[b[0], t, b[1]]
                    if (fa < 0 and fb < 0) or not _swap_ok(mt, t, a, b):
                        continue
                    if (fb >= 0 and not eligible[a[0], t, a[1]]) or (fa >= 0 and not eligible[b[0], t, b[1]]):
                        continue
                    mt.freq[a[0], t, a[1]], mt.freq[b[0], t, b[1]] = fb, fa
                    sc = _score_from(inst, mt, t, *prefixes[t])
                    if sc > best:
                        best = sc
                        improved = True
                        if history is not None:
                            history.append(best)
                        prefixes = _prefixes(inst, mt)
                    else:
                        mt.freq[a[0], t, a[1]], mt.freq[b[0], t, b[1]] = fa, fb
        if not improved:
            break
    return mt


def matching_assignment(inst: VraInstance, mt: Matching) -> tuple:
    out = simulate(inst, mt)
    return induced_assignment(inst, out.power, out.targeted, out.delivered), out


def run_benchmark(kind: str, inst: VraInstance, rng: np.random.Generator, swap: bool = True, details: bool = False):
    """Returns (Assignment, objective), plus (Matching, Outcome) when ``details``."""
    if kind not in KINDS:
        raise ValueError(f"unknown benchmark {kind!r}; choose from {KINDS}")
    mode = "oma" if kind.startswith("OMA") else "noma"
    power = "random" if kind.endswith("RP") else "max"
    work = inst.with_(oma=True) if mode == "oma" else inst
    mt = initial_matching(work, mode, rng, power)
    if swap:
        mt = swap_improve(mt, work)
    a, out = matching_assignment(work, mt)
    bad = check_feasible(work, a)
    if bad:
        raise AssertionError(f"{kind} produced an infeasible assignment: {bad[:3]}")
    obj = int(a.y.sum())
    return (a, obj, mt, out) if details else (a, obj)
