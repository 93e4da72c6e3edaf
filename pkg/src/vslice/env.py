"""Multi-agent episodic environment around the vehicular simulator.

Every transmitter is an agent. Per slot each agent picks a flat action
encoding (coverage, slice set, frequency, power); the joint action is
applied at once and all agents receive the same (common) reward.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .channel import reference_gain
from .noma import NON_SAFETY, SAFETY, sinr_tensor
from .scenario import SILENT_DBM, Episode, Packets, ScenarioConfig, dbm_to_w, make_episode
from .vra import RATE_RTOL, Assignment, VraInstance, induced_assignment

SLICE_SETS = ((), (NON_SAFETY,), (SAFETY,), (NON_SAFETY, SAFETY))
SLICE_NAMES = ("-", "n", "s", "ns")
SHAPING_CLIP = 0.999
GAIN_DB_CENTER = 40.0
GAIN_DB_SCALE = 30.0


@dataclass(frozen=True)
class AgentAction:
    coverage_m: float
    slice_set: tuple
    freq: int
    power_dbm: float

    @property
    def silent(self) -> bool:
        return self.coverage_m <= 0 or not self.slice_set or self.power_dbm <= SILENT_DBM


class ActionSpace:
    """Flat index = ((c * 4 + b) * F + f) * |P| + p."""

    def __init__(self, coverages_m, powers_dbm, F: int):
        self.coverages_m = tuple(float(c) for c in coverages_m)
        self.powers_dbm = tuple(float(p) for p in powers_dbm)
        self.F = int(F)
        C, B, P = len(self.coverages_m), len(SLICE_SETS), len(self.powers_dbm)
        self.n = C * B * self.F * P
        c, b, f, p = np.unravel_index(np.arange(self.n), (C, B, self.F, P))
        self.cov = np.asarray(self.coverages_m)[c]
        self.bset = b
        self.freq = f
        self.pdbm = np.asarray(self.powers_dbm)[p]
        self.pw = np.array([dbm_to_w(x) for x in self.pdbm])
        self.silent = (self.cov <= 0) | (b == 0) | (self.pdbm <= SILENT_DBM)
        self.has_n = np.isin(b, (1, 3)) & ~self.silent
        self.has_s = np.isin(b, (2, 3)) & ~self.silent
        self.both = (b == 3) & ~self.silent

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "ActionSpace":
        return cls(cfg.coverage_levels_m, cfg.power_levels_dbm, cfg.network.F)

    def __len__(self):
        return self.n

    def encode(self, coverage_m: float, slice_set: tuple, freq: int, power_dbm: float) -> int:
        c = self.coverages_m.index(float(coverage_m))
        b = SLICE_SETS.index(tuple(sorted(slice_set)))
        p = self.powers_dbm.index(float(power_dbm))
        return int(np.ravel_multi_index((c, b, freq, p), (len(self.coverages_m), 4, self.F, len(self.powers_dbm))))

    def decode(self, a: int) -> AgentAction:
        if not 0 <= a < self.n:
            raise IndexError(f"action {a} out of range")
        return AgentAction(float(self.cov[a]), SLICE_SETS[self.bset[a]], int(self.freq[a]), float(self.pdbm[a]))

    def packet_freqs(self, a: int) -> dict:
        if self.silent[a]:
            return {}
        f = int(self.freq[a])
        if self.both[a]:
            return {SAFETY: f, NON_SAFETY: (f + 1) % self.F}
        return {SLICE_SETS[self.bset[a]][0]: f}


def observation_length(m: int, n: int, F: int) -> int:
    return n * F + (m - 1) + 4 * m + 6


def pair_reward(sinr: float, beta_hz: float, tau_s: float, norm: float,
                crossed: bool = False, delivered: bool = False) -> float:
    """Per-(agent, receiver, packet) reward for one slot."""
    if delivered:
        return 0.0
    if crossed:
        return 1.0
    return min(beta_hz * tau_s * float(np.log2(1.0 + sinr)) / norm, SHAPING_CLIP)


def discounted_return(rewards, gamma: float) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    total, scale = 0.0, 1.0
    for r in rewards:
        total += scale * r
        scale *= gamma
    return total


def reward_normalizer(cfg: ScenarioConfig) -> float:
    """Ten times the bits of a single interference-free 10 m link at full power."""
    snr_ref = cfg.p_max_w * reference_gain(cfg.channel, 10.0)
    return 10.0 * cfg.channel.rb_bandwidth_hz * cfg.network.slot_s * float(np.log2(1.0 + snr_ref))


@dataclass
class EnvState:
    episode: Episode
    k: int
    t: int  # 0-based index of the next slot to play
    acc: np.ndarray  # (m, n, 2) accumulated bits
    delivered: np.ndarray  # (m, n, 2) bool
    z_prev: np.ndarray  # (m,) slice-set code used last slot
    power_log: np.ndarray  # (m, F, T, 2)
    target_log: np.ndarray  # (m, n, F, T, 2)
    coverage_log: np.ndarray  # (T, m, n) receiver inside the chosen coverage
    action_log: np.ndarray  # (T, m)
    reward_log: np.ndarray  # (T,)
    pair_log: list = field(default_factory=list)  # per slot: (sinr, pair_reward, active), each (m, n, 2)

    @property
    def done(self) -> bool:
        return self.t >= len(self.reward_log)


class MaskedActionError(ValueError):
    pass


class VehicularEnv:
    def __init__(self, cfg: ScenarioConfig, space: ActionSpace | None = None, seed: int | None = None):
        self.cfg = cfg
        self.net = cfg.network
        self.space = space or ActionSpace.from_config(cfg)
        if self.space.F != self.net.F:
            raise ValueError("action space frequency count differs from the network")
        self.seed = cfg.seed if seed is None else seed
        self.norm = reward_normalizer(cfg)
        self.max_cov = max(self.space.coverages_m)
        self.episode_frac = 0.0
        self.epsilon = 0.0
        self.state: EnvState | None = None

    @property
    def obs_len(self) -> int:
        return observation_length(self.net.m, self.net.n, self.net.F)

    @property
    def n_actions(self) -> int:
        return len(self.space)

    def set_fingerprint(self, episode_frac: float, epsilon: float):
        self.episode_frac = float(episode_frac)
        self.epsilon = float(epsilon)

    def reset(self, k: int = 0, episode: Episode | None = None, packets: Packets | None = None):
        if episode is None:
            episode = make_episode(self.cfg, k, self.seed, packets)
        m, n, F, T = self.net.m, self.net.n, self.net.F, self.net.T
        if episode.gains.shape != (T, m, n, F):
            raise ValueError("episode does not match the network dimensions")
        self.state = EnvState(
            episode=episode, k=k, t=0,
            acc=np.zeros((m, n, 2)), delivered=np.zeros((m, n, 2), dtype=bool),
            z_prev=np.zeros(m, dtype=int),
            power_log=np.zeros((m, F, T, 2)), target_log=np.zeros((m, n, F, T, 2), dtype=bool),
            coverage_log=np.zeros((T, m, n), dtype=bool), action_log=np.full((T, m), -1),
            reward_log=np.zeros(T),
        )
        return self.state, self.observations()

    # -- observation -----------------------------------------------------

    def _slot(self) -> int:
        return min(self.state.t, self.net.T - 1)

    def observe(self, v: int) -> np.ndarray:
        st, ep = self.state, self.state.episode
        t = self._slot()
        m, T = self.net.m, self.net.T
        g = np.maximum(ep.gains[t, v], 1e-20)
        gains_db = (10.0 * np.log10(g).reshape(-1) - GAIN_DB_CENTER) / GAIN_DB_SCALE
        d = np.delete(ep.tx_dist[t, v], v) / self.cfg.highway.road_length_m
        z = np.zeros((m, 4))
        z[np.arange(m), st.z_prev] = 1.0
        reach = ep.rx_dist[t, v] <= self.max_cov
        sigma = ep.packets.sigma[v]
        remaining = np.zeros(2)
        for i in (NON_SAFETY, SAFETY):
            open_ = reach & ~st.delivered[v, :, i]
            if open_.any():
                remaining[i] = max(sigma[i] - st.acc[v, open_, i].max(), 0.0) / sigma[i]
        tail = [ep.packets.arrival[v] / T, ep.packets.deadline[v] / T, self.episode_frac, self.epsilon]
        return np.concatenate([gains_db, d, z.reshape(-1), remaining, tail])

    def observations(self) -> list:
        return [self.observe(v) for v in range(self.net.m)]

    # -- masking ---------------------------------------------------------

    def action_mask(self, v: int) -> np.ndarray:
        st, ep = self.state, self.state.episode
        t = self._slot()
        sp = self.space
        reach = ep.rx_dist[t, v] <= self.max_cov
        open_n = bool(np.any(reach & ~st.delivered[v, :, NON_SAFETY]))
        open_s = bool(np.any(reach & ~st.delivered[v, :, SAFETY]))
        in_window = ep.packets.arrival[v] - 1 <= t < ep.packets.deadline[v]
        ok = (~sp.has_n | open_n) & (~sp.has_s | (open_s and in_window))
        if self.net.F < 2:
            ok &= ~sp.both
        return sp.silent | ok

    # -- dynamics --------------------------------------------------------

    def step(self, joint_action):
        st, ep = self.state, self.state.episode
        if st.done:
            raise RuntimeError("episode already finished; call reset")
        m, n, F = self.net.m, self.net.n, self.net.F
        t = st.t
        sp = self.space
        joint_action = [int(a) for a in joint_action]
        if len(joint_action) != m:
            raise ValueError(f"expected {m} actions")
        profile = np.zeros((m, F, 2))
        freq_of = np.zeros((m, 2), dtype=int)
        sends = np.zeros((m, 2), dtype=bool)
        for v, a in enumerate(joint_action):
            if not self.action_mask(v)[a]:
                raise MaskedActionError(f"agent {v} chose masked action {a} at slot {t}")
            for i, f in sp.packet_freqs(a).items():
                profile[v, f, i] = sp.pw[a]
                freq_of[v, i] = f
                sends[v, i] = True
        cov = sp.cov[joint_action]
        covered = (ep.rx_dist[t] <= cov[:, None]) & (cov[:, None] > 0)
        st.coverage_log[t] = covered & sends.any(axis=1)[:, None]

        s_all = sinr_tensor(profile, ep.gains[t])  # (m, n, F, 2)
        s_sel = np.take_along_axis(s_all, freq_of[:, None, None, :], axis=2)[:, :, 0, :]
        s_sel = np.where(sends[:, None, :], s_sel, 0.0)
        bits = self.cfg.channel.rb_bandwidth_hz * self.net.slot_s * np.log2(1.0 + s_sel)

        active = covered[:, :, None] & sends[:, None, :]
        fresh = active & ~st.delivered
        st.acc = st.acc + np.where(fresh, bits, 0.0)
        sigma = ep.packets.sigma[:, None, :]
        crossed = fresh & (st.acc >= sigma * (1 - RATE_RTOL))
        shaping = np.minimum(bits / self.norm, SHAPING_CLIP)
        pair_r = np.where(crossed, 1.0, np.where(fresh, shaping, 0.0))
        st.delivered = st.delivered | crossed
        reward = float(pair_r.sum())

        st.power_log[:, :, t, :] = profile
        for v in range(m):
            for i in (NON_SAFETY, SAFETY):
                if sends[v, i]:
                    st.target_log[v, :, freq_of[v, i], t, i] = covered[v]
        st.action_log[t] = joint_action
        st.reward_log[t] = reward
        st.pair_log.append((s_sel, pair_r, active))
        st.z_prev = np.array([(1 if sends[v, 0] else 0) + (2 if sends[v, 1] else 0) for v in range(m)])
        st.t = t + 1
        return st, self.observations(), reward, st.done

    # -- views -----------------------------------------------------------

    def instance(self, oma: bool = False) -> VraInstance:
        return self.state.episode.instance(self.cfg, oma=oma)

    def induced_assignment(self) -> Assignment:
        st = self.state
        return induced_assignment(self.instance(), st.power_log, st.target_log, st.delivered)

    def trace_csv(self) -> str:
        st = self.state
        buf = io.StringIO()
        buf.write("t,agent,coverage_m,slices,freq,power_dbm,receiver,packet,sinr,pair_reward\n")
        for t, (s_sel, pair_r, active) in enumerate(st.pair_log):
            for v in range(self.net.m):
                act = self.space.decode(int(st.action_log[t, v]))
                names = SLICE_NAMES[SLICE_SETS.index(act.slice_set)]
                for w, i in zip(*np.nonzero(active[v])):
                    buf.write(f"{t + 1},{v},{act.coverage_m:g},{names},{act.freq},{act.power_dbm:g},"
                              f"{w},{'ns'[i]},{s_sel[v, w, i]:.6g},{pair_r[v, w, i]:.6g}\n")
        return buf.getvalue()
