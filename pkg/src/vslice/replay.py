"""Proportional prioritized experience replay.

Indices handed out by ``push``/``sample`` are global serial numbers, so an
index whose slot has since been overwritten is recognized as stale.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dqn import Batch


@dataclass
class Experience:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool = False
    next_mask: np.ndarray | None = None


class ReplayBuffer:
    def __init__(self, capacity: int, obs_len: int, action_count: int | None = None,
                 alpha: float = 0.6, theta: float = 0.4, mu: float = 0.001):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.alpha, self.theta, self.mu = alpha, theta, mu
        self.action_count = action_count
        self.obs = np.zeros((capacity, obs_len))
        self.next_obs = np.zeros((capacity, obs_len))
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.masks = None
        if action_count is not None:
            self.masks = np.zeros((capacity, (action_count + 7) // 8), dtype=np.uint8)
        self.priority = np.zeros(capacity)
        self.pushed = 0
        self.stale_updates = 0

    def __len__(self):
        return min(self.pushed, self.capacity)

    def _slot(self, serial: int) -> int:
        return serial % self.capacity

    def _live(self, serial: int) -> bool:
        return self.pushed - len(self) <= serial < self.pushed

    def max_priority(self) -> float:
        return float(self.priority[: len(self)].max()) if len(self) else 1.0

    def push(self, exp: Experience, priority_hint: float | None = None) -> int:
        """Store exp (evicting the oldest when full); returns its serial index."""
        prio = self.max_priority() if priority_hint is None else float(priority_hint)
        if not prio > 0:
            raise ValueError("priority must be positive")
        serial = self.pushed
        k = self._slot(serial)
        self.obs[k] = exp.obs
        self.next_obs[k] = exp.next_obs
        self.action[k] = exp.action
        self.reward[k] = exp.reward
        self.done[k] = exp.done
        if self.masks is not None:
            mask = np.ones(self.action_count, bool) if exp.next_mask is None else exp.next_mask
            self.masks[k] = np.packbits(np.asarray(mask, bool))
        self.priority[k] = prio
        self.pushed += 1
        return serial

    def probabilities(self) -> np.ndarray:
        """Sampling probability of each stored item, oldest first."""
        order = [self._slot(s) for s in range(self.pushed - len(self), self.pushed)]
        p = self.priority[order] ** self.alpha
        return p / p.sum()

    def sample(self, k: int, rng: np.random.Generator):
        """k draws with replacement; returns (Batch, serial indices, IS weights)."""
        size = len(self)
        if size == 0:
            raise ValueError("cannot sample from an empty buffer")
        if k < 1:
            raise ValueError("sample count must be >= 1")
        p = self.priority[:size] ** self.alpha
        cum = np.cumsum(p)
        u = rng.random(k) * cum[-1]
        slots = np.minimum(np.searchsorted(cum, u, side="right"), size - 1)
        probs = p[slots] / cum[-1]
        w = (size * probs) ** (-self.theta)
        w /= w.max()
        # slot -> serial: the live serial occupying that slot
        base = self.pushed - size
        serials = base + (slots - base) % self.capacity
        masks = None
        if self.masks is not None:
            masks = np.unpackbits(self.masks[slots], axis=1, count=self.action_count).astype(bool)
        batch = Batch(self.obs[slots], self.action[slots], self.reward[slots], self.next_obs[slots],
                      self.done[slots], masks)
        return batch, serials, w

    def update_priorities(self, indices, td_errors) -> None:
        for s, d in zip(np.asarray(indices).ravel(), np.asarray(td_errors, float).ravel()):
            s = int(s)
            if not self._live(s):
                self.stale_updates += 1
                continue
            self.priority[self._slot(s)] = abs(d) + self.mu

    def priority_of(self, serial: int) -> float:
        if not self._live(serial):
            raise KeyError(f"index {serial} is no longer stored")
        return float(self.priority[self._slot(serial)])
