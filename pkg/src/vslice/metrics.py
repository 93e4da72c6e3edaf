"""Episode metrics: delivered counts, packet reception ratio, sojourn time."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .noma import NON_SAFETY, SAFETY


def prr(v: int, i: int, delivered: np.ndarray, targets: np.ndarray):
    """Percentage of v's targets that received packet i, and a no-target flag.

    delivered, targets: (m, n, 2) bool. With no target the ratio is 0.
    """
    tgt = np.asarray(targets, bool)[v, :, i]
    if not tgt.any():
        return 0.0, True
    ok = np.asarray(delivered, bool)[v, :, i] & tgt
    return 100.0 * ok.sum() / tgt.sum(), False


def prr_all(v: int, i: int, delivered: np.ndarray) -> float:
    """Same ratio over every receiver in the network."""
    d = np.asarray(delivered, bool)
    return 100.0 * d[v, :, i].sum() / d.shape[1]


def runs(mask) -> list:
    """Lengths of maximal runs of True."""
    out, cur = [], 0
    for b in mask:
        if b:
            cur += 1
        elif cur:
            out.append(cur)
            cur = 0
    if cur:
        out.append(cur)
    return out


def sojourn(w: int, coverage_history: np.ndarray) -> float:
    """Mean run length of w inside any single transmitter's coverage, as % of the horizon.

    coverage_history: (T, m, n) bool. Returns nan if w was never covered.
    """
    hist = np.asarray(coverage_history, bool)
    T = hist.shape[0]
    lengths = [r for v in range(hist.shape[1]) for r in runs(hist[:, v, w])]
    if not lengths:
        return float("nan")
    return 100.0 * (sum(lengths) / len(lengths)) / T


@dataclass
class EpisodeMetrics:
    delivered_total: int
    delivered_safety: int
    delivered_non_safety: int
    prr_covered: np.ndarray  # (m, 2) percent
    prr_all: np.ndarray  # (m, 2) percent
    no_target: np.ndarray  # (m, 2) bool
    sojourn_pct: np.ndarray  # (n,) percent, nan for never-covered receivers
    mean_common_reward: float
    per_agent_delivered: np.ndarray  # (m,)

    SCALARS = ("delivered_total", "delivered_safety", "delivered_non_safety",
               "mean_prr_covered", "mean_prr_all", "mean_sojourn_pct", "mean_common_reward")

    @property
    def mean_prr_covered(self) -> float:
        vals = self.prr_covered[~self.no_target]
        return float(vals.mean()) if vals.size else 0.0

    @property
    def mean_prr_all(self) -> float:
        return float(self.prr_all.mean())

    @property
    def mean_sojourn_pct(self) -> float:
        vals = self.sojourn_pct[~np.isnan(self.sojourn_pct)]
        return float(vals.mean()) if vals.size else float("nan")

    def scalars(self) -> dict:
        return {k: getattr(self, k) for k in self.SCALARS}

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}


def episode_metrics(delivered: np.ndarray, targets: np.ndarray, coverage_history: np.ndarray,
                    mean_common_reward: float = float("nan")) -> EpisodeMetrics:
    """delivered, targets: (m, n, 2) bool; coverage_history: (T, m, n) bool."""
    delivered = np.asarray(delivered, bool)
    m, n, _ = delivered.shape
    pc = np.zeros((m, 2))
    pa = np.zeros((m, 2))
    nt = np.zeros((m, 2), dtype=bool)
    for v in range(m):
        for i in (NON_SAFETY, SAFETY):
            pc[v, i], nt[v, i] = prr(v, i, delivered, targets)
            pa[v, i] = prr_all(v, i, delivered)
    soj = np.array([sojourn(w, coverage_history) for w in range(n)])
    return EpisodeMetrics(
        delivered_total=int(delivered.sum()),
        delivered_safety=int(delivered[:, :, SAFETY].sum()),
        delivered_non_safety=int(delivered[:, :, NON_SAFETY].sum()),
        prr_covered=pc, prr_all=pa, no_target=nt, sojourn_pct=soj,
        mean_common_reward=float(mean_common_reward),
        per_agent_delivered=delivered.sum(axis=(1, 2)),
    )


def env_metrics(state) -> EpisodeMetrics:
    """Metrics of a finished environment episode (an EnvState)."""
    targets = state.target_log.any(axis=(2, 3))
    return episode_metrics(state.delivered, targets, state.coverage_log, float(state.reward_log.mean()))


def _stats(values) -> dict:
    vals = [float(x) for x in values if not math.isnan(float(x))]
    if not vals:
        nan = float("nan")
        return {"mean": nan, "std": nan, "min": nan, "max": nan}
    mean = math.fsum(vals) / len(vals)
    var = math.fsum((x - mean) ** 2 for x in vals) / len(vals)
    return {"mean": mean, "std": math.sqrt(var), "min": min(vals), "max": max(vals)}


def aggregate(episodes) -> dict:
    """Per scalar field: mean, std (population), min, max; plus the episode count."""
    episodes = list(episodes)
    if not episodes:
        raise ValueError("nothing to aggregate")
    out = {"count": len(episodes)}
    for key in EpisodeMetrics.SCALARS:
        out[key] = _stats(getattr(e, key) for e in episodes)
    return out
