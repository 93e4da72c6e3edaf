"""NOMA/SIC interference, SINR and achievable bits.

Power profiles are arrays ``p[v, f, i]`` in watts for the current slot,
with packet index i = 0 (non-safety) or 1 (safety). Gains are arrays
``g[v, w, f]`` of noise-normalized power gains.

A receiver cancels every transmitter whose gain is at least as strong as the
wanted one; only strictly weaker links interfere.
"""
from __future__ import annotations

import numpy as np

NON_SAFETY = 0
SAFETY = 1
SLICES = ("n", "s")


def interference(v: int, w: int, f: int, profile: np.ndarray, gains: np.ndarray) -> float:
    g = gains[:, w, f]
    weaker = g[v] > g
    return float(np.sum(g[weaker] * profile[weaker, f, :].sum(axis=-1)))


def sinr(v: int, w: int, f: int, i: int, profile: np.ndarray, gains: np.ndarray) -> float:
    p = profile[v, f, i]
    if p < 0:
        raise ValueError("negative transmit power")
    return float(p * gains[v, w, f] / (1.0 + interference(v, w, f, profile, gains)))


def achievable_bits(sinr_value, beta_hz: float, tau_s: float):
    s = np.asarray(sinr_value, dtype=float)
    if np.any(s < 0):
        raise ValueError("sinr must be non-negative")
    bits = beta_hz * tau_s * np.log2(1.0 + s)
    return float(bits) if bits.ndim == 0 else bits


def interference_tensor(profile: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """I[v, w, f] for every link at once."""
    contrib = gains * profile.sum(axis=-1)[:, None, :]  # (v', w, f)
    weaker = gains[:, None, :, :] > gains[None, :, :, :]  # (v, v', w, f)
    return np.einsum("abwf,bwf->awf", weaker, contrib)


def sinr_tensor(profile: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """sinr[v, w, f, i] for every link and packet."""
    interf = interference_tensor(profile, gains)
    return profile[:, None, :, :] * (gains / (1.0 + interf))[..., None]
