"""Dueling deep Q-network in plain numpy (float64), with manual backprop and Adam.

Layout: obs -> 500 -> 350 -> 260 (ReLU trunk) -> value head (1) and
advantage head (|A|), combined as Q = V + A - mean(A).
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

HIDDEN = (500, 350, 260)
MAGIC = b"VSQNET"
FORMAT_VERSION = 1


@dataclass
class QNetParams:
    """Named float64 arrays: W0,b0 .. W{L-1},b{L-1} for the trunk, Wv,bv, Wa,ba for the heads."""
    arrays: dict

    @property
    def names(self) -> tuple:
        return tuple(self.arrays)

    @property
    def depth(self) -> int:
        return sum(1 for k in self.arrays if k.startswith("W") and k[1:].isdigit())

    @property
    def obs_len(self) -> int:
        return self.arrays["W0"].shape[0]

    @property
    def action_count(self) -> int:
        return self.arrays["Wa"].shape[1]

    def copy(self) -> "QNetParams":
        return QNetParams({k: v.copy() for k, v in self.arrays.items()})

    def checksum(self) -> str:
        h = hashlib.sha256()
        for k, v in self.arrays.items():
            h.update(k.encode())
            h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()

    def __getitem__(self, name):
        return self.arrays[name]


def init(obs_len: int, action_count: int, seed: int, hidden=HIDDEN) -> QNetParams:
    """He-uniform weights, zero biases."""
    if obs_len < 1 or action_count < 1:
        raise ValueError("obs_len and action_count must be >= 1")
    rng = np.random.default_rng(seed)
    sizes = (obs_len,) + tuple(hidden)
    arrays = {}

    def he(fan_in, fan_out):
        lim = np.sqrt(6.0 / fan_in)
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    for k in range(len(hidden)):
        arrays[f"W{k}"] = he(sizes[k], sizes[k + 1])
        arrays[f"b{k}"] = np.zeros(sizes[k + 1])
    arrays["Wv"] = he(sizes[-1], 1)
    arrays["bv"] = np.zeros(1)
    arrays["Wa"] = he(sizes[-1], action_count)
    arrays["ba"] = np.zeros(action_count)
    return QNetParams(arrays)


def _forward(params: QNetParams, obs: np.ndarray):
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim not in (1, 2) or obs.shape[-1] != params.obs_len:
        raise ValueError(f"observation shape {obs.shape} does not match input width {params.obs_len}")
    single = obs.ndim == 1
    h = obs[None, :] if single else obs
    acts = [h]
    for k in range(params.depth):
        h = np.maximum(h @ params[f"W{k}"] + params[f"b{k}"], 0.0)
        acts.append(h)
    value = h @ params["Wv"] + params["bv"]
    adv = h @ params["Wa"] + params["ba"]
    q = value + adv - adv.mean(axis=1, keepdims=True)
    return q, value, adv, acts, single


def forward(params: QNetParams, obs: np.ndarray) -> np.ndarray:
    """Q-values, shape (|A|,) for one observation or (B, |A|) for a batch."""
    q, _, _, _, single = _forward(params, obs)
    return q[0] if single else q


def value_and_advantage(params: QNetParams, obs: np.ndarray):
    _, value, adv, _, single = _forward(params, obs)
    return (value[0, 0], adv[0]) if single else (value[:, 0], adv)


@dataclass
class Batch:
    obs: np.ndarray  # (B, d)
    action: np.ndarray  # (B,)
    reward: np.ndarray  # (B,)
    next_obs: np.ndarray  # (B, d)
    done: np.ndarray  # (B,) bool, no bootstrap when set
    next_mask: np.ndarray | None = None  # (B, |A|) bool, allowed actions at next_obs

    def __len__(self):
        return len(self.action)


def td_targets(batch: Batch, target_params: QNetParams, gamma: float) -> np.ndarray:
    q_next = forward(target_params, batch.next_obs)
    if batch.next_mask is not None:
        q_next = np.where(batch.next_mask, q_next, -np.inf)
    best = q_next.max(axis=1)
    best = np.where(np.asarray(batch.done, bool), 0.0, best)
    return np.asarray(batch.reward, float) + gamma * best


def td_loss(batch: Batch, params: QNetParams, target_params: QNetParams, gamma: float,
            is_weights=None, grads: bool = False):
    """Importance-weighted mean squared TD error.

    Returns (loss, delta) with delta = target - Q(obs, action); with
    ``grads=True`` also a dict of gradients keyed like the params.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    B = len(batch)
    w = np.ones(B) if is_weights is None else np.asarray(is_weights, float)
    y = td_targets(batch, target_params, gamma)
    q, value, adv, acts, _ = _forward(params, batch.obs)
    a = np.asarray(batch.action, int)
    delta = y - q[np.arange(B), a]
    wsum = w.sum()
    loss = float(np.sum(w * delta ** 2) / wsum)
    if not grads:
        return loss, delta

    # dL/dQ(s, a) for the taken action only
    g = -2.0 * w * delta / wsum
    n_act = params.action_count
    g_adv = np.repeat((-g / n_act)[:, None], n_act, axis=1)
    g_adv[np.arange(B), a] += g
    g_val = g[:, None]
    h = acts[-1]
    out = {
        "Wv": h.T @ g_val, "bv": g_val.sum(axis=0),
        "Wa": h.T @ g_adv, "ba": g_adv.sum(axis=0),
    }
    gh = g_val @ params["Wv"].T + g_adv @ params["Wa"].T
    for k in range(params.depth - 1, -1, -1):
        gh = gh * (acts[k + 1] > 0)
        out[f"W{k}"] = acts[k].T @ gh
        out[f"b{k}"] = gh.sum(axis=0)
        if k:
            gh = gh @ params[f"W{k}"].T
    return loss, delta, {k: out[k] for k in params.arrays}


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: QNetParams, lr: float = 1e-5, **kw) -> "AdamState":
        zeros = {k: np.zeros_like(a) for k, a in params.arrays.items()}
        return cls(zeros, {k: z.copy() for k, z in zeros.items()}, lr=lr, **kw)

    def copy(self) -> "AdamState":
        return AdamState({k: a.copy() for k, a in self.m.items()}, {k: a.copy() for k, a in self.v.items()},
                         self.step, self.lr, self.beta1, self.beta2, self.eps)


def adam_step(params: QNetParams, grads: dict, state: AdamState):
    """One bias-corrected Adam update. Updates both in place and returns them."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, p in params.arrays.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient {k} has shape {g.shape}, expected {p.shape}")
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def sync_target(params: QNetParams) -> QNetParams:
    return params.copy()


# -- persistence -------------------------------------------------------------
#
# little-endian layout:
#   magic "VSQNET", u16 version, u32 tensor count
#   per tensor: u16 name length, name (ascii), u8 ndim, ndim x u32 dims
#   then every tensor's data, row-major float64, in table order


def save(params: QNetParams, path) -> None:
    head = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(params.arrays))]
    for name, a in params.arrays.items():
        raw = name.encode("ascii")
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", a.ndim))
        head.append(struct.pack(f"<{a.ndim}I", *a.shape))
    with open(path, "wb") as fh:
        fh.write(b"".join(head))
        for a in params.arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load(path, obs_len: int | None = None, action_count: int | None = None, like: QNetParams | None = None) -> QNetParams:
    """Read a parameter file; any expected shape that disagrees raises ValueError."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise ValueError("not a Q-network parameter file")
    pos = len(MAGIC)
    version, count = struct.unpack_from("<HI", blob, pos)
    pos += 6
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported parameter file version {version}")
    table = []
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + ln].decode("ascii")
        pos += ln
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        table.append((name, shape))
    arrays = {}
    for name, shape in table:
        size = int(np.prod(shape))
        if pos + 8 * size > len(blob):
            raise ValueError("parameter file truncated")
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    if pos != len(blob):
        raise ValueError("trailing bytes in parameter file")
    params = QNetParams(arrays)
    if obs_len is not None and params.obs_len != obs_len:
        raise ValueError(f"parameter input width {params.obs_len} != expected {obs_len}")
    if action_count is not None and params.action_count != action_count:
        raise ValueError(f"parameter action count {params.action_count} != expected {action_count}")
    if like is not None:
        want = {k: a.shape for k, a in like.arrays.items()}
        got = {k: a.shape for k, a in arrays.items()}
        if want != got:
            raise ValueError(f"parameter shapes {got} do not match {want}")
    return params
