"""Multi-agent deep Q-learning: the training loop and greedy inference.

Each transmitter owns a dueling Q-network, a target copy, an Adam state
and a prioritized replay buffer. Agents act independently from local
observations; the environment returns one common reward.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dqn
from .env import VehicularEnv
from .metrics import EpisodeMetrics, env_metrics
from .replay import Experience, ReplayBuffer
from .scenario import NETWORKS, ScenarioConfig, draw_packets, network

_AGENT_TAG = 0xA6E
_INIT_TAG = 0x1417
# inference episodes are drawn from a range disjoint from training
INFER_OFFSET = 10 ** 6


@dataclass(frozen=True)
class TrainConfig:
    network: str = "2,2,1,5"
    episodes: int = 3000
    anneal_frac: float = 0.8
    eps_start: float = 1.0
    eps_end: float = 0.02
    gamma: float = 0.9
    train_every: int | None = None  # global slots; None -> 10 * T
    target_every: int | None = None  # global slots; None -> 100 * T
    n_samples: int = 2000
    sgd_batch: int = 32
    lr: float = 1e-5
    capacity: int = 100_000
    hidden: tuple = dqn.HIDDEN
    seed: int = 0
    fixed_packets: bool = True

    def __post_init__(self):
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if not 0 < self.anneal_frac <= 1:
            raise ValueError("anneal_frac must lie in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        for name in ("episodes", "n_samples", "sgd_batch", "capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("train_every", "target_every"):
            val = getattr(self, name)
            if val is not None and val < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def anneal_episodes(self) -> float:
        return self.anneal_frac * self.episodes

    def cadences(self, T: int) -> tuple:
        return (self.train_every or 10 * T, self.target_every or 100 * T)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def anneal_epsilon(k: int, cfg: TrainConfig) -> float:
    """Linear decay from eps_start at k=0 to eps_end at k=anneal_episodes, flat afterwards."""
    if k < 0:
        raise ValueError("episode index must be >= 0")
    hk = cfg.anneal_episodes
    if k >= hk:
        return cfg.eps_end
    return (cfg.eps_start - cfg.eps_end) * (1.0 - k / hk) + cfg.eps_end


def select_action(params: dqn.QNetParams, obs: np.ndarray, epsilon: float, mask: np.ndarray,
                  rng: np.random.Generator) -> int:
    """Masked epsilon-greedy; ties go to the lowest index."""
    mask = np.asarray(mask, bool)
    allowed = np.flatnonzero(mask)
    if allowed.size == 0:
        raise ValueError("every action is masked")
    if rng.random() < epsilon:
        return int(allowed[rng.integers(allowed.size)])
    q = dqn.forward(params, obs)
    return int(np.argmax(np.where(mask, q, -np.inf)))


def agent_rng(seed: int, v: int, tag: int = _AGENT_TAG) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, v, tag]))


@dataclass
class Agent:
    params: dqn.QNetParams
    target: dqn.QNetParams
    adam: dqn.AdamState
    buffer: ReplayBuffer
    rng: np.random.Generator


@dataclass
class TrainResult:
    agents: list
    epsilon: float
    reward: np.ndarray  # per-episode mean common reward
    loss: np.ndarray  # per-episode mean training loss, nan where no update ran
    config: TrainConfig
    scenario: ScenarioConfig
    experiences: int = 0
    updates: int = 0

    @property
    def params(self) -> list:
        return [a.params for a in self.agents]

    def reward_ma(self, window: int = 200) -> np.ndarray:
        return moving_average(self.reward, window)

    def curves_csv(self, window: int = 200) -> str:
        ma = self.reward_ma(window)
        lines = ["episode,mean_reward,reward_ma,mean_loss"]
        for k, (r, a, l) in enumerate(zip(self.reward, ma, self.loss)):
            lines.append(f"{k + 1},{r:.10g},{a:.10g},{'' if np.isnan(l) else f'{l:.10g}'}")
        return "\n".join(lines) + "\n"


def moving_average(x, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start)."""
    x = np.asarray(x, float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    k = np.arange(1, len(x) + 1)
    lo = np.maximum(k - window, 0)
    return (c[k] - c[lo]) / (k - lo)


def scenario_for(cfg: TrainConfig, base: ScenarioConfig | None = None) -> ScenarioConfig:
    net = NETWORKS.get(cfg.network) or network(cfg.network)
    base = base or ScenarioConfig()
    return replace(base, network=net, seed=cfg.seed)


def make_agents(cfg: TrainConfig, env: VehicularEnv) -> list:
    agents = []
    for v in range(env.net.m):
        init_seed = np.random.SeedSequence([cfg.seed, v, _INIT_TAG]).generate_state(1)[0]
        p = dqn.init(env.obs_len, env.n_actions, int(init_seed), cfg.hidden)
        agents.append(Agent(
            params=p, target=dqn.sync_target(p), adam=dqn.AdamState.for_params(p, lr=cfg.lr),
            buffer=ReplayBuffer(cfg.capacity, env.obs_len, env.n_actions), rng=agent_rng(cfg.seed, v),
        ))
    return agents


def learn(agent: Agent, cfg: TrainConfig) -> float:
    """One cadence tick: draw n_samples by priority, then SGD over them in sgd_batch chunks."""
    batch, idx, w = agent.buffer.sample(cfg.n_samples, agent.rng)
    losses = []
    for lo in range(0, len(idx), cfg.sgd_batch):
        sl = slice(lo, lo + cfg.sgd_batch)
        sub = dqn.Batch(batch.obs[sl], batch.action[sl], batch.reward[sl], batch.next_obs[sl],
                        batch.done[sl], None if batch.next_mask is None else batch.next_mask[sl])
        loss, delta, grads = dqn.td_loss(sub, agent.params, agent.target, cfg.gamma, w[sl], grads=True)
        dqn.adam_step(agent.params, grads, agent.adam)
        agent.buffer.update_priorities(idx[sl], delta)
        losses.append(loss)
    return float(np.mean(losses))


def train(cfg: TrainConfig, scenario: ScenarioConfig | None = None, progress=None) -> TrainResult:
    """Run the training loop; fully determined by (cfg, scenario)."""
    sc = scenario_for(cfg, scenario)
    env = VehicularEnv(sc, seed=cfg.seed)
    agents = make_agents(cfg, env)
    T, m = sc.network.T, sc.network.m
    t_train, t_target = cfg.cadences(T)
    packets = draw_packets(sc, cfg.seed, 0) if cfg.fixed_packets else None
    rewards = np.zeros(cfg.episodes)
    losses = np.full(cfg.episodes, np.nan)
    updates = 0
    eps = cfg.eps_start
    for k in range(cfg.episodes):
        eps = anneal_epsilon(k, cfg)
        env.set_fingerprint(k / cfg.episodes, eps)
        _, obs = env.reset(k, packets=packets)
        masks = [env.action_mask(v) for v in range(m)]
        ep_losses = []
        for t in range(T):
            joint = [select_action(agents[v].params, obs[v], eps, masks[v], agents[v].rng) for v in range(m)]
            _, next_obs, r, done = env.step(joint)
            next_masks = [env.action_mask(v) for v in range(m)]
            for v in range(m):
                agents[v].buffer.push(Experience(obs[v], joint[v], r, next_obs[v], done, next_masks[v]))
            obs, masks = next_obs, next_masks
            rewards[k] += r
            tk = k * T + t + 1
            if tk % t_train == 0:
                ep_losses.extend(learn(a, cfg) for a in agents)
                updates += 1
            if tk % t_target == 0:
                for a in agents:
                    a.target = dqn.sync_target(a.params)
        rewards[k] /= T
        if ep_losses:
            losses[k] = float(np.mean(ep_losses))
        if progress is not None:
            progress(k, rewards[k], losses[k], eps)
    return TrainResult(agents, eps, rewards, losses, cfg, sc, experiences=cfg.episodes * T * m, updates=updates)


@dataclass
class InferenceEpisode:
    k: int
    metrics: EpisodeMetrics
    assignment: object
    objective: int
    state: object = field(repr=False, default=None)


def infer(params: list, scenario: ScenarioConfig, episodes: int, epsilon: float = 0.02,
          greedy: bool = False, seed: int | None = None, start: int = INFER_OFFSET,
          keep_state: bool = False) -> list:
    """Run the trained policies on fresh episodes (new drops, channels and packets)."""
    env = VehicularEnv(scenario, seed=scenario.seed if seed is None else seed)
    m = scenario.network.m
    if len(params) != m:
        raise ValueError(f"need {m} parameter sets, got {len(params)}")
    for p in params:
        if p.obs_len != env.obs_len or p.action_count != env.n_actions:
            raise ValueError(
                f"parameters expect obs {p.obs_len} / actions {p.action_count}, "
                f"environment has {env.obs_len} / {env.n_actions}"
            )
    eps = 0.0 if greedy else epsilon
    rngs = [agent_rng(env.seed, v, _AGENT_TAG + 1) for v in range(m)]
    out = []
    for j in range(episodes):
        k = start + j
        env.set_fingerprint(1.0, eps)
        st, obs = env.reset(k)
        while not st.done:
            joint = [select_action(params[v], obs[v], eps, env.action_mask(v), rngs[v]) for v in range(m)]
            st, obs, _, _ = env.step(joint)
        a = env.induced_assignment()
        out.append(InferenceEpisode(k, env_metrics(st), a, int(a.y.sum()), st if keep_state else None))
    return out


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(result: TrainResult, directory) -> dict:
    """One parameter file per agent plus manifest.json (config, final epsilon, episode count)."""
    os.makedirs(directory, exist_ok=True)
    files = []
    for v, p in enumerate(result.params):
        name = f"agent{v}.qnet"
        dqn.save(p, os.path.join(directory, name))
        files.append(name)
    manifest = {
        "config": asdict(result.config),
        "config_hash": result.config.digest(),
        "network": result.scenario.network.name,
        "epsilon": result.epsilon,
        "episodes": result.config.episodes,
        "agents": files,
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_checkpoint(directory, obs_len: int | None = None, action_count: int | None = None):
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    params = [dqn.load(os.path.join(directory, f), obs_len, action_count) for f in manifest["agents"]]
    cfg = manifest["config"]
    cfg["hidden"] = tuple(cfg["hidden"])
    return params, manifest, TrainConfig(**cfg)
