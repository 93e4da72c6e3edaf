"""Experiment execution: evaluate algorithms on shared episodes, sweep grids."""
from __future__ import annotations

import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..baselines import run_benchmark
from ..metrics import EpisodeMetrics, episode_metrics
from ..oracle import brute_force_oracle
from ..scenario import ScenarioConfig, make_episode
from ..trainer import INFER_OFFSET, TrainConfig, infer, train
from .config import SWEEP_DEFAULTS, ExperimentConfig

WORKERS_ENV = "VSLICE_WORKERS"
BENCH_NAMES = {"oma-mp": "OMA-MP", "noma-mp": "NOMA-MP", "noma-rp": "NOMA-RP"}


@dataclass
class Row:
    algorithm: str
    sweep_value: float | None
    seed: int
    episode: int
    objective: int
    metrics: EpisodeMetrics


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def assignment_metrics(a, reward=float("nan")) -> EpisodeMetrics:
    """Metrics from an Assignment alone: targets and coverage come from x."""
    targets = a.x.astype(bool).any(axis=(2, 3))
    cov = a.x.astype(bool).any(axis=(2, 4)).transpose(2, 0, 1)
    return episode_metrics(a.y.astype(bool), targets, cov, reward)


def benchmark_rows(kind: str, sc: ScenarioConfig, seed: int, episodes: int, sweep_value=None) -> list:
    name = BENCH_NAMES[kind]
    rows = []
    for j in range(episodes):
        k = INFER_OFFSET + j
        inst = make_episode(sc, k, seed).instance(sc)
        rng = np.random.default_rng([seed, k, list(BENCH_NAMES).index(kind)])
        a, obj, _, out = run_benchmark(name, inst, rng, details=True)
        targets = out.targeted.any(axis=(2, 3))
        rows.append(Row(kind, sweep_value, seed, k, obj, episode_metrics(a.y.astype(bool), targets, out.coverage_log)))
    return rows


def oracle_rows(sc: ScenarioConfig, seed: int, episodes: int, cap: int, sweep_value=None) -> list:
    rows = []
    for j in range(episodes):
        k = INFER_OFFSET + j
        inst = make_episode(sc, k, seed).instance(sc)
        best, a = brute_force_oracle(inst, cap=cap)
        rows.append(Row("oracle", sweep_value, seed, k, best, assignment_metrics(a)))
    return rows


def dql_rows(params, sc: ScenarioConfig, seed: int, episodes: int, epsilon: float, greedy: bool,
             sweep_value=None) -> list:
    eps = infer(params, sc, episodes, epsilon=epsilon, greedy=greedy, seed=seed)
    return [Row("dql", sweep_value, seed, e.k, e.objective, e.metrics) for e in eps]


def evaluate(cfg: ExperimentConfig, sc: ScenarioConfig, seed: int, sweep_value=None, trained=None) -> tuple:
    """All configured algorithms on the same evaluation episodes.

    ``trained`` is a TrainResult to reuse; otherwise dql trains first.
    Returns (rows, train result or None).
    """
    sc = replace(sc, seed=seed)
    rows = []
    result = trained
    for alg in cfg.algorithms:
        if alg == "dql":
            if result is None:
                result = train(replace(cfg.train, seed=seed), sc)
            rows += dql_rows(result.params, sc, seed, cfg.episodes, result.epsilon, cfg.greedy, sweep_value)
        elif alg == "oracle":
            rows += oracle_rows(sc, seed, cfg.episodes, cfg.oracle_cap, sweep_value)
        else:
            rows += benchmark_rows(alg, sc, seed, cfg.episodes, sweep_value)
    return rows, result


_UNIT = re.compile(r"^\s*([0-9.eE+-]*)\s*([A-Za-z]*)\s*$")
_UNIT_BITS = {"b": 1.0, "bit": 1.0, "B": 8.0, "kbit": 1e3, "Mbit": 1e6, "kB": 8e3, "MB": 8e6, "slot": 1.0, "": 1.0}


def parse_unit(text: str) -> float:
    """'300B' -> 2400.0 bits, '1Mbit' -> 1e6, 'slot' -> 1."""
    m = _UNIT.match(text or "")
    if not m or m.group(2) not in _UNIT_BITS:
        raise ValueError(f"unknown unit {text!r}")
    scale = float(m.group(1)) if m.group(1) else 1.0
    return scale * _UNIT_BITS[m.group(2)]


def sweep_scenario(sc: ScenarioConfig, var: str, value: float, unit: float) -> ScenarioConfig:
    if var == "safety-size":
        return replace(sc, safety_bits=value * unit)
    if var == "deadline":
        d = int(round(value * unit))
        return replace(sc, deadline_range=(d, d))
    if var == "nonsafety-max":
        lo = sc.nonsafety_bits_range[0]
        return replace(sc, nonsafety_bits_range=(min(lo, value * unit), value * unit))
    raise ValueError(f"unknown sweep variable {var!r}")


def _sweep_point(args) -> list:
    cfg, var, value, unit, seed = args
    sc = sweep_scenario(cfg.scenario, var, value, unit)
    rows, _ = evaluate(cfg, sc, seed, sweep_value=value)
    return rows


def run_sweep(cfg: ExperimentConfig) -> list:
    """Fan (value, seed) points out over a worker pool; rows come back in (value, seed) order."""
    var = cfg.sweep
    values, unit_text = SWEEP_DEFAULTS[var]
    values = cfg.sweep_values or values
    unit = parse_unit(cfg.sweep_unit or unit_text)
    jobs = [(cfg, var, float(v), unit, int(s)) for v in values for s in cfg.seeds]
    workers = worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sweep_point, jobs))
    else:
        parts = [_sweep_point(j) for j in jobs]
    return [r for part in parts for r in part]


def train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    return replace(cfg.train, network=cfg.network, seed=seed)
