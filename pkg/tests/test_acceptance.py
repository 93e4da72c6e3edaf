"""End-to-end acceptance checks.

Each test records one PASS/FAIL line (printed again in the terminal
summary). The training-based criteria are slow: the whole module takes
roughly an hour on one CPU core.
"""
import filecmp
import math
import os
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from conftest import make_instance, record
from vslice import dqn
from vslice.baselines import KINDS, run_benchmark
from vslice.env import VehicularEnv, pair_reward
from vslice.harness import main
from vslice.harness.cli import small_graphs
from vslice.mis import mis_reduce, mis_size
from vslice.noma import interference, sinr
from vslice.oracle import brute_force_oracle
from vslice.replay import Experience, ReplayBuffer
from vslice.scenario import NETWORKS, ScenarioConfig, make_episode, network
from vslice.trainer import TrainConfig, anneal_epsilon, infer, train
from vslice.vra import Assignment, check_feasible, objective

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2, 3, 4)


# -- shared trained models -----------------------------------------------------


@pytest.fixture(scope="module")
def small_runs():
    """Default-hyperparameter training on (2,2,1,5), H=3000, five seeds."""
    return {s: train(TrainConfig(network="2,2,1,5", seed=s)) for s in SEEDS}


# -- 1 ---------------------------------------------------------------------------


def test_criterion_01_equation_examples():
    close = lambda a, b: math.isclose(a, b, rel_tol=1e-9, abs_tol=0.0) or a == b  # noqa: E731
    checks = {}

    # interference and SINR under SIC
    gains = np.array([2.0, 1.0, 3.0]).reshape(3, 1, 1)
    prof = np.array([(1.0, 0.0), (1.0, 0.0), (4.0, 9.0)]).reshape(3, 1, 2)
    checks["interference"] = close(interference(0, 0, 0, prof, gains), 1.0)
    checks["sinr with I=1"] = close(sinr(0, 0, 0, 0, prof, gains), 1.0)
    solo = np.array([(1.0, 0.0)]).reshape(1, 1, 2)
    checks["sinr alone"] = close(sinr(0, 0, 0, 0, solo, gains[:1]), 2.0)
    checks["silent sinr"] = sinr(0, 0, 0, 1, solo, gains[:1]) == 0.0

    # objective
    inst = make_instance(np.ones((1, 2, 2, 1)), [(1, 1), (1, 1)])
    a = Assignment.zeros(inst)
    checks["objective zero"] = objective(a) == 0
    a.y[0, 0, :] = 1
    checks["objective one pair each slice"] = objective(a) == 2
    a.y[:] = 0
    a.y[:, :, 1] = 1
    checks["objective two safety each"] = objective(a) == 4

    # pair reward
    checks["pair reward shaping"] = close(pair_reward(3.0, 1e6, 0.02, 2e5), 0.2)
    checks["pair reward crossing"] = pair_reward(3.0, 1e6, 0.02, 2e5, crossed=True) == 1.0

    # annealing
    cfg = TrainConfig(episodes=3000)
    checks["anneal start"] = anneal_epsilon(0, cfg) == 1.0
    checks["anneal mid"] = close(anneal_epsilon(1200, cfg), 0.51)
    checks["anneal end"] = anneal_epsilon(2400, cfg) == 0.02

    # sampling probability
    buf = ReplayBuffer(4, 2)
    for x in range(2):
        buf.push(Experience(np.zeros(2), 0, 0.0, np.zeros(2)))
    buf.update_priorities([0, 1], [0.999, 0.0])
    checks["priority 0.999"] = close(buf.priority_of(0), 1.0)
    checks["priority mu"] = close(buf.priority_of(1), 0.001)
    checks["sampling probability"] = close(buf.probabilities()[0], 1 / (1 + 0.001 ** 0.6))
    buf.update_priorities([1], [-2.0])
    checks["priority |delta|"] = close(buf.priority_of(1), 2.001)

    # TD error
    p = dqn.init(3, 2, seed=0, hidden=(4,))
    for arr in p.arrays.values():
        arr[...] = 0
    b = dqn.Batch(np.ones((1, 3)), np.array([0]), np.array([1.0]), np.ones((1, 3)), np.array([False]))
    loss, delta = dqn.td_loss(b, p, p, 0.0)
    checks["td error"] = close(delta[0], 1.0) and close(loss, 1.0)

    failed = [k for k, ok in checks.items() if not ok]
    record(1, not failed, f"{len(checks) - len(failed)}/{len(checks)} examples" + (f"; failed {failed}" if failed else ""))
    assert not failed


# -- 2 ---------------------------------------------------------------------------


def test_criterion_02_mis_equivalence():
    graphs = list(small_graphs(5))
    bad = []
    for g in graphs:
        inst = mis_reduce(g)
        best, a = brute_force_oracle(inst)
        if best != mis_size(g) or check_feasible(inst, a):
            bad.append(sorted(g.edges()))
    record(2, not bad and len(graphs) == 30, f"{len(graphs) - len(bad)}/{len(graphs)} connected graphs on 2..5 vertices")
    assert len(graphs) == 30
    assert not bad


# -- 3 ---------------------------------------------------------------------------


MICRO = ScenarioConfig(network=network("2,2,1,3"), power_levels_dbm=(-100.0, 10.0, 20.0, 30.0),
                       coverage_levels_m=(0.0, 200.0, 800.0, 1400.0))


def test_criterion_03_oracle_dominance():
    res = train(TrainConfig(network="2,2,1,3", episodes=300, seed=0), MICRO)
    episodes = infer(res.params, res.scenario, 50, keep_state=True)
    violations = []
    margins = []
    for e in episodes:
        inst = e.state.episode.instance(res.scenario)
        best, a = brute_force_oracle(inst)
        assert check_feasible(inst, a) == []
        scores = {"DQL": e.objective}
        for j, kind in enumerate(KINDS):
            scores[kind] = run_benchmark(kind, inst, np.random.default_rng([e.k, j]))[1]
        for name, s in scores.items():
            if s > best:
                violations.append((e.k, name, s, best))
        margins.append(best - max(scores.values()))
    record(3, not violations,
           f"50 micro instances, {len(violations)} violations, mean oracle margin {np.mean(margins):.2f}")
    assert not violations


# -- 4 ---------------------------------------------------------------------------


def test_criterion_04_training_improves(small_runs):
    H = 3000
    tenth = H // 10
    up, down, lines = 0, 0, []
    for s, r in small_runs.items():
        ma = r.reward_ma(200)
        first, last = ma[:tenth].mean(), ma[-tenth:].mean()
        l_first, l_last = np.nanmean(r.loss[:tenth]), np.nanmean(r.loss[-tenth:])
        up += last > first
        down += l_last < l_first
        lines.append(f"seed {s}: MA {first:.3f}->{last:.3f}, loss {l_first:.3f}->{l_last:.3f}")
    ok = up >= 4 and down == len(SEEDS)
    record(4, ok, f"reward rose in {up}/5 seeds, loss fell in {down}/5 seeds; " + "; ".join(lines))
    assert up >= 4
    assert down == len(SEEDS)


# -- 5 ---------------------------------------------------------------------------


def test_criterion_05_optimality_gap(small_runs):
    res = small_runs[0]
    episodes = infer(res.params, res.scenario, 100, epsilon=res.epsilon, keep_state=True)
    dql = np.array([e.objective for e in episodes], float)
    opt = np.array([brute_force_oracle(e.state.episode.instance(res.scenario))[0] for e in episodes], float)
    ratio = dql.mean() / opt.mean()
    record(5, ratio >= 0.5, f"DQL {dql.mean():.2f} vs oracle {opt.mean():.2f} -> {100 * ratio:.1f}% (bar 50%)")
    assert np.all(dql <= opt)
    assert ratio >= 0.5


# -- 6 ---------------------------------------------------------------------------


def test_criterion_06_benchmark_ordering():
    sc = ScenarioConfig(network=NETWORKS["5,4,2,10"])
    obj = {k: np.zeros(200) for k in KINDS}
    for k in range(200):
        inst = make_episode(sc, k).instance(sc)
        for j, kind in enumerate(KINDS):
            obj[kind][k] = run_benchmark(kind, inst, np.random.default_rng([k, j]))[1]
    diff = obj["NOMA-MP"] - obj["NOMA-RP"]
    wins, losses = int((diff > 0).sum()), int((diff < 0).sum())
    p = stats.binomtest(wins, wins + losses, 0.5, alternative="two-sided").pvalue
    means = {k: v.mean() for k, v in obj.items()}
    ok = wins > losses and p < 0.05 and means["NOMA-MP"] >= means["OMA-MP"]
    record(6, ok, f"means OMA-MP {means['OMA-MP']:.2f}, NOMA-MP {means['NOMA-MP']:.2f}, "
                  f"NOMA-RP {means['NOMA-RP']:.2f}; sign test {wins}:{losses} p={p:.2g}")
    assert wins > losses and p < 0.05
    assert means["NOMA-MP"] >= means["OMA-MP"]


# -- 7 ---------------------------------------------------------------------------


def test_criterion_07_replay_distribution():
    buf = ReplayBuffer(16, 2)
    for x in range(8):
        buf.push(Experience(np.full(2, x), 0, 0.0, np.zeros(2)))
    buf.update_priorities(range(8), [0.0, 0.2, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0])
    rng = np.random.default_rng(7)
    pvals = []
    for stage in range(2):
        probs = buf.probabilities()
        _, serials, _ = buf.sample(100_000, rng)
        counts = np.bincount(serials, minlength=8)
        pvals.append(stats.chisquare(counts, probs * 100_000).pvalue)
        if stage == 0:
            buf.update_priorities([0, 7], [4.0, 0.1])
    ok = all(p > 0.01 for p in pvals)
    record(7, ok, f"chi-square p before {pvals[0]:.3f}, after {pvals[1]:.3f}")
    assert ok


# -- 8 ---------------------------------------------------------------------------


def _min_preactivation(p, obs):
    h, low = obs, np.inf
    for k in range(p.depth):
        z = h @ p[f"W{k}"] + p[f"b{k}"]
        low = min(low, float(np.abs(z).min()))
        h = np.maximum(z, 0.0)
    return low


def _grad_error(rng):
    d, A, B = int(rng.integers(3, 33)), int(rng.integers(2, 17)), int(rng.integers(1, 9))
    hidden = tuple(int(h) for h in rng.integers(3, 13, size=int(rng.integers(1, 4))))
    target = dqn.init(d, A, int(rng.integers(1 << 30)), hidden)
    mask = rng.random((B, A)) < 0.7
    mask[:, 0] = True
    batch = dqn.Batch(rng.normal(size=(B, d)), rng.integers(0, A, B), rng.normal(size=B),
                      rng.normal(size=(B, d)), rng.random(B) < 0.3, mask)
    # random biases, redrawn until no ReLU input sits on the kink (the loss is not differentiable there)
    while True:
        p = dqn.init(d, A, int(rng.integers(1 << 30)), hidden)
        for k in range(p.depth):
            p[f"b{k}"][:] = rng.normal(0, 0.5, p[f"b{k}"].shape)
        if _min_preactivation(p, batch.obs) > 1e-2:
            break
    w = rng.uniform(0.1, 1.0, B)
    gamma = float(rng.uniform(0, 1))
    _, _, g = dqn.td_loss(batch, p, target, gamma, w, grads=True)
    loss = lambda: dqn.td_loss(batch, p, target, gamma, w)[0]  # noqa: E731
    # five-point stencil: O(h^4) truncation keeps roundoff small next to 1e-4
    h = 1e-4
    worst = 0.0
    for name, arr in p.arrays.items():
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            f = []
            for step in (2, 1, -1, -2):
                arr[idx] = old + step * h
                f.append(loss())
            arr[idx] = old
            num = (-f[0] + 8 * f[1] - 8 * f[2] + f[3]) / (12 * h)
            ana = g[name][idx]
            scale = max(abs(num), abs(ana))
            if scale > 1e-8:
                worst = max(worst, abs(num - ana) / scale)
    return worst


def test_criterion_08_gradient_check():
    rng = np.random.default_rng(8)
    errors = [_grad_error(rng) for _ in range(20)]
    ok = max(errors) < 1e-4
    record(8, ok, f"20 configurations, max relative error {max(errors):.2e}")
    assert ok


# -- 9 ---------------------------------------------------------------------------


def test_criterion_09_feasibility_closure():
    names = ("2,2,1,5", "5,4,2,10", "6,4,4,20")
    envs = [VehicularEnv(ScenarioConfig(network=NETWORKS[n])) for n in names]
    rng = np.random.default_rng(9)
    bad = 0
    for j in range(10_000):
        env = envs[j % 3]
        st, _ = env.reset(k=j)
        while not st.done:
            acts = [int(rng.choice(np.flatnonzero(env.action_mask(v)))) for v in range(env.net.m)]
            st, _, _, _ = env.step(acts)
        bad += bool(check_feasible(env.instance(), env.induced_assignment()))
    record(9, bad == 0, f"10000 random-policy episodes over {', '.join(names)}: {bad} infeasible")
    assert bad == 0


# -- 10 --------------------------------------------------------------------------


def test_criterion_10_determinism(tmp_path):
    ini = tmp_path / "small.ini"
    ini.write_text("[train]\nepisodes = 20\nhidden = 32,32\nn_samples = 128\n")
    commands = {
        "bench": ["bench", "--episodes", "5", "--seeds", "0,1"],
        "oracle": ["oracle", "--episodes", "3"],
        "sweep": ["sweep", "--vary", "safety-size", "--values", "2,6", "--algorithms", "dql,noma-mp,oma-mp",
                  "--episodes", "2", "--train-episodes", "10", "--config", str(ini), "--svg"],
        "train": ["train", "--config", str(ini), "--eval-episodes", "3"],
        "mis-check": ["mis-check", "--max-vertices", "4"],
    }
    differing = []
    for name, argv in commands.items():
        dirs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{name}-{rep}"
            assert main(argv + ["--out", str(out)]) == 0, name
            dirs.append(out)
        files = sorted(os.listdir(dirs[0]))
        assert any(f.endswith(".csv") for f in files)
        _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], files, shallow=False)
        differing += [f"{name}/{f}" for f in mismatch + errors]
    ck = tmp_path / "train-a"
    for rep in ("a", "b"):
        assert main(["infer", "--checkpoint", str(ck), "--episodes", "4", "--out", str(tmp_path / f"infer-{rep}")]) == 0
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "infer-a", tmp_path / "infer-b",
                                           sorted(os.listdir(tmp_path / "infer-a")), shallow=False)
    differing += [f"infer/{f}" for f in mismatch + errors]
    record(10, not differing, f"{len(commands) + 1} subcommands rerun, differing files: {differing or 'none'}")
    assert not differing


# -- 11 --------------------------------------------------------------------------


def test_criterion_11_sojourn():
    res = train(TrainConfig(network="6,4,4,20", seed=0))
    episodes = infer(res.params, res.scenario, 100, epsilon=res.epsilon)
    soj = np.array([e.metrics.mean_sojourn_pct for e in episodes])
    mean = float(np.nanmean(soj))
    ok = 10.0 <= mean <= 35.0
    record(11, ok, f"mean receiver sojourn {mean:.1f}% over 100 inference episodes (band 10-35%)")
    assert ok
