import numpy as np
import pytest

from conftest import make_instance
from vslice.baselines import (
    KINDS, Matching, initial_matching, run_benchmark, simulate, swap_improve,
)
from vslice.noma import NON_SAFETY, SAFETY
from vslice.scenario import NETWORKS, ScenarioConfig, make_episode
from vslice.vra import check_feasible


def test_single_transmitter_takes_best_frequencies():
    gains = np.array([1.0, 5.0, 2.0]).reshape(1, 1, 1, 3)
    inst = make_instance(gains, [(1.0, 1.0)])
    mt = initial_matching(inst, "noma", np.random.default_rng(0))
    assert mt.freq[0, 0, SAFETY] == 1
    assert mt.freq[0, 0, NON_SAFETY] == 2  # own RB already holds the safety slice


def test_noma_lets_transmitters_share():
    inst = make_instance(np.ones((1, 2, 1, 1)), [(1.0, 1.0), (1.0, 1.0)])
    mt = initial_matching(inst, "noma", np.random.default_rng(0))
    assert np.all(mt.freq[:, :, SAFETY] == 0)
    assert np.all(mt.freq[:, :, NON_SAFETY] == -1)  # F=1: safety holds the only RB


def test_oma_exclusive_per_slot():
    rng = np.random.default_rng(1)
    inst = make_instance(rng.exponential(1, (4, 3, 2, 2)), [(1.0, 1.0)] * 3, oma=True)
    mt = initial_matching(inst, "oma", rng)
    for t in range(4):
        used = mt.freq[:, t, :][mt.freq[:, t, :] >= 0]
        assert len(used) == len(set(used.tolist()))
    assert mt.unassigned


def _crossed_pair():
    """Two transmitters whose greedy RBs are swapped relative to the best ones."""
    gains = np.zeros((1, 2, 1, 2))
    gains[0, 0, 0] = [1.0, 10.0]
    gains[0, 1, 0] = [10.0, 1.0]
    inst = make_instance(gains, [(1.0, 2.0), (1.0, 2.0)], oma=True).with_(slices=(SAFETY,))
    freq = np.full((2, 1, 2), -1)
    freq[0, 0, SAFETY], freq[1, 0, SAFETY] = 0, 1
    mt = Matching(np.full(2, np.inf), np.zeros(2, int), freq, np.ones((2, 1, 2)), True)
    return inst, mt


def test_constructed_swap_improves():
    inst, mt = _crossed_pair()
    assert simulate(inst, mt).score(inst.sigma)[0] == 0
    hist = []
    out = swap_improve(mt, inst, history=hist)
    assert out.freq[0, 0, SAFETY] == 1 and out.freq[1, 0, SAFETY] == 0
    assert hist[0][0] == 0 and hist[-1][0] == 2
    assert mt.freq[0, 0, SAFETY] == 0  # input untouched


def test_swap_reaches_fixed_point_and_history_increases():
    cfg = ScenarioConfig(network=NETWORKS["5,4,2,10"])
    inst = make_episode(cfg, 2).instance(cfg)
    mt = initial_matching(inst, "noma", np.random.default_rng(2))
    hist = []
    once = swap_improve(mt, inst, history=hist)
    assert all(a < b for a, b in zip(hist, hist[1:]))
    again = []
    twice = swap_improve(once, inst, history=again)
    assert len(again) == 1 and np.array_equal(once.freq, twice.freq)


def test_swap_keeps_occupied_rbs_under_oma():
    cfg = ScenarioConfig(network=NETWORKS["5,4,2,10"])
    inst = make_episode(cfg, 3).instance(cfg, oma=True)
    mt = initial_matching(inst, "oma", np.random.default_rng(0))
    out = swap_improve(mt, inst)
    for t in range(inst.T):
        a = sorted(mt.freq[:, t, :][mt.freq[:, t, :] >= 0].tolist())
        b = sorted(out.freq[:, t, :][out.freq[:, t, :] >= 0].tolist())
        assert a == b


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("k", range(3))
def test_benchmarks_feasible_on_scenarios(kind, k):
    cfg = ScenarioConfig(network=NETWORKS["5,4,2,10"])
    inst = make_episode(cfg, k).instance(cfg)
    a, obj, mt, out = run_benchmark(kind, inst, np.random.default_rng(k), details=True)
    assert check_feasible(inst.with_(oma=kind == "OMA-MP"), a) == []
    assert obj == int(out.delivered.sum())
    assert mt.oma == (kind == "OMA-MP")


def test_random_power_uses_grid_levels():
    cfg = ScenarioConfig(network=NETWORKS["5,4,2,10"])
    inst = make_episode(cfg, 0).instance(cfg)
    mt = initial_matching(inst, "noma", np.random.default_rng(0), power="random")
    assert set(np.unique(mt.power_w)) <= set(inst.power_levels_w)
    assert len(np.unique(mt.power_w)) > 1
    mp = initial_matching(inst, "noma", np.random.default_rng(0))
    assert np.all(mp.power_w == inst.p_max_w[0])


def test_unknown_kind():
    inst = make_instance(np.ones((1, 1, 1, 1)), [(1.0, 1.0)])
    with pytest.raises(ValueError):
        run_benchmark("GREEDY", inst, np.random.default_rng(0))
