import numpy as np
import pytest

from vslice import dqn

SMALL = (12, 9)


def _batch(rng, B, d, A, done=None, mask=None):
    return dqn.Batch(rng.normal(size=(B, d)), rng.integers(0, A, B), rng.normal(size=B),
                     rng.normal(size=(B, d)), np.zeros(B, bool) if done is None else done, mask)


def test_init_deterministic_and_shaped():
    a = dqn.init(17, 256, seed=3)
    b = dqn.init(17, 256, seed=3)
    assert a.checksum() == b.checksum()
    assert a.checksum() != dqn.init(17, 256, seed=4).checksum()
    assert a["W0"].shape == (17, 500) and a["W2"].shape == (350, 260)
    assert a["Wa"].shape == (260, 256) and a["Wv"].shape == (260, 1)
    assert all(np.all(a[f"b{k}"] == 0) for k in range(3))
    assert all(v.dtype == np.float64 for v in a.arrays.values())


def test_he_variance():
    p = dqn.init(17, 256, seed=0)
    for name, fan_in in (("W1", 500), ("W2", 350), ("Wa", 260)):
        assert p[name].var() == pytest.approx(2.0 / fan_in, rel=0.1)


def test_dueling_identities():
    p = dqn.init(6, 5, seed=1, hidden=SMALL)
    obs = np.random.default_rng(0).normal(size=(4, 6))
    q = dqn.forward(p, obs)
    val, adv = dqn.value_and_advantage(p, obs)
    assert np.allclose(q, val[:, None] + adv - adv.mean(axis=1, keepdims=True))
    assert np.allclose(q.mean(axis=1), val)
    assert np.allclose(dqn.forward(p, obs[0]), q[0])


def test_zero_weights_give_zero_q():
    p = dqn.init(6, 5, seed=1, hidden=SMALL)
    for a in p.arrays.values():
        a[...] = 0
    assert np.all(dqn.forward(p, np.ones(6)) == 0)


def test_forward_rejects_wrong_width():
    p = dqn.init(6, 5, seed=1, hidden=SMALL)
    with pytest.raises(ValueError):
        dqn.forward(p, np.ones(7))


def test_loss_example_zero_gamma():
    p = dqn.init(3, 2, seed=0, hidden=(4,))
    for a in p.arrays.values():
        a[...] = 0
    batch = dqn.Batch(np.ones((1, 3)), np.array([0]), np.array([1.0]), np.ones((1, 3)), np.array([False]))
    loss, delta = dqn.td_loss(batch, p, p, gamma=0.0)
    assert loss == 1.0 and delta.tolist() == [1.0]


def test_targets_mask_and_done():
    rng = np.random.default_rng(0)
    p = dqn.init(4, 3, seed=0, hidden=(5,))
    b = _batch(rng, 3, 4, 3, done=np.array([False, True, False]))
    b.next_mask = np.array([[True, False, False]] * 3)
    y = dqn.td_targets(b, p, 0.5)
    q_next = dqn.forward(p, b.next_obs)
    assert y[0] == pytest.approx(b.reward[0] + 0.5 * q_next[0, 0])
    assert y[1] == b.reward[1]


def test_weighted_loss_normalized():
    rng = np.random.default_rng(2)
    p = dqn.init(4, 3, seed=0, hidden=(5,))
    b = _batch(rng, 4, 4, 3)
    w = np.array([1.0, 0.5, 0.25, 0.1])
    loss, delta = dqn.td_loss(b, p, p, 0.9, w)
    assert loss == pytest.approx(np.sum(w * delta ** 2) / w.sum())


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    p = dqn.init(5, 4, seed=2, hidden=(7, 6))
    target = dqn.init(5, 4, seed=9, hidden=(7, 6))
    b = _batch(rng, 6, 5, 4)
    w = rng.uniform(0.2, 1.0, 6)
    _, _, g = dqn.td_loss(b, p, target, 0.9, w, grads=True)
    h = 1e-6
    worst = 0.0
    for name, arr in p.arrays.items():
        for idx in list(np.ndindex(arr.shape))[:15]:
            old = arr[idx]
            arr[idx] = old + h
            up = dqn.td_loss(b, p, target, 0.9, w)[0]
            arr[idx] = old - h
            dn = dqn.td_loss(b, p, target, 0.9, w)[0]
            arr[idx] = old
            num = (up - dn) / (2 * h)
            worst = max(worst, abs(num - g[name][idx]) / max(1e-7, abs(num) + abs(g[name][idx])))
    assert worst < 1e-4


def test_adam_zero_gradient_is_noop():
    p = dqn.init(4, 3, seed=0, hidden=(5,))
    before = p.checksum()
    st = dqn.AdamState.for_params(p)
    dqn.adam_step(p, {k: np.zeros_like(a) for k, a in p.arrays.items()}, st)
    assert p.checksum() == before and st.step == 1


def test_adam_constant_gradient_moves_by_lr_sign():
    p = dqn.init(4, 3, seed=0, hidden=(5,))
    st = dqn.AdamState.for_params(p, lr=1e-3)
    g = {k: np.full_like(a, -2.0) for k, a in p.arrays.items()}
    for _ in range(200):
        prev = p.copy()
        dqn.adam_step(p, g, st)
    assert np.allclose(p["W0"] - prev["W0"], 1e-3, rtol=1e-4)


def test_adam_is_deterministic():
    runs = []
    for _ in range(2):
        p = dqn.init(4, 3, seed=0, hidden=(5,))
        st = dqn.AdamState.for_params(p, lr=1e-2)
        r = np.random.default_rng(1)
        for _ in range(20):
            dqn.adam_step(p, {k: r.normal(size=a.shape) for k, a in p.arrays.items()}, st)
        runs.append(p.checksum())
    assert runs[0] == runs[1]
    with pytest.raises(ValueError):
        dqn.adam_step(p, {k: np.zeros(1) for k in p.arrays}, st)


def test_target_is_frozen_copy():
    rng = np.random.default_rng(0)
    p = dqn.init(4, 3, seed=0, hidden=(5,))
    target = dqn.sync_target(p)
    frozen = target.checksum()
    st = dqn.AdamState.for_params(p, lr=1e-2)
    for _ in range(100):
        _, _, g = dqn.td_loss(_batch(rng, 8, 4, 3), p, target, 0.9, grads=True)
        dqn.adam_step(p, g, st)
    assert target.checksum() == frozen
    assert p.checksum() != frozen
    assert dqn.sync_target(p).checksum() == p.checksum()


def test_save_load_roundtrip(tmp_path):
    p = dqn.init(17, 256, seed=7, hidden=SMALL)
    path = tmp_path / "a.qnet"
    dqn.save(p, path)
    assert path.read_bytes()[:6] == b"VSQNET"
    q = dqn.load(path, 17, 256)
    assert q.checksum() == p.checksum() and q.names == p.names
    with pytest.raises(ValueError):
        dqn.load(path, obs_len=38)
    with pytest.raises(ValueError):
        dqn.load(path, action_count=512)
    bad = tmp_path / "bad.qnet"
    bad.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        dqn.load(bad)
    bad.write_bytes(b"nope")
    with pytest.raises(ValueError):
        dqn.load(bad)
