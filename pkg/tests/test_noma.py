import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vslice.noma import achievable_bits, interference, interference_tensor, sinr, sinr_tensor


def _setup(gs, powers):
    """One receiver, one frequency; gs[v] gains, powers[v] = (p_n, p_s)."""
    gains = np.array(gs, float).reshape(-1, 1, 1)
    profile = np.array(powers, float).reshape(-1, 1, 2)
    return profile, gains


def test_single_transmitter_no_interference():
    profile, gains = _setup([2.0], [(1.0, 0.0)])
    assert interference(0, 0, 0, profile, gains) == 0.0


def test_weaker_interferes_stronger_cancelled():
    profile, gains = _setup([2.0, 1.0, 3.0], [(1.0, 0.0), (1.0, 0.0), (5.0, 7.0)])
    assert interference(0, 0, 0, profile, gains) == 1.0
    assert sinr(0, 0, 0, 0, profile, gains) == 1.0


def test_tie_excluded():
    profile, gains = _setup([2.0, 2.0], [(1.0, 0.0), (4.0, 4.0)])
    assert interference(0, 0, 0, profile, gains) == 0.0


def test_sinr_examples():
    profile, gains = _setup([2.0], [(1.0, 0.0)])
    assert sinr(0, 0, 0, 0, profile, gains) == 2.0
    assert sinr(0, 0, 0, 1, profile, gains) == 0.0


def test_bits_examples():
    assert achievable_bits(3.0, 1e6, 0.02) == pytest.approx(40_000.0, rel=1e-12)
    assert achievable_bits(0.0, 1e6, 0.02) == 0.0
    assert achievable_bits(1.0, 1.0, 1.0) == 1.0
    with pytest.raises(ValueError):
        achievable_bits(-0.1, 1e6, 0.02)


def test_bits_increasing_and_concave():
    s = np.linspace(0, 50, 2001)
    b = achievable_bits(s, 1e6, 0.01)
    d1 = np.diff(b)
    assert np.all(d1 > 0)
    assert np.all(np.diff(d1) < 0)


def test_sic_monotonicity():
    profile, gains = _setup([2.0, 0.5], [(1.0, 0.0), (0.0, 0.0)])
    base = sinr(0, 0, 0, 0, profile, gains)
    profile[1, 0, 0] = 1.0
    assert sinr(0, 0, 0, 0, profile, gains) < base
    profile2, gains2 = _setup([2.0, 5.0], [(1.0, 0.0), (3.0, 0.0)])
    assert sinr(0, 0, 0, 0, profile2, gains2) == base


def test_sinr_linear_in_own_power():
    profile, gains = _setup([2.0, 1.0], [(1.0, 0.0), (1.0, 1.0)])
    a = sinr(0, 0, 0, 0, profile, gains)
    profile[0, 0, 0] = 3.0
    assert sinr(0, 0, 0, 0, profile, gains) == pytest.approx(3 * a)


def _naive_sinr(profile, gains):
    m, n, F = gains.shape
    out = np.zeros((m, n, F, 2))
    for v in range(m):
        for w in range(n):
            for f in range(F):
                I = sum(gains[u, w, f] * profile[u, f].sum() for u in range(m) if gains[v, w, f] > gains[u, w, f])
                for i in (0, 1):
                    out[v, w, f, i] = profile[v, f, i] * gains[v, w, f] / (1 + I)
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(0, 10 ** 6))
def test_tensor_matches_loops(m, n, F, seed):
    rng = np.random.default_rng(seed)
    gains = rng.exponential(1.0, (m, n, F))
    gains[rng.random((m, n, F)) < 0.2] = 1.0  # force some ties
    profile = rng.uniform(0, 1, (m, F, 2)) * (rng.random((m, F, 2)) < 0.6)
    assert np.allclose(sinr_tensor(profile, gains), _naive_sinr(profile, gains), rtol=1e-12, atol=0)
    for v in range(m):
        for w in range(n):
            for f in range(F):
                assert math.isclose(interference_tensor(profile, gains)[v, w, f],
                                    interference(v, w, f, profile, gains), rel_tol=1e-12, abs_tol=1e-15)
