import numpy as np
import pytest

from vslice.vra import PacketSpec, VraInstance


def make_instance(gains, sigma, arrival=None, deadline=None, powers=(1.0,), p_max=None, oma=False,
                  rx_dist=None, coverages=(), beta=1.0, tau=1.0):
    """Hand-built instance; gains (T, m, n, F), sigma (m, 2) as [non-safety, safety]."""
    gains = np.asarray(gains, float)
    T, m, n, F = gains.shape
    arrival = [1] * m if arrival is None else arrival
    deadline = [T] * m if deadline is None else deadline
    packets = []
    for v in range(m):
        packets.append(PacketSpec(v, "n", float(sigma[v][0]), 1, T))
        packets.append(PacketSpec(v, "s", float(sigma[v][1]), int(arrival[v]), int(deadline[v])))
    return VraInstance(
        m=m, n=n, F=F, T=T, tau_s=tau, beta_hz=beta,
        p_max_w=np.full(m, max(powers) if p_max is None else p_max), power_levels_w=tuple(powers),
        coverage_levels_m=tuple(coverages), packets=tuple(packets), gains=gains, rx_dist=rx_dist, oma=oma,
    )


def random_micro(seed, m=2, n=2, F=1, T=3, oma=False):
    rng = np.random.default_rng(seed)
    gains = rng.exponential(2.0, (T, m, n, F))
    sigma = rng.uniform(0.5, 3.5, (m, 2))
    arrival = rng.integers(1, T + 1, m)
    deadline = [int(rng.integers(a, T + 1)) for a in arrival]
    return make_instance(gains, sigma, arrival, deadline, powers=(0.5, 2.0), oma=oma)


@pytest.fixture
def micro():
    return random_micro


ACCEPTANCE = []


def record(number, ok, detail):
    """Log one acceptance verdict; the summary hook prints them all at the end."""
    ACCEPTANCE.append((number, bool(ok), detail))
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
