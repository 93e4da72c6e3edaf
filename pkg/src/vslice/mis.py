"""Maximum independent set as a restricted VRA instance.

Vertices become transmitters and edges become time-slots. A transmitter
sees a unit channel exactly in the slots of its incident edges, needs
``degree`` units of bits, and RBs are orthogonal (OMA). One unit is the
bits carried by a unit-SINR slot, beta * tau * log2(2) = 1 with beta = tau = 1.
"""
from __future__ import annotations

import itertools

import numpy as np

from .noma import SAFETY
from .vra import PacketSpec, VraInstance


def _edges_and_vertices(graph):
    if hasattr(graph, "edges") and callable(graph.edges):
        nodes = sorted(graph.nodes())
        edges = list(graph.edges())
    else:
        edges = [tuple(e) for e in graph]
        nodes = sorted({u for e in edges for u in e})
    index = {u: k for k, u in enumerate(nodes)}
    edges = [(index[a], index[b]) for a, b in edges]
    if any(a == b for a, b in edges) or len({frozenset(e) for e in edges}) != len(edges):
        raise ValueError("graph must be simple (no loops or parallel edges)")
    return len(nodes), edges


def mis_reduce(graph) -> VraInstance:
    """Accepts a networkx graph or an edge list."""
    k, edges = _edges_and_vertices(graph)
    if not edges:
        raise ValueError("graph needs at least one edge")
    degree = np.zeros(k, dtype=int)
    gains = np.zeros((len(edges), k, 1, 1))
    for t, (a, b) in enumerate(edges):
        gains[t, a, 0, 0] = gains[t, b, 0, 0] = 1.0
        degree[a] += 1
        degree[b] += 1
    if np.any(degree == 0):
        raise ValueError("isolated vertices are not representable (zero-size packet)")
    T = len(edges)
    packets = []
    for v in range(k):
        packets.append(PacketSpec(v, "n", 1.0, 1, T))  # unused: safety slice only
        packets.append(PacketSpec(v, "s", float(degree[v]), 1, T))
    return VraInstance(
        m=k, n=1, F=1, T=T, tau_s=1.0, beta_hz=1.0,
        p_max_w=np.ones(k), power_levels_w=(1.0,), coverage_levels_m=(),
        packets=tuple(packets), gains=gains, rx_dist=None, oma=True, slices=(SAFETY,),
    )


def mis_size(graph) -> int:
    """Exhaustive maximum independent set size."""
    k, edges = _edges_and_vertices(graph)
    adj = [set() for _ in range(k)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    for size in range(k, 0, -1):
        for subset in itertools.combinations(range(k), size):
            s = set(subset)
            if all(not (adj[u] & s) for u in subset):
                return size
    return 0
