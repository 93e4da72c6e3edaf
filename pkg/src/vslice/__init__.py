"""Vehicular network slicing: NOMA sidelink simulator, VRA problem, multi-agent
deep Q-learning and matching benchmarks."""

__version__ = "0.1.0"
