"""Data-driven safety verification of unknown dynamical systems.

Learns the dynamics from noisy samples by Gaussian-process regression,
abstracts them as an interval Markov decision process with sound transition
bounds, and computes per-region min/max safety probabilities by interval
value iteration.
"""

__version__ = "0.1.0"
