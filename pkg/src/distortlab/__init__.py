"""Federated-learning privacy/utility laboratory.

Simulates FedAvg under data-distortion defences, attacks the shared updates
with gradient inversion, and checks Bayesian privacy/utility bounds exactly
on small finite worlds.
"""

__version__ = "0.1.0"
