"""Intrusion detection lab for simulated mobile ad hoc networks.

Simulates an AODV network under routing-layer attacks, turns per-node
activity into labelled feature vectors and trains/evaluates classifiers
on them.
"""

__version__ = "0.1.0"
