"""Discrete-event CSMA/CA network simulator with a learning-driven station.

One station in a legacy Wi-Fi deployment tunes its carrier-sense threshold,
receiver-sensitivity threshold, and transmit power online (DQN, DSC, or a
static policy) to balance airtime fairness against QoS targets.
"""

__version__ = "0.1.0"
