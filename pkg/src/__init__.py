"""
Relay-assisted cognitive OFDMA downlink simulator.
"""

__version__ = "0.1.0"
