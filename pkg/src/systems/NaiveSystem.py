"""
NaiveSystem.py
==============

Baseline 0: the no-relay downlink designed as if the CSIT were perfect.

Scheduling uses l * |Hhat|^2 in place of the outage-margin gain, so packets
are sized for the estimate and fail whenever the true channel falls short.
Everything else matches the equal-activity no-relay baseline.
"""

from src.systems.NoRsSystem import NoRsSystem
from src.System import SystemKind
from src.Topology import Topology


class NaiveSystem(NoRsSystem):
    outage_margin = False

    def __init__(self, topology: Topology) -> None:
        super().__init__(topology, variant="equal")
        self.kind = SystemKind.NAIVE
