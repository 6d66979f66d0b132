"""Accountable, reconfigurable lattice agreement with a deterministic simulator."""

from .accountability import Accusation, EvidenceItem, verify_proof
from .lattice import Configuration, LatticeValue, ObjectValue, verify_maj
from .sim import Scenario, Trace, run

__all__ = [
    "Accusation",
    "Configuration",
    "EvidenceItem",
    "LatticeValue",
    "ObjectValue",
    "Scenario",
    "Trace",
    "run",
    "verify_maj",
    "verify_proof",
]
