"""Covert and secure UAV relay planning.

A UAV relays traffic from a ground source to a destination in two phases. During
phase 1 it jams a warden to keep the transmission covert. During phase 2 it
forwards the data while an eavesdropper listens. The package jointly optimizes
the phase split, the transmit powers and the flight path to maximize secure
bits delivered per joule.
"""

from .scenario import (
    PowerSchedule,
    Scenario,
    Solution,
    Trajectory,
    default_scenario,
    load_scenario,
    read_scenario,
    validate_solution,
)

__all__ = [
    "PowerSchedule",
    "Scenario",
    "Solution",
    "Trajectory",
    "default_scenario",
    "load_scenario",
    "read_scenario",
    "validate_solution",
]
