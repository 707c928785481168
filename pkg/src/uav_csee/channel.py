"""Deterministic channel power gains and their robust bounds.

Every function accepts a single planar position or a ``(k, 2)`` array of
positions and broadcasts accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DomainError

if TYPE_CHECKING:
    from .scenario import Scenario, Trajectory


def _hdist(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.linalg.norm(a - b, axis=-1)


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def a2g_gain(q_uav, q_ground, altitude: float, beta0: float):
    """Line-of-sight air-to-ground power gain ``beta0 / (d^2 + H^2)``."""
    d = _hdist(q_uav, q_ground)
    return _scalar_or_array(beta0 / (d**2 + altitude**2))


def g2g_mean_gain(q_a, q_b, beta0: float, eta: float):
    """Mean ground-to-ground Rayleigh power gain ``beta0 / d^eta``."""
    d = _hdist(q_a, q_b)
    if np.any(d == 0):
        raise DomainError("ground-to-ground gain undefined at zero distance")
    return _scalar_or_array(beta0 / d**eta)


def worst_case_sw_gain(scn: Scenario) -> float:
    """Largest mean source-to-warden gain over the warden's uncertainty disc."""
    d = float(_hdist(scn.q_src, scn.q_warden_est))
    if d <= scn.r_warden:
        raise DomainError("source lies inside the warden uncertainty disc")
    return scn.beta0 / (d - scn.r_warden) ** scn.eta


def worst_case_rw_gain(q_uav, scn: Scenario):
    """Smallest relay-to-warden gain over the warden's uncertainty disc."""
    d = _hdist(q_uav, scn.q_warden_est)
    return _scalar_or_array(scn.beta0 / ((d + scn.r_warden) ** 2 + scn.altitude**2))


def worst_case_re_gain(q_uav, scn: Scenario):
    """Largest relay-to-eavesdropper gain over the eavesdropper's uncertainty disc."""
    d = _hdist(q_uav, scn.q_eaves_est)
    gap = np.maximum(d - scn.r_eaves, 0.0)
    return _scalar_or_array(scn.beta0 / (gap**2 + scn.altitude**2))


@dataclass(frozen=True)
class GainSet:
    g_sr: np.ndarray
    g_rw_wc: np.ndarray
    g_rd: np.ndarray
    g_re_wc: np.ndarray
    g_sw_mean: float
    g_sw_wc: float


def gain_set(traj: Trajectory, scn: Scenario) -> GainSet:
    """All per-slot gains along ``traj`` (phase 1 slots then phase 2 slots)."""
    slots = traj.slots()
    p1, p2 = slots[: scn.n1], slots[scn.n1 :]
    return GainSet(
        g_sr=np.atleast_1d(a2g_gain(p1, scn.q_src, scn.altitude, scn.beta0)),
        g_rw_wc=np.atleast_1d(worst_case_rw_gain(p1, scn)),
        g_rd=np.atleast_1d(a2g_gain(p2, scn.q_dst, scn.altitude, scn.beta0)),
        g_re_wc=np.atleast_1d(worst_case_re_gain(p2, scn)),
        g_sw_mean=float(g2g_mean_gain(scn.q_src, scn.q_warden_est, scn.beta0, scn.eta)),
        g_sw_wc=worst_case_sw_gain(scn),
    )
