"""Rotary-wing propulsion power, total flight energy and the C&SEE ratio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLegError, DomainError
from .scenario import D_MIN, PhasePlan, RotorParams, Scenario, Trajectory


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def propulsion_power_exact(speed, rotor: RotorParams):
    """Blade-profile + induced + parasite power of a rotary-wing UAV in level flight."""
    v = np.asarray(speed, dtype=float)
    if np.any(v < 0):
        raise DomainError("speed must be >= 0")
    blade = rotor.p0 * (1.0 + 3.0 * v**2 / rotor.u_tip**2)
    ratio = v**2 / (2.0 * rotor.v0**2)
    # sqrt(1 + r^2) - r rewritten as 1 / (sqrt(1 + r^2) + r) to avoid cancellation.
    induced = rotor.p1 * np.sqrt(1.0 / (np.sqrt(1.0 + ratio**2) + ratio))
    parasite = rotor.parasite_coeff * v**3
    return _out(blade + induced + parasite)


def propulsion_power_approx(speed, rotor: RotorParams):
    """High-speed surrogate: the induced term becomes ``p1 * v0 / v``."""
    v = np.asarray(speed, dtype=float)
    if np.any(v <= 0):
        raise DomainError("surrogate propulsion power needs speed > 0")
    blade = rotor.p0 * (1.0 + 3.0 * v**2 / rotor.u_tip**2)
    return _out(blade + rotor.p1 * rotor.v0 / v + rotor.parasite_coeff * v**3)


def _check_legs(d: np.ndarray, d_min: float) -> None:
    if np.any(d < d_min * (1.0 - 1e-6)):
        bad = int(np.argmin(d))
        raise DegenerateLegError(f"leg {bad + 1} has length {d[bad]:.3g} m < d_min = {d_min:g} m")


def e_sum(traj: Trajectory, plan: PhasePlan, rotor: RotorParams, n1: int,
          d_min: float = D_MIN) -> float:
    """Total flight energy (J) under the surrogate power model."""
    d = traj.legs()
    _check_legs(d, d_min)
    e1 = plan.delta1 * np.sum(propulsion_power_approx(d[:n1] / plan.delta1, rotor))
    e2 = plan.delta2 * np.sum(propulsion_power_approx(d[n1:] / plan.delta2, rotor))
    return float(e1 + e2)


@dataclass(frozen=True)
class AlphaEnergyCoeffs:
    """Energy as a function of the phase split ``alpha`` with legs held fixed.

    ``E(a) = a1 a + b1/a + c1 a^2 + d1/a^2`` plus the same form in ``1 - a``
    with the phase-2 coefficients.
    """

    a1: float
    b1: float
    c1: float
    d1: float
    a2: float
    b2: float
    c2: float
    d2: float

    def energy(self, alpha):
        a = np.asarray(alpha, dtype=float)
        b = 1.0 - a
        return _out(self.a1 * a + self.b1 / a + self.c1 * a**2 + self.d1 / a**2
                    + self.a2 * b + self.b2 / b + self.c2 * b**2 + self.d2 / b**2)


def alpha_energy_coeffs(distances, scn: Scenario, d_min: float = D_MIN) -> AlphaEnergyCoeffs:
    d = np.asarray(distances, dtype=float)
    _check_legs(d, d_min)
    r = scn.rotor
    T = scn.period

    def phase(dk: np.ndarray, nk: int):
        a = r.p0 * T
        b = 3.0 * r.p0 * nk * np.sum(dk**2) / (r.u_tip**2 * T)
        c = r.p1 * r.v0 * T**2 * np.sum(1.0 / dk) / nk**2
        dd = r.parasite_coeff * nk**2 * np.sum(dk**3) / T**2
        return a, b, c, dd

    a1, b1, c1, d1 = phase(d[: scn.n1], scn.n1)
    a2, b2, c2, d2 = phase(d[scn.n1 :], scn.n2)
    return AlphaEnergyCoeffs(a1, b1, c1, d1, a2, b2, c2, d2)


def de_sum_dalpha(coeffs: AlphaEnergyCoeffs, alpha):
    """Derivative of ``coeffs.energy`` with respect to ``alpha``."""
    a = np.asarray(alpha, dtype=float)
    if np.any((a <= 0) | (a >= 1)):
        raise DomainError("alpha must lie in (0, 1)")
    b = 1.0 - a
    k = coeffs
    d1 = k.a1 - k.b1 / a**2 + 2.0 * k.c1 * a - 2.0 * k.d1 / a**3
    d2 = k.a2 - k.b2 / b**2 + 2.0 * k.c2 * b - 2.0 * k.d2 / b**3
    return _out(d1 - d2)


def csee(acsr_lb: float, energy: float, period: float) -> float:
    """Bits delivered per joule: ``acsr_lb * period / energy``."""
    if not energy > 0:
        raise ZeroDivisionError("energy must be > 0")
    return acsr_lb * period / energy


def leg_speeds(traj: Trajectory, plan: PhasePlan, n1: int) -> np.ndarray:
    d = traj.legs()
    return np.concatenate([d[:n1] / plan.delta1, d[n1:] / plan.delta2])


def hover_power(rotor: RotorParams) -> float:
    return rotor.p0 + rotor.p1

