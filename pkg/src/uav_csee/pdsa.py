"""Phase-split subproblem: coefficient extraction, the primal-dual decision tree and a grid oracle.

With trajectory and powers fixed, the split ``alpha`` maximizes

    f(alpha) = min(alpha * rho1, (1 - alpha) * rho2) - price * E(alpha)

on ``[beta1, 1 - beta2]``, where ``price = phi / T`` converts the C&SEE value
(bits per joule) into the rate units of the first term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .energy import AlphaEnergyCoeffs, alpha_energy_coeffs, de_sum_dalpha
from .errors import BracketError, InfeasibleIntervalError
from .rates import rate_breakdown
from .scenario import SPEED_MARGIN, PowerSchedule, Scenario, Trajectory

ALPHA_LO = 1e-6
ALPHA_HI = 1.0 - 1e-6
BISECT_TOL = 1e-10


@dataclass(frozen=True)
class PdsaCoefficients:
    rho1: float
    rho2: float
    beta1: float
    beta2: float
    alpha_hat1: float
    alpha_hat2: float
    alpha_hat3: float
    period: float

    @property
    def interval(self) -> tuple[float, float]:
        return self.beta1, 1.0 - self.beta2


@dataclass(frozen=True)
class PdsaDiagnostics:
    case_taken: str
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    stationarity_residual: float
    complementarity_residual: float


def _bisect(fn, lo: float = ALPHA_LO, hi: float = ALPHA_HI, tol: float = BISECT_TOL) -> float:
    """Root of an increasing function on ``(lo, hi)``."""
    flo, fhi = fn(lo), fn(hi)
    if not (flo < 0.0 < fhi):
        if flo == 0.0:
            return lo
        if fhi == 0.0:
            return hi
        raise BracketError(f"no sign change on ({lo}, {hi}): f(lo)={flo:.3g}, f(hi)={fhi:.3g}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if fm < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _betas(traj: Trajectory, scn: Scenario, margin: float) -> tuple[float, float]:
    d = traj.legs()
    scale = scn.period * scn.v_max
    b1 = scn.n1 * (float(np.max(d[: scn.n1])) + margin) / scale
    b2 = scn.n2 * (float(np.max(d[scn.n1 :])) + margin) / scale
    return b1, b2


def hat_alphas(rho1: float, rho2: float, energy: AlphaEnergyCoeffs,
               price: float) -> tuple[float, float, float]:
    """The three candidate splits; raises :class:`BracketError` if a root is not bracketed."""
    total = rho1 + rho2
    a2 = rho2 / total if total > 0 else float("nan")
    if price <= 0:
        raise BracketError("energy price must be > 0 for the stationarity roots to exist")
    a1 = _bisect(lambda a: price * de_sum_dalpha(energy, a) - rho1)
    a3 = _bisect(lambda a: price * de_sum_dalpha(energy, a) + rho2)
    return a1, a2, a3


def pdsa_coeffs(traj: Trajectory, powers: PowerSchedule, scn: Scenario, phi_l: float,
                margin: float = SPEED_MARGIN) -> PdsaCoefficients:
    """Mean per-slot rates, speed margins and candidate splits at the current iterate.

    ``rho2`` averages the unclamped phase-2 secrecy rate. ``margin`` (m) is added
    to the longest leg so the returned interval keeps the optimizer's speed
    back-off satisfied.
    """
    # alpha does not enter per-slot rates; any interior value works here.
    rb = rate_breakdown(traj, powers, 0.5, scn)
    rho1 = float(np.mean(rb.r1_per_slot))
    rho2 = float(np.mean(rb.r2_per_slot))
    b1, b2 = _betas(traj, scn, margin)
    price = phi_l / scn.period
    energy = alpha_energy_coeffs(traj.legs(), scn)
    try:
        a1, a2, a3 = hat_alphas(rho1, rho2, energy, price)
    except BracketError:
        total = rho1 + rho2
        a1 = a3 = float("nan")
        a2 = rho2 / total if total > 0 else float("nan")
    return PdsaCoefficients(rho1, rho2, b1, b2, a1, a2, a3, scn.period)


def objective(alpha, coeffs: PdsaCoefficients, energy: AlphaEnergyCoeffs, phi_l: float):
    """``min(alpha rho1, (1 - alpha) rho2) - (phi / T) E(alpha)`` (bits/s)."""
    a = np.asarray(alpha, dtype=float)
    val = np.minimum(a * coeffs.rho1, (1.0 - a) * coeffs.rho2) - phi_l / coeffs.period * energy.energy(a)
    return float(val) if val.ndim == 0 else val


def _check_interval(coeffs: PdsaCoefficients) -> tuple[float, float]:
    lo, hi = coeffs.interval
    if coeffs.beta1 + coeffs.beta2 >= 1.0:
        raise InfeasibleIntervalError(
            f"beta1 + beta2 = {coeffs.beta1 + coeffs.beta2:.6g} >= 1; no feasible phase split")
    return lo, hi


def alpha_grid_oracle(coeffs: PdsaCoefficients, energy: AlphaEnergyCoeffs, phi_l: float,
                      step: float = 1e-4) -> float:
    """Best split on the grid ``beta1, beta1 + step, ..., 1 - beta2`` (smallest on ties)."""
    lo, hi = _check_interval(coeffs)
    if not 0 < step < hi - lo:
        if hi - lo <= 0 or step <= 0:
            raise ValueError("step must be > 0")
        return lo if objective(lo, coeffs, energy, phi_l) >= objective(hi, coeffs, energy, phi_l) else hi
    grid = np.append(np.arange(lo, hi, step), hi)
    vals = objective(grid, coeffs, energy, phi_l)
    return float(grid[int(np.argmax(vals))])


def _refined_oracle(coeffs: PdsaCoefficients, energy: AlphaEnergyCoeffs, phi_l: float) -> float:
    lo, hi = coeffs.interval
    step = min(1e-4, 0.5 * (hi - lo))
    a = alpha_grid_oracle(coeffs, energy, phi_l, step)
    best = objective(a, coeffs, energy, phi_l)
    wlo, whi = max(lo, a - step), min(hi, a + step)
    if whi > wlo:
        res = minimize_scalar(lambda t: -objective(t, coeffs, energy, phi_l), bounds=(wlo, whi),
                              method="bounded", options={"xatol": 1e-12})
        if -res.fun > best:
            a = float(res.x)
    return a


def _decision_tree(c: PdsaCoefficients) -> tuple[float, str]:
    b1, b2 = c.beta1, c.beta2
    a1, a2, a3 = c.alpha_hat1, c.alpha_hat2, c.alpha_hat3
    r1, r2 = c.rho1, c.rho2
    if b1 < a1 < 1.0 - b2:
        if a1 * r1 <= (1.0 - a1) * r2:
            return a1, "i"
        if b1 < a2 < a1:
            return (a2, "ii") if a2 >= a3 else (a3, "iii")
        return (b1, "iv") if b1 >= a3 else (a3, "v")
    if a1 <= b1:
        return b1, "vi"
    if (1.0 - b2) * r1 <= b2 * r2:
        return 1.0 - b2, "vii"
    if b1 <= a2 < 1.0 - b2:
        if a2 >= a3:
            return a2, "viii"
        # The pseudocode returns a3 here without checking the upper margin.
        if a3 <= 1.0 - b2:
            return a3, "ix"
        return 1.0 - b2, "ix-clamped"
    if b1 >= a3:
        return b1, "x"
    if a3 <= 1.0 - b2:
        return a3, "xi"
    return 1.0 - b2, "xii"


def kkt_multipliers(alpha: float, coeffs: PdsaCoefficients, energy: AlphaEnergyCoeffs,
                    phi_l: float, active_tol: float = 1e-9) -> PdsaDiagnostics:
    """Multipliers consistent with the active set at ``alpha`` that minimize the stationarity residual."""
    r1, r2 = coeffs.rho1, coeffs.rho2
    lo, hi = coeffs.interval
    price = phi_l / coeffs.period
    grad = -price * de_sum_dalpha(energy, alpha)
    arm1, arm2 = alpha * r1, (1.0 - alpha) * r2
    omega = min(arm1, arm2)
    scale = 1.0 + abs(r1) + abs(r2)
    tie = abs(arm1 - arm2) <= active_tol * scale
    at_lo = abs(alpha - lo) <= active_tol
    at_hi = abs(alpha - hi) <= active_tol
    total = r1 + r2
    if tie:
        lam2 = float(np.clip((grad + r1) / total, 0.0, 1.0)) if total > 0 else 0.0
    else:
        lam2 = 0.0 if arm1 < arm2 else 1.0
    resid = grad + r1 - lam2 * total
    lam3 = lam4 = 0.0
    if resid < 0 and at_lo:
        lam3 = -resid
    elif resid > 0 and at_hi:
        lam4 = resid
    stat = abs(resid + lam3 - lam4)
    lam1 = 1.0 - lam2
    comp = max(lam1 * abs(arm1 - omega), lam2 * abs(arm2 - omega),
               lam3 * abs(alpha - lo), lam4 * abs(hi - alpha))
    return PdsaDiagnostics("", lam1, lam2, lam3, lam4, stat, comp)


def pdsa_alpha(coeffs: PdsaCoefficients, energy: AlphaEnergyCoeffs,
               phi_l: float) -> tuple[float, PdsaDiagnostics]:
    """Optimal phase split by the primal-dual decision tree.

    Falls back to a refined grid search when the stationarity roots are not
    available (zero price, non-positive total rate, or an unbracketed root).
    """
    _check_interval(coeffs)
    usable = (phi_l > 0 and coeffs.rho1 + coeffs.rho2 > 0
              and np.isfinite(coeffs.alpha_hat1) and np.isfinite(coeffs.alpha_hat3))
    if usable:
        alpha, case = _decision_tree(coeffs)
    else:
        alpha, case = _refined_oracle(coeffs, energy, phi_l), "grid"
    diag = kkt_multipliers(alpha, coeffs, energy, phi_l)
    return alpha, PdsaDiagnostics(case, diag.lambda1, diag.lambda2, diag.lambda3, diag.lambda4,
                                  diag.stationarity_residual, diag.complementarity_residual)
