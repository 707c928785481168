"""Convex restrictions for the power and trajectory blocks.

Both builders linearize the nonconvex terms at the previous iterate so that any
point feasible for the convex program is feasible for the original problem.
The trajectory program works in a scaled length unit (``LENGTH_UNIT`` meters)
so that positions and squared distances are O(1) for the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import channel
from .convex import Affine, ConvexProgram, SolveReport, interleave, solve, vstack
from .energy import e_sum
from .errors import DegenerateGeometryError, SubproblemInfeasibleError
from .rates import rate_breakdown
from .scenario import (
    D_MIN,
    SPEED_MARGIN,
    PowerSchedule,
    Scenario,
    Solution,
    Trajectory,
    phase_plan,
)

LENGTH_UNIT = 100.0
# Relative back-off on the covert bound for the waypoints.
COVERT_BACKOFF = 1e-7
# Relative back-off of the source power below its covert cap.
POWER_BACKOFF = 1e-6

LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Slack seeding and linearizations


@dataclass(frozen=True)
class Slacks:
    """Auxiliary variables of the trajectory block (meters / squared meters)."""

    lam: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    varpi: np.ndarray
    theta: np.ndarray


def seed_slacks(traj: Trajectory, scn: Scenario, d_min: float = D_MIN) -> Slacks:
    """Slack values that make every slack constraint tight at ``traj``."""
    slots = traj.slots()
    p1, p2 = slots[: scn.n1], slots[scn.n1 :]
    h2 = scn.altitude**2
    d_w = np.linalg.norm(p1 - scn.q_warden_est.as_array(), axis=1)
    d_e = np.linalg.norm(p2 - scn.q_eaves_est.as_array(), axis=1)
    return Slacks(
        lam=np.maximum(traj.legs(), d_min),
        nu=np.sum((p1 - scn.q_src.as_array()) ** 2, axis=1) + h2,
        kappa=np.sum((p2 - scn.q_dst.as_array()) ** 2, axis=1) + h2,
        varpi=np.maximum(d_e - scn.r_eaves, 0.0) ** 2 + h2,
        theta=(d_w + scn.r_warden) ** 2 + h2,
    )


@dataclass(frozen=True)
class Linearizations:
    """First-order expansions of the nonconvex terms at an expansion point.

    ``K`` over-estimates the eavesdropper log-rate in the relay power; ``B``
    and ``F`` under-estimate the squared leg length and the squared clamped
    eavesdropper gap; ``C``, ``D``, ``E`` over-estimate concave logs in the
    slack variables. All evaluate to their target at the expansion point.
    """

    scn: Scenario
    waypoints: np.ndarray
    p_relay: np.ndarray
    slacks: Slacks
    g_re_wc: np.ndarray
    jam_noise: float

    # K: bits/s, affine in P_R
    def K(self, p_relay) -> np.ndarray:
        s = self.scn
        x0 = self.p_relay * self.g_re_wc / s.noise
        slope = s.bandwidth * (self.g_re_wc / s.noise) / ((1.0 + x0) * LN2)
        base = s.bandwidth * np.log2(s.noise + self.p_relay * self.g_re_wc)
        return base + slope * (np.asarray(p_relay, dtype=float) - self.p_relay)

    def K_slope(self) -> np.ndarray:
        s = self.scn
        return s.bandwidth * self.g_re_wc / ((s.noise + self.p_relay * self.g_re_wc) * LN2)

    # B: m^2, affine in the leg vectors
    def B(self, waypoints) -> np.ndarray:
        d0 = np.diff(self.waypoints, axis=0)
        d = np.diff(np.asarray(waypoints, dtype=float), axis=0)
        return np.sum(d0**2, axis=1) + 2.0 * np.sum(d0 * (d - d0), axis=1)

    def C(self, nu) -> np.ndarray:
        s, nu0 = self.scn, self.slacks.nu
        return (s.bandwidth * np.log2(nu0 * self.jam_noise)
                + s.bandwidth * (np.asarray(nu, dtype=float) - nu0) / (nu0 * LN2))

    def D(self, kappa) -> np.ndarray:
        s, k0 = self.scn, self.slacks.kappa
        return (s.bandwidth * np.log2(k0 * s.noise)
                + s.bandwidth * (np.asarray(kappa, dtype=float) - k0) / (k0 * LN2))

    def E(self, varpi) -> np.ndarray:
        # Uses the relay power of the expansion point in both the value and the
        # slope, so this is an exact tangent in varpi.
        s, w0 = self.scn, self.slacks.varpi
        den = w0 * s.noise + self.p_relay * s.beta0
        return (s.bandwidth * np.log2(den)
                + s.bandwidth * s.noise * (np.asarray(varpi, dtype=float) - w0) / (den * LN2))

    def F(self, slots2) -> np.ndarray:
        """Tangent of ``max(|q - q_E| - r_E, 0)^2`` at the phase-2 slots."""
        q0 = self.waypoints[1:][self.scn.n1 :]
        e = self.scn.q_eaves_est.as_array()
        diff0 = q0 - e
        d0 = np.linalg.norm(diff0, axis=1)
        gap = np.maximum(d0 - self.scn.r_eaves, 0.0)
        coef = np.where(gap > 0, 2.0 * gap / np.where(d0 > 0, d0, 1.0), 0.0)
        q = np.asarray(slots2, dtype=float)
        return gap**2 + coef * np.sum(diff0 * (q - q0), axis=1)

    def F_coeffs(self) -> tuple[np.ndarray, np.ndarray]:
        """``(gap0^2, grad)`` so that ``F(q) = gap0^2 + grad . (q - q0)``."""
        q0 = self.waypoints[1:][self.scn.n1 :]
        diff0 = q0 - self.scn.q_eaves_est.as_array()
        d0 = np.linalg.norm(diff0, axis=1)
        gap = np.maximum(d0 - self.scn.r_eaves, 0.0)
        coef = np.where(gap > 0, 2.0 * gap / np.where(d0 > 0, d0, 1.0), 0.0)
        return gap**2, coef[:, None] * diff0


# Nonlinear targets of the expansions above.


def target_K(p_relay, g_re_wc, scn: Scenario) -> np.ndarray:
    return scn.bandwidth * np.log2(scn.noise + np.asarray(p_relay) * g_re_wc)


def target_B(waypoints) -> np.ndarray:
    return np.sum(np.diff(np.asarray(waypoints, dtype=float), axis=0) ** 2, axis=1)


def target_C(nu, jam_noise: float, scn: Scenario) -> np.ndarray:
    return scn.bandwidth * np.log2(np.asarray(nu) * jam_noise)


def target_D(kappa, scn: Scenario) -> np.ndarray:
    return scn.bandwidth * np.log2(np.asarray(kappa) * scn.noise)


def target_E(varpi, p_relay, scn: Scenario) -> np.ndarray:
    return scn.bandwidth * np.log2(np.asarray(varpi) * scn.noise + np.asarray(p_relay) * scn.beta0)


def target_F(slots2, scn: Scenario) -> np.ndarray:
    d = np.linalg.norm(np.asarray(slots2, dtype=float) - scn.q_eaves_est.as_array(), axis=1)
    return np.maximum(d - scn.r_eaves, 0.0) ** 2


def linearize_terms(expansion: Solution, scn: Scenario) -> Linearizations:
    w = np.array(expansion.trajectory.waypoints)
    slots2 = w[1:][scn.n1 :]
    d_e = np.linalg.norm(slots2 - scn.q_eaves_est.as_array(), axis=1)
    if np.any(d_e == 0):
        n = int(np.flatnonzero(d_e == 0)[0]) + scn.n1 + 1
        raise DegenerateGeometryError(f"slot {n} sits exactly above the eavesdropper estimate")
    return Linearizations(
        scn=scn,
        waypoints=w,
        p_relay=np.array(expansion.powers.p_relay, dtype=float),
        slacks=seed_slacks(expansion.trajectory, scn),
        g_re_wc=np.atleast_1d(channel.worst_case_re_gain(slots2, scn)),
        jam_noise=scn.p_jam_eff * scn.sic_level + scn.noise,
    )


# ---------------------------------------------------------------------------
# Power block


@dataclass(frozen=True)
class PowerSubproblemSolution:
    p_src: np.ndarray
    p_relay: np.ndarray
    omega2: float
    objective: float
    report: SolveReport
    program: ConvexProgram

    @property
    def powers(self) -> PowerSchedule:
        return PowerSchedule(self.p_src, self.p_relay)


def source_power_cap(traj: Trajectory, scn: Scenario) -> np.ndarray:
    """Largest covert-feasible source power per phase-1 slot (W)."""
    g = channel.gain_set(traj, scn)
    covert = scn.epsilon_covert * scn.p_jam_max * g.g_rw_wc / g.g_sw_wc
    return np.minimum(scn.p_src_max, covert)


def build_power_program(traj: Trajectory, alpha: float, prev: Solution, scn: Scenario,
                        phi_l: float) -> tuple[ConvexProgram, dict]:
    """Power program with per-slot variable units chosen for conditioning.

    Source powers are measured in units of ``c / g_sr`` (so the log argument is
    ``1 + snr``). Each relay power is measured in a unit near its slot-wise
    stationary point ``P^(l) + noise / g_re - noise / g_rd``, clipped to
    ``[noise / g_rd, P_relay_max]``; this keeps gradients and bound slacks O(1)
    whether the slot ends at zero power, in the interior or at the cap.
    """
    plan = phase_plan(scn, alpha)
    g = channel.gain_set(traj, scn)
    lin = linearize_terms(Solution(traj, prev.powers, alpha), scn)
    jam_noise = scn.p_jam_eff * scn.sic_level + scn.noise
    ps_unit = jam_noise / g.g_sr
    stationary = lin.p_relay + scn.noise / lin.g_re_wc - scn.noise / g.g_rd
    snr_unit = scn.noise / g.g_rd
    pr_unit = np.clip(stationary, snr_unit, np.maximum(scn.p_relay_max, snr_unit))

    prog = ConvexProgram("power")
    ps = prog.variable("snr_src", scn.n1, lb=0.0, ub=scn.p_src_max / ps_unit)
    pr = prog.variable("p_relay", scn.n2, lb=0.0, ub=scn.p_relay_max / pr_unit)
    om = prog.variable("omega", 1)

    covert_cap = scn.epsilon_covert * scn.p_jam_max * g.g_rw_wc / g.g_sw_wc
    prog.add_linear_le("covert", ps - covert_cap / ps_unit)

    w1 = plan.phi1 * scn.bandwidth / LN2
    prog.add_log_ge("rate_phase1", w1, 1.0 + ps, om)

    # K minus B log2(noise): B log2(1 + P^(l) g/noise) + slope (P - P^(l)).
    k0 = scn.bandwidth * np.log2(1.0 + lin.p_relay * lin.g_re_wc / scn.noise)
    slope = lin.K_slope() * pr_unit
    k_aff = (pr * slope) + (k0 - lin.K_slope() * lin.p_relay)
    w2 = plan.phi2 * scn.bandwidth / LN2
    prog.add_log_ge("rate_phase2", w2, 1.0 + pr * (pr_unit / snr_unit), om + plan.phi2 * k_aff.sum())

    offset = -phi_l / scn.period * _energy_at(traj, plan, scn)
    prog.maximize(om + offset)
    return prog, {"ps_unit": ps_unit, "pr_unit": pr_unit, "offset": offset, "lin": lin}


def power_values(prog_aux: dict, values: dict) -> tuple[np.ndarray, np.ndarray]:
    """Convert a power-program solution back to watts."""
    return values["snr_src"] * prog_aux["ps_unit"], values["p_relay"] * prog_aux["pr_unit"]


def _energy_at(traj: Trajectory, plan, scn: Scenario) -> float:
    return e_sum(traj, plan, scn.rotor, scn.n1)


def _solve_with_retry(prog_builder, scn: Scenario, what: str) -> tuple[ConvexProgram, dict, SolveReport]:
    prog, aux = prog_builder()
    rep = solve(prog, tol=scn.solver_tol)
    if rep.status != "optimal":
        # Slacks are always re-seeded tight at the expansion point, so the
        # retry rebuilds the program and doubles the iteration budget.
        prog, aux = prog_builder()
        rep = solve(prog, tol=scn.solver_tol, max_iter=400)
    if rep.status != "optimal":
        raise SubproblemInfeasibleError(
            f"{what} subproblem ended with status {rep.status} ({rep.solver_status}); "
            f"residuals {rep.residuals}")
    return prog, aux, rep


def solve_power_subproblem(traj: Trajectory, alpha: float, prev: Solution, scn: Scenario,
                           phi_l: float) -> PowerSubproblemSolution:
    """Power block: maximize the rate slack over source and relay powers.

    After the solve, source powers are raised to ``(1 - POWER_BACKOFF)`` times
    their cap and relay powers are set to the bound that maximizes each slot's
    true secrecy rate. Both moves are component-wise dominant for the true
    objective.
    """
    prog, aux, rep = _solve_with_retry(
        lambda: build_power_program(traj, alpha, prev, scn, phi_l), scn, "power")
    g = channel.gain_set(traj, scn)
    cap = source_power_cap(traj, scn)
    p_src = cap * (1.0 - POWER_BACKOFF)
    p_relay = np.where(g.g_rd > g.g_re_wc, scn.p_relay_max, 0.0)
    omega = float(rep.values["omega"][0])
    return PowerSubproblemSolution(p_src, p_relay, omega, rep.objective, rep, prog)


# ---------------------------------------------------------------------------
# Trajectory block


@dataclass(frozen=True)
class TrajectorySubproblemSolution:
    waypoints: np.ndarray
    slacks: Slacks
    omega3: float
    objective: float
    report: SolveReport
    program: ConvexProgram

    @property
    def trajectory(self) -> Trajectory:
        return Trajectory(self.waypoints)


def _waypoint_expr(q: Affine, scn: Scenario, L: float) -> Affine:
    """All N+1 waypoints (scaled, flattened x0, y0, x1, ...) with fixed endpoints."""
    start = Affine.const(scn.q_start.as_array() / L)
    end = Affine.const(scn.q_end.as_array() / L)
    return vstack(start, q, end)


def build_trajectory_program(powers: PowerSchedule, alpha: float, prev: Solution,
                             scn: Scenario, phi_l: float,
                             speed_margin: float = SPEED_MARGIN,
                             d_min: float = D_MIN) -> tuple[ConvexProgram, Linearizations]:
    L = LENGTH_UNIT
    n1, n2, n = scn.n1, scn.n2, scn.n
    plan = phase_plan(scn, alpha)
    lin = linearize_terms(Solution(prev.trajectory, powers, alpha), scn)
    sl = lin.slacks
    w0 = lin.waypoints / L
    h2 = (scn.altitude / L) ** 2
    rot = scn.rotor

    prog = ConvexProgram("trajectory")
    q = prog.variable("q", 2 * (n - 1))
    lam = prog.variable("lam", n, lb=d_min / L)
    x = prog.variable("x", n, lb=0.0)
    s = prog.variable("s", n, lb=0.0)
    wv = prog.variable("w", n, lb=0.0)
    u = prog.variable("u", n, lb=0.0)
    nu = prog.variable("nu", n1, lb=h2)
    tw = prog.variable("t_w", n1, lb=0.0)
    th = prog.variable("theta", n1, lb=h2)
    ka = prog.variable("kappa", n2, lb=h2)
    vp = prog.variable("varpi", n2, lb=0.0)
    om = prog.variable("omega", 1)

    W = _waypoint_expr(q, scn, L)
    idx = np.arange(n + 1)
    wx, wy = W[2 * idx], W[2 * idx + 1]
    dx = wx[idx[1:]] - wx[idx[:-1]]
    dy = wy[idx[1:]] - wy[idx[:-1]]
    legs = interleave(dx, dy)
    slots = np.arange(1, n + 1)
    sx, sy = wx[slots], wy[slots]

    # Energy epigraph per leg: x >= |dq|, s >= x^2, w >= x^3, u >= 1/lam.
    prog.add_norm_le("leg_len", legs, 2, x)
    prog.add_sqnorm_le("leg_sq", x, 1, s)
    prog.add_norm_le("leg_cube", interleave(2.0 * s, wv - x), 2, wv + x)
    prog.add_norm_le("leg_inv", interleave(Affine.const(np.full(n, 2.0)), u - lam), 2, u + lam)

    delta = np.concatenate([np.full(n1, plan.delta1), np.full(n2, plan.delta2)])
    e_const = float(np.sum(delta * rot.p0))
    c_s = 3.0 * rot.p0 * L**2 / (delta * rot.u_tip**2)
    c_u = delta**2 * rot.p1 * rot.v0 / L
    c_w = rot.parasite_coeff * L**3 / delta**2
    energy = (s * c_s).sum() + (u * c_u).sum() + (wv * c_w).sum() + e_const

    # lam^2 <= B (tangent of the squared leg length).
    d0 = np.diff(w0, axis=0)
    b_aff = (dx * (2.0 * d0[:, 0]) + dy * (2.0 * d0[:, 1])) - np.sum(d0**2, axis=1)
    prog.add_sqnorm_le("lam_tangent", lam, 1, b_aff)

    # Speed limits.
    vlim = (delta * scn.v_max - speed_margin) / L
    prog.add_norm_le("speed", legs, 2, Affine.const(vlim))

    # Phase-1 rate with C linearized at nu^(l).
    ps = np.asarray(powers.p_src, dtype=float)
    a_n = ps * scn.beta0 / (lin.jam_noise * L**2)
    nu0 = sl.nu / L**2
    wt1 = plan.phi1 * scn.bandwidth / LN2
    c_lin = (nu * (1.0 / nu0)) + (np.log(nu0) - 1.0)
    prog.add_log_ge("rate_phase1", wt1, nu + a_n, om + wt1 * c_lin.sum())

    # Phase-2 secrecy rate with D, E linearized at kappa^(l), varpi^(l).
    pr = np.asarray(powers.p_relay, dtype=float)
    b_n = pr * scn.beta0 / (scn.noise * L**2)
    k0 = sl.kappa / L**2
    v0 = sl.varpi / L**2
    wt2 = plan.phi2 * scn.bandwidth / LN2
    d_lin = (ka * (1.0 / k0)) + (np.log(k0) - 1.0)
    e_lin = (vp * (1.0 / (v0 + b_n))) + (np.log(v0 + b_n) - v0 / (v0 + b_n))
    prog.add_log_ge("rate_phase2", wt2, vstack(ka + b_n, vp),
                    om + wt2 * (d_lin.sum() + e_lin.sum()))

    # nu >= |q - q_S|^2 + H^2 and kappa >= |q - q_D|^2 + H^2.
    qs = scn.q_src.as_array() / L
    qd = scn.q_dst.as_array() / L
    p1 = slots[:n1]
    p2 = slots[n1:]
    prog.add_sqnorm_le("nu_bound", interleave(sx[p1 - 1] - qs[0], sy[p1 - 1] - qs[1]), 2, nu - h2)
    prog.add_sqnorm_le("kappa_bound", interleave(sx[p2 - 1] - qd[0], sy[p2 - 1] - qd[1]), 2,
                       ka - h2)

    # theta >= (|q - q_W| + r_W)^2 + H^2 and the covert bound on theta.
    qw = scn.q_warden_est.as_array() / L
    prog.add_norm_le("warden_dist", interleave(sx[p1 - 1] - qw[0], sy[p1 - 1] - qw[1]), 2, tw)
    prog.add_sqnorm_le("theta_bound", tw + scn.r_warden / L, 1, th - h2)
    g_sw = channel.worst_case_sw_gain(scn)
    active = ps > 0
    if np.any(active):
        cap = (scn.epsilon_covert * scn.beta0 * scn.p_jam_max
               / (ps[active] * g_sw * L**2)) * (1.0 - COVERT_BACKOFF)
        prog.add_linear_le("covert", th[np.flatnonzero(active)] - cap)

    # varpi <= F + H^2, with F's gradient (m^2 per m) rescaled to length units.
    gap2, grad = lin.F_coeffs()
    g = grad / L
    q20 = lin.waypoints[1:][n1:] / L
    f_aff = sx[p2 - 1] * g[:, 0] + sy[p2 - 1] * g[:, 1] + (gap2 / L**2 - np.sum(g * q20, axis=1))
    prog.add_linear_le("varpi_bound", vp - f_aff - h2)

    prog.maximize(om - (phi_l / scn.period) * energy)
    return prog, lin


def solve_trajectory_subproblem(powers: PowerSchedule, alpha: float, prev: Solution,
                                scn: Scenario, phi_l: float) -> TrajectorySubproblemSolution:
    """Trajectory block: one convex restriction step around ``prev.trajectory``.

    When the speed budget of every leg is below ``2 * D_MIN`` the waypoints
    cannot leave a ``2 N D_MIN`` neighbourhood of the start, so the block keeps
    ``prev.trajectory`` without solving (``report.solver_status == "pinned"``).
    """
    plan = phase_plan(scn, alpha)
    if max(plan.delta1, plan.delta2) * scn.v_max - SPEED_MARGIN < 2.0 * D_MIN:
        return _pinned(powers, alpha, prev, scn, phi_l)
    prog, lin, rep = _solve_with_retry(
        lambda: build_trajectory_program(powers, alpha, prev, scn, phi_l), scn, "trajectory")
    L = LENGTH_UNIT
    q = rep.values["q"].reshape(-1, 2) * L
    w = np.vstack([scn.q_start.as_array(), q, scn.q_end.as_array()])
    traj = Trajectory(w)
    tight = seed_slacks(traj, scn)
    legs = traj.legs()
    lam = np.clip(rep.values["lam"] * L, D_MIN, np.maximum(legs, D_MIN))
    # Solver slacks are snapped onto the feasible side of their defining
    # constraints; the shift is at the level of the solver tolerance.
    slacks = Slacks(
        lam=lam,
        nu=np.maximum(rep.values["nu"] * L**2, tight.nu),
        kappa=np.maximum(rep.values["kappa"] * L**2, tight.kappa),
        varpi=np.minimum(rep.values["varpi"] * L**2, tight.varpi),
        theta=np.maximum(rep.values["theta"] * L**2, tight.theta),
    )
    return TrajectorySubproblemSolution(w, slacks, float(rep.values["omega"][0]),
                                        rep.objective, rep, prog)


def _pinned(powers: PowerSchedule, alpha: float, prev: Solution, scn: Scenario,
            phi_l: float) -> TrajectorySubproblemSolution:
    traj = prev.trajectory
    plan = phase_plan(scn, alpha)
    rb = rate_breakdown(traj, powers, alpha, scn)
    objective = rb.acsr_unclamped - phi_l / scn.period * _energy_at(traj, plan, scn)
    prog, _ = build_trajectory_program(powers, alpha, prev, scn, phi_l)
    rep = SolveReport("optimal", None, {}, objective, 0.0, 0.0, 0.0, None, solver_status="pinned")
    return TrajectorySubproblemSolution(np.array(traj.waypoints), seed_slacks(traj, scn),
                                        rb.acsr_unclamped, objective, rep, prog)
