"""Alternating optimization of phase split, powers and trajectory with a Dinkelbach price."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Literal

import numpy as np

from . import channel
from .energy import alpha_energy_coeffs, csee, e_sum
from .errors import InfeasibleIntervalError, InfeasibleStartError, SubproblemInfeasibleError
from .pdsa import pdsa_alpha, pdsa_coeffs
from .rates import RateBreakdown, rate_breakdown
from .sca import POWER_BACKOFF, solve_power_subproblem, solve_trajectory_subproblem
from .scenario import (
    D_MIN,
    SPEED_MARGIN,
    PowerSchedule,
    Scenario,
    Solution,
    Trajectory,
    phase_plan,
)

log = logging.getLogger(__name__)

Mode = Literal["prop", "ben1", "ben2"]


@dataclass(frozen=True)
class AoConfig:
    max_iterations: int = 50
    conv_tol: float = 0.01
    mode: Mode = "prop"
    ben1_alpha: float = 0.5

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not self.conv_tol > 0:
            raise ValueError("conv_tol must be > 0")
        if self.mode not in ("prop", "ben1", "ben2"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0 < self.ben1_alpha < 1:
            raise ValueError("ben1_alpha must lie in (0, 1)")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    phi: float
    alpha: float
    obj_alpha: float
    obj_power: float
    obj_traj: float
    status: str
    wall_time: float


@dataclass
class AoTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False

    @property
    def phi(self) -> list[float]:
        return [r.phi for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "phi", "alpha", "obj_alpha", "obj_power", "obj_traj", "status"])
        for r in self.records:
            w.writerow([r.iteration, repr(r.phi), repr(r.alpha), repr(r.obj_alpha),
                        repr(r.obj_power), repr(r.obj_traj), r.status])
        return buf.getvalue()


@dataclass(frozen=True)
class Evaluation:
    csee: float
    acsr_lb: float
    energy: float
    csee_unclamped: float
    rates: RateBreakdown
    leg_speeds: np.ndarray


def evaluate(scn: Scenario, sol: Solution) -> Evaluation:
    """Recompute C&SEE, the rate bound and the energy of ``sol`` from scratch."""
    plan = phase_plan(scn, sol.alpha)
    rb = rate_breakdown(sol.trajectory, sol.powers, sol.alpha, scn)
    energy = e_sum(sol.trajectory, plan, scn.rotor, scn.n1)
    d = sol.trajectory.legs()
    speeds = np.concatenate([d[: scn.n1] / plan.delta1, d[scn.n1 :] / plan.delta2])
    return Evaluation(
        csee=csee(rb.acsr_lb, energy, scn.period),
        acsr_lb=rb.acsr_lb,
        energy=energy,
        csee_unclamped=csee(rb.acsr_unclamped, energy, scn.period),
        rates=rb,
        leg_speeds=speeds,
    )


def straight_line(scn: Scenario, d_min: float = D_MIN) -> Trajectory:
    """N equal legs from start to end; a zig-zag keeps legs >= ``d_min`` when they would be shorter."""
    a = scn.q_start.as_array()
    b = scn.q_end.as_array()
    n = scn.n
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    w = a + t * (b - a)
    length = float(np.linalg.norm(b - a))
    if length / n >= d_min:
        return Trajectory(w)
    perp = np.array([-(b - a)[1], (b - a)[0]]) / length if length > 0 else np.array([0.0, 1.0])
    offsets = np.zeros(n + 1)
    offsets[1:n:2] = d_min
    if n % 2 == 1 and n > 1:
        offsets[n - 1] = -d_min
    return Trajectory(w + offsets[:, None] * perp)


def _speed_interval(traj: Trajectory, scn: Scenario, margin: float) -> tuple[float, float]:
    d = traj.legs()
    scale = scn.period * scn.v_max
    b1 = scn.n1 * (float(np.max(d[: scn.n1])) + margin) / scale
    b2 = scn.n2 * (float(np.max(d[scn.n1 :])) + margin) / scale
    return b1, 1.0 - b2


def initial_powers(traj: Trajectory, scn: Scenario) -> PowerSchedule:
    g = channel.gain_set(traj, scn)
    cap = np.minimum(scn.p_src_max, scn.epsilon_covert * scn.p_jam_max * g.g_rw_wc / g.g_sw_wc)
    return PowerSchedule(cap * (1.0 - POWER_BACKOFF), np.full(scn.n2, scn.p_relay_max))


def initialize(scn: Scenario, mode: Mode = "prop", alpha: float = 0.5) -> Solution:
    """Straight-line start with alpha = 0.5 (moved into the speed-feasible interval if needed)."""
    traj = straight_line(scn)
    lo, hi = _speed_interval(traj, scn, SPEED_MARGIN)
    if lo > hi:
        raise InfeasibleStartError(
            f"straight line needs alpha in [{lo:.6g}, {hi:.6g}]: speed limit too low for the period")
    if not lo <= alpha <= hi:
        if mode == "ben1":
            raise InfeasibleStartError(f"fixed alpha {alpha} outside speed-feasible [{lo:.6g}, {hi:.6g}]")
        alpha = min(max(alpha, lo), hi)
    powers = initial_powers(traj, scn)
    sol = Solution(traj, powers, alpha)
    ev = evaluate(scn, sol)
    return Solution(traj, powers, alpha, ev.csee, ev.acsr_lb, ev.energy, 0, (ev.csee,))


def _dinkelbach(scn: Scenario, sol: Solution, phi: float) -> float:
    ev = evaluate(scn, sol)
    return ev.acsr_lb - phi / scn.period * ev.energy


def ao_solve(scn: Scenario, cfg: AoConfig = AoConfig(),
             observer: Callable[[str, Any], None] | None = None) -> tuple[Solution, AoTrace]:
    """Run the block loop until the relative C&SEE gain drops below ``cfg.conv_tol``.

    Each block's output is kept only if the Dinkelbach objective does not
    drop; otherwise the block input is carried forward and the trace status
    says so. ``observer(block, result)`` sees every raw block result
    (``"alpha"``, ``"power"`` or ``"trajectory"``) before acceptance.
    """
    notify = observer or (lambda block, result: None)
    t0 = time.perf_counter()
    alpha0 = cfg.ben1_alpha if cfg.mode == "ben1" else 0.5
    sol = initialize(scn, cfg.mode, alpha0)
    phi = sol.csee
    trace = AoTrace([IterationRecord(0, phi, sol.alpha, math.nan, math.nan, math.nan, "init",
                                     time.perf_counter() - t0)])
    traj, powers, alpha = sol.trajectory, sol.powers, sol.alpha
    history = [phi]
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        status: list[str] = []
        base = _dinkelbach(scn, Solution(traj, powers, alpha), phi)

        obj_alpha = base
        if cfg.mode != "ben1":
            try:
                coeffs = pdsa_coeffs(traj, powers, scn, phi)
                a_new, diag = pdsa_alpha(coeffs, alpha_energy_coeffs(traj.legs(), scn), phi)
                notify("alpha", (a_new, diag))
                cand = _dinkelbach(scn, Solution(traj, powers, a_new), phi)
                if cand >= base - 1e-12 * (1.0 + abs(base)):
                    alpha, obj_alpha = a_new, cand
                    status.append(f"alpha:{diag.case_taken}")
                else:
                    status.append("alpha:reverted")
            except InfeasibleIntervalError as exc:
                status.append("alpha:infeasible")
                log.warning("phase split step skipped: %s", exc)

        obj_power = obj_alpha
        try:
            prev = Solution(traj, powers, alpha)
            ps = solve_power_subproblem(traj, alpha, prev, scn, phi)
            notify("power", ps)
            cand = _dinkelbach(scn, Solution(traj, ps.powers, alpha), phi)
            if cand >= obj_alpha - 1e-12 * (1.0 + abs(obj_alpha)):
                powers, obj_power = ps.powers, cand
                status.append("power:ok")
            else:
                status.append("power:reverted")
        except SubproblemInfeasibleError as exc:
            status.append("power:failed")
            log.warning("power step failed: %s", exc)

        obj_traj = obj_power
        failed = False
        if cfg.mode != "ben2":
            try:
                prev = Solution(traj, powers, alpha)
                ts = solve_trajectory_subproblem(powers, alpha, prev, scn, phi)
                notify("trajectory", ts)
                cand_sol = Solution(ts.trajectory, powers, alpha)
                cand = _dinkelbach(scn, cand_sol, phi)
                if cand >= obj_power - 1e-12 * (1.0 + abs(obj_power)):
                    traj, obj_traj = ts.trajectory, cand
                    status.append("traj:ok")
                else:
                    status.append("traj:reverted")
            except SubproblemInfeasibleError as exc:
                status.append("traj:failed")
                failed = True
                log.warning("trajectory step failed, stopping: %s", exc)

        ev = evaluate(scn, Solution(traj, powers, alpha))
        new_phi = ev.csee
        trace.records.append(IterationRecord(it, new_phi, alpha, obj_alpha, obj_power, obj_traj,
                                             " ".join(status), time.perf_counter() - t0))
        history.append(new_phi)
        gain = new_phi - phi
        phi = new_phi
        if failed:
            break
        if gain <= cfg.conv_tol * abs(phi):
            trace.converged = True
            break
    else:
        if cfg.max_iterations > 0:
            log.warning("stopped at max_iterations=%d without meeting conv_tol", cfg.max_iterations)

    ev = evaluate(scn, Solution(traj, powers, alpha))
    final = Solution(traj, powers, alpha, ev.csee, ev.acsr_lb, ev.energy,
                     len(trace.records) - 1, tuple(history))
    return final, trace
