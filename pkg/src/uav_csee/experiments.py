"""Sweeps, solution export and the oracle verification suites behind the CLI.

Every function here returns plain rows; the CLI decides where they go.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import channel, covert, energy, pdsa, rates, sca
from .ao import AoConfig, AoTrace, Mode, ao_solve, initialize
from .scenario import Scenario, Solution, Trajectory

SWEEP_PARAMS = ("epsilon_covert", "period", "p_jam_max", "r_uncertainty", "alpha_fixed")
SWEEP_COLUMNS = ("mode", "param", "value", "csee", "acsr_lb", "energy", "alpha", "iterations",
                 "status")
VERIFY_SUITES = ("dep", "jensen", "energy-bound", "pdsa", "linearization")
VERIFY_COLUMNS = ("suite", "check", "residual", "tolerance", "passed")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple[float, ...]
    modes: tuple[Mode, ...] = ("prop",)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.parameter not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}; "
                             f"choose from {', '.join(SWEEP_PARAMS)}")
        if not self.values:
            raise ValueError("sweep values must be non-empty")
        d = np.diff(self.values)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sweep values must be strictly monotone")
        if not self.modes or any(m not in ("prop", "ben1", "ben2") for m in self.modes):
            raise ValueError("modes must be a non-empty subset of prop, ben1, ben2")


def apply_param(scn: Scenario, cfg: AoConfig, param: str, value: float) -> tuple[Scenario, AoConfig]:
    if param == "r_uncertainty":
        return scn.replace(r_warden=value, r_eaves=value), cfg
    if param == "alpha_fixed":
        return scn, AoConfig(cfg.max_iterations, cfg.conv_tol, cfg.mode, value)
    return scn.replace(**{param: value}), cfg


def sweep_point(scn: Scenario, mode: Mode, param: str, value: float,
                max_iterations: int = 50) -> dict:
    """One row of a sweep; failures land in the status column instead of raising."""
    row = dict(mode=mode, param=param, value=float(value), csee=math.nan, acsr_lb=math.nan,
               energy=math.nan, alpha=math.nan, iterations=0, status="ok")
    try:
        cfg = AoConfig(max_iterations=max_iterations, conv_tol=scn.conv_tol, mode=mode)
        point_scn, cfg = apply_param(scn, cfg, param, value)
        sol, trace = ao_solve(point_scn, cfg)
    except Exception as exc:  # noqa: BLE001 - recorded per point, the sweep continues
        row["status"] = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
        return row
    row.update(csee=sol.csee, acsr_lb=sol.acsr_lb, energy=sol.energy, alpha=sol.alpha,
               iterations=sol.iterations)
    if not trace.converged:
        row["status"] = "not-converged"
    elif any("failed" in r.status for r in trace.records):
        row["status"] = "converged-with-failures"
    return row


def _sweep_job(args):
    return sweep_point(*args)


def run_sweep(scn: Scenario, spec: SweepSpec, max_iterations: int = 50,
              workers: int | None = None) -> list[dict]:
    """Rows in spec order (mode-major), whatever order the workers finish in."""
    jobs = [(scn, mode, spec.parameter, v, max_iterations) for mode in spec.modes
            for v in spec.values]
    if workers == 1 or len(jobs) == 1:
        return [_sweep_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_job, jobs))


# ---------------------------------------------------------------------------
# Solution export

SOLUTION_COLUMNS = ("slot", "phase", "x", "y", "p_src", "p_relay")


def solution_rows(scn: Scenario, sol: Solution) -> list[dict]:
    """Waypoint 0 is the start; slot n >= 1 carries the powers used while flying into it."""
    w = sol.trajectory.waypoints
    rows = [dict(slot=0, phase="start", x=float(w[0, 0]), y=float(w[0, 1]), p_src="",
                 p_relay="")]
    for k in range(1, scn.n + 1):
        ph1 = k <= scn.n1
        rows.append(dict(
            slot=k, phase="1" if ph1 else "2", x=float(w[k, 0]), y=float(w[k, 1]),
            p_src=float(sol.powers.p_src[k - 1]) if ph1 else "",
            p_relay="" if ph1 else float(sol.powers.p_relay[k - scn.n1 - 1]),
        ))
    return rows


def solution_csv(scn: Scenario, sol: Solution) -> str:
    return to_csv(SOLUTION_COLUMNS, solution_rows(scn, sol))


def summary_line(sol: Solution, trace: AoTrace) -> str:
    return (f"csee={sol.csee!r} acsr_lb={sol.acsr_lb!r} energy={sol.energy!r} "
            f"alpha={sol.alpha!r} iterations={sol.iterations} converged={trace.converged}")


# ---------------------------------------------------------------------------
# Verification suites


@dataclass(frozen=True)
class Check:
    suite: str
    check: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def row(self) -> dict:
        return dict(suite=self.suite, check=self.check, residual=float(self.residual),
                    tolerance=float(self.tolerance), passed=self.passed)


def detector_env(scn: Scenario) -> covert.DetectorEnv:
    """Warden view of the first phase-1 slot of the initial solution (worst-case gains)."""
    sol = initialize(scn)
    g = channel.gain_set(sol.trajectory, scn)
    return covert.DetectorEnv(p_src=float(sol.powers.p_src[0]), g_sw_mean=g.g_sw_wc,
                              g_rw=float(g.g_rw_wc[0]), p_jam_max=scn.p_jam_max, noise=scn.noise)


def verify_dep(scn: Scenario, seed: int = 0, samples: int = 1_000_000, points: int = 100,
               grid: int = 100_000) -> list[Check]:
    env = detector_env(scn)
    bp = covert.breakpoints(env)
    out = []
    for i, tau in enumerate(np.linspace(0.0, 1.2 * bp.z3, points)):
        est = covert.mc_dep(float(tau), env, covert.CovertMcConfig(samples, seed + i))
        closed = covert.dep(float(tau), env)
        out.append(Check("dep", f"tau[{i}]", abs(closed - est.value),
                         3.0 * covert.binomial_se(env, float(tau), samples)))
    taus = np.linspace(0.0, 1.2 * bp.z3, grid)
    vals = covert.dep(taus, env)
    k = int(np.argmin(vals))
    best, (lo, hi) = covert.min_dep(env)
    out.append(Check("dep", "grid-min-equals-min_dep", abs(float(vals[k]) - best), 1e-9))
    inside = lo <= taus[k] < hi
    out.append(Check("dep", "argmin-in-[z2,z1)", 0.0 if inside else 1.0, 0.0))
    return out


def verify_jensen(scn: Scenario, seed: int = 0, samples: int = 100_000,
                  configs: int = 10) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(configs):
        q = rng.uniform(0.0, 700.0, 2)
        g_sr = channel.a2g_gain(q, scn.q_src, scn.altitude, scn.beta0)
        p_src = rng.uniform(0.05, 1.0) * max(scn.p_src_max, 1e-3)
        sic = 10.0 ** rng.uniform(-13.0, -10.0)
        bound = rates.r1_sec_slot(p_src, g_sr, scn.p_jam_eff, sic, scn.noise, scn.bandwidth)
        est = rates.mc_r1_exact(p_src, g_sr, scn.p_jam_max, sic, scn.noise, scn.bandwidth,
                                samples, seed + i)
        out.append(Check("jensen", f"config[{i}]", bound - est.value, 3.0 * est.se))
        tight = rates.r1_sec_slot(p_src, g_sr, scn.p_jam_eff, 0.0, scn.noise, scn.bandwidth)
        exact = rates.mc_r1_exact(p_src, g_sr, scn.p_jam_max, 0.0, scn.noise, scn.bandwidth,
                                  samples, seed + i)
        out.append(Check("jensen", f"config[{i}]-no-self-interference",
                         abs(exact.value - tight) + exact.se, 0.0))
    return out


def verify_energy_bound(scn: Scenario, points: int = 100_000) -> list[Check]:
    v = np.linspace(0.5, 60.0, points)
    gap = energy.propulsion_power_approx(v, scn.rotor) - energy.propulsion_power_exact(v, scn.rotor)
    k = int(np.argmin(gap))
    return [Check("energy-bound", f"approx>=exact (worst at v={v[k]:.4f} m/s)",
                  max(-float(gap[k]), 0.0), 0.0)]


def random_pdsa_instance(scn: Scenario, rng: np.random.Generator):
    """Random rates, legs, period and price with a non-empty phase-split interval."""
    while True:
        n1, n2 = (int(k) for k in rng.integers(5, 51, 2))
        period = float(rng.uniform(20.0, 200.0))
        legs = rng.uniform(1.0, 30.0, n1 + n2)
        s = scn.replace(n1=n1, n2=n2, period=period)
        b1 = n1 * float(legs[:n1].max()) / (period * s.v_max)
        b2 = n2 * float(legs[n1:].max()) / (period * s.v_max)
        if b1 + b2 < 0.95:
            break
    rho1, rho2 = (float(r) for r in rng.uniform(0.1, 20.0, 2))
    phi = float(10.0 ** rng.uniform(-4.0, -1.0))
    en = energy.alpha_energy_coeffs(legs, s)
    try:
        a1, a2, a3 = pdsa.hat_alphas(rho1, rho2, en, phi / period)
    except Exception:  # noqa: BLE001 - unbracketed roots take the fallback path
        a1 = a3 = math.nan
        a2 = rho2 / (rho1 + rho2)
    coeffs = pdsa.PdsaCoefficients(rho1, rho2, b1, b2, a1, a2, a3, period)
    return coeffs, en, phi


def verify_pdsa(scn: Scenario, seed: int = 0, instances: int = 50,
                step: float = 1e-4) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(instances):
        coeffs, en, phi = random_pdsa_instance(scn, rng)
        alpha, diag = pdsa.pdsa_alpha(coeffs, en, phi)
        grid_a = pdsa.alpha_grid_oracle(coeffs, en, phi, step)
        best = pdsa.objective(grid_a, coeffs, en, phi)
        got = pdsa.objective(alpha, coeffs, en, phi)
        out.append(Check("pdsa", f"instance[{i}]-objective({diag.case_taken})", best - got,
                         1e-4 * (1.0 + abs(best))))
        kkt_tol = 1e-6 * (1.0 + coeffs.rho1 + coeffs.rho2)
        out.append(Check("pdsa", f"instance[{i}]-kkt",
                         max(diag.stationarity_residual, diag.complementarity_residual), kkt_tol))
    return out


def random_expansion(scn: Scenario, rng: np.random.Generator) -> Solution:
    """Straight line with random lateral jitter and random relay powers."""
    base = initialize(scn)
    w = np.array(base.trajectory.waypoints)
    w[1:-1] += rng.uniform(-100.0, 100.0, (scn.n - 1, 2))
    p_relay = rng.uniform(0.0, scn.p_relay_max, scn.n2)
    powers = type(base.powers)(base.powers.p_src, p_relay)
    return Solution(Trajectory(w), powers, base.alpha)


def verify_linearization(scn: Scenario, seed: int = 0, perturbations: int = 10_000,
                         spread: float = 200.0) -> list[Check]:
    rng = np.random.default_rng(seed)
    exp = random_expansion(scn, rng)
    lin = sca.linearize_terms(exp, scn)
    w0 = lin.waypoints
    slots2_0 = w0[1:][scn.n1:]
    p0 = lin.p_relay

    def rel(a, b):
        return float(np.max(np.abs(a - b) / (1.0 + np.abs(b))))

    out = [
        Check("linearization", "K-tangent", rel(lin.K(p0), sca.target_K(p0, lin.g_re_wc, scn)), 1e-9),
        Check("linearization", "B-tangent", rel(lin.B(w0), sca.target_B(w0)), 1e-9),
        Check("linearization", "F-tangent", rel(lin.F(slots2_0), sca.target_F(slots2_0, scn)), 1e-9),
    ]
    def excess(lo, hi):
        """Largest relative amount by which ``lo`` exceeds ``hi``."""
        return float(np.max((lo - hi) / (1.0 + np.abs(hi))))

    k_gap = b_gap = f_gap = -np.inf
    for _ in range(perturbations):
        p = rng.uniform(0.0, scn.p_relay_max, scn.n2)
        k_gap = max(k_gap, excess(sca.target_K(p, lin.g_re_wc, scn), lin.K(p)))
        w = np.array(w0)
        w[1:-1] += rng.uniform(-spread, spread, (scn.n - 1, 2))
        b_gap = max(b_gap, excess(lin.B(w), sca.target_B(w)))
        q = slots2_0 + rng.uniform(-spread, spread, slots2_0.shape)
        f_gap = max(f_gap, excess(lin.F(q), sca.target_F(q, scn)))
    # Bounds are exact in real arithmetic; the tolerance absorbs rounding only.
    out.append(Check("linearization", "K-over-estimates", k_gap, 1e-12))
    out.append(Check("linearization", "B-under-estimates", b_gap, 1e-12))
    out.append(Check("linearization", "F-under-estimates", f_gap, 1e-12))
    return out


def run_verify(suite: str, scn: Scenario, seed: int = 0) -> list[Check]:
    if suite == "dep":
        return verify_dep(scn, seed)
    if suite == "jensen":
        return verify_jensen(scn, seed)
    if suite == "energy-bound":
        return verify_energy_bound(scn)
    if suite == "pdsa":
        return verify_pdsa(scn, seed)
    if suite == "linearization":
        return verify_linearization(scn, seed)
    raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(VERIFY_SUITES)}")


# ---------------------------------------------------------------------------
# Phase-split oracle at the initial point

ORACLE_COLUMNS = ("method", "alpha", "objective", "case")


def oracle_alpha_rows(scn: Scenario, step: float = 1e-4) -> list[dict]:
    """PDSA versus the grid oracle for the phase split at the initialization."""
    sol = initialize(scn)
    coeffs = pdsa.pdsa_coeffs(sol.trajectory, sol.powers, scn, sol.csee)
    en = energy.alpha_energy_coeffs(sol.trajectory.legs(), scn)
    a_pdsa, diag = pdsa.pdsa_alpha(coeffs, en, sol.csee)
    a_grid = pdsa.alpha_grid_oracle(coeffs, en, sol.csee, step)
    return [
        dict(method="pdsa", alpha=a_pdsa, objective=pdsa.objective(a_pdsa, coeffs, en, sol.csee),
             case=diag.case_taken),
        dict(method="grid", alpha=a_grid, objective=pdsa.objective(a_grid, coeffs, en, sol.csee),
             case=f"step={step!r}"),
    ]

