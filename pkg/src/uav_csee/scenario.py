"""Scenario parameters, phase bookkeeping, solution containers and validation.

All containers are frozen; numpy arrays stored on them are made read-only.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, NamedTuple

import numpy as np
import yaml

from . import channel
from .errors import DomainError, ScenarioError

# Minimum leg length (m). Keeps the induced-power surrogate finite.
D_MIN = 1e-3

# Slack tolerance used when deciding whether a solution is feasible.
FEAS_TOL = 1e-9

# Back-off (m) applied to the per-leg speed limit inside the optimizer so that an
# iterate stays strictly feasible after the phase split is re-optimized.
SPEED_MARGIN = 1e-5


class Vec2(NamedTuple):
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RotorParams:
    p0: float
    p1: float
    u_tip: float
    v0: float
    d0: float
    rho_air: float
    rotor_solidity: float
    disc_area: float

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value > 0):
                raise ScenarioError(f"rotor.{f.name} must be finite and > 0, got {value!r}")

    @property
    def parasite_coeff(self) -> float:
        """Coefficient of the cubic-in-speed parasite power term."""
        return 0.5 * self.d0 * self.rho_air * self.rotor_solidity * self.disc_area


_VEC_FIELDS = ("q_src", "q_dst", "q_warden_est", "q_eaves_est", "q_start", "q_end")
_OPTIONAL_DEFAULTS = {
    "bandwidth": 1.0,
    "conv_tol": 0.01,
    "solver_tol": 1e-6,
    "jam_power_in_rate": "max",
}


@dataclass(frozen=True)
class Scenario:
    q_src: Vec2
    q_dst: Vec2
    q_warden_est: Vec2
    q_eaves_est: Vec2
    r_warden: float
    r_eaves: float
    q_start: Vec2
    q_end: Vec2
    altitude: float
    period: float
    n1: int
    n2: int
    p_src_max: float
    p_relay_max: float
    p_jam_max: float
    noise: float
    beta0: float
    eta: float
    sic_level: float
    epsilon_covert: float
    v_max: float
    rotor: RotorParams
    bandwidth: float = 1.0
    conv_tol: float = 0.01
    solver_tol: float = 1e-6
    # Jamming power used inside the deterministic phase-1 rate bound: "max" or "mean".
    jam_power_in_rate: str = "max"

    def __post_init__(self):
        for name in _VEC_FIELDS:
            v = getattr(self, name)
            if not isinstance(v, Vec2):
                v = Vec2(*(float(c) for c in v))
                object.__setattr__(self, name, v)
            if not all(math.isfinite(c) for c in v):
                raise ScenarioError(f"{name} must have finite components")
        if int(self.n1) != self.n1 or int(self.n2) != self.n2 or self.n1 < 1 or self.n2 < 1:
            raise ScenarioError("n1 and n2 must be integers >= 1")
        object.__setattr__(self, "n1", int(self.n1))
        object.__setattr__(self, "n2", int(self.n2))
        positive = ("altitude", "period", "noise", "beta0", "eta", "v_max", "bandwidth",
                    "conv_tol", "solver_tol")
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ScenarioError(f"{name} must be finite and > 0, got {value!r}")
        nonneg = ("r_warden", "r_eaves", "p_src_max", "p_relay_max", "p_jam_max", "sic_level")
        for name in nonneg:
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ScenarioError(f"{name} must be finite and >= 0, got {value!r}")
        if not 0 < self.epsilon_covert < 1:
            raise ScenarioError("epsilon_covert must lie in (0, 1)")
        if self.jam_power_in_rate not in ("max", "mean"):
            raise ScenarioError("jam_power_in_rate must be 'max' or 'mean'")
        if not isinstance(self.rotor, RotorParams):
            raise ScenarioError("rotor must be a RotorParams block")
        dist = math.dist(self.q_src, self.q_warden_est)
        if dist <= self.r_warden:
            raise ScenarioError(
                f"warden ball contains source (distance {dist:.6g} m <= r_warden {self.r_warden:.6g} m)"
            )

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def p_jam_eff(self) -> float:
        """Jamming power plugged into the phase-1 rate bound."""
        return self.p_jam_max if self.jam_power_in_rate == "max" else 0.5 * self.p_jam_max

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# Ingestion / serialization


def _scenario_from_mapping(doc: Mapping[str, Any]) -> Scenario:
    if not isinstance(doc, Mapping):
        raise ScenarioError("scenario document must be a mapping at top level")
    data = dict(doc)
    for lin, db in (("noise", "noise_db"), ("beta0", "beta0_db")):
        if db in data:
            if lin in data:
                raise ScenarioError(f"give either {lin} or {db}, not both")
            data[lin] = 10.0 ** (float(data.pop(db)) / 10.0)
    names = {f.name for f in dataclasses.fields(Scenario)}
    unknown = set(data) - names
    if unknown:
        raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
    missing = names - set(data) - set(_OPTIONAL_DEFAULTS)
    if missing:
        raise ScenarioError(f"missing scenario fields: {sorted(missing)}")
    rotor = data["rotor"]
    if not isinstance(rotor, Mapping):
        raise ScenarioError("rotor must be a nested block")
    rotor_names = {f.name for f in dataclasses.fields(RotorParams)}
    if set(rotor) != rotor_names:
        raise ScenarioError(f"rotor block must have exactly the fields {sorted(rotor_names)}")
    data["rotor"] = RotorParams(**{k: float(v) for k, v in rotor.items()})
    for name in _VEC_FIELDS:
        v = data[name]
        if not (isinstance(v, (list, tuple)) and len(v) == 2):
            raise ScenarioError(f"{name} must be an [x, y] pair")
        try:
            data[name] = Vec2(float(v[0]), float(v[1]))
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{name}: {exc}") from None
    for name, value in list(data.items()):
        if name in _VEC_FIELDS or name in ("rotor", "jam_power_in_rate"):
            continue
        if name in ("n1", "n2"):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ScenarioError(f"{name} must be an integer")
            continue
        try:
            data[name] = float(value)
        except (TypeError, ValueError):
            raise ScenarioError(f"{name} must be numeric, got {value!r}") from None
    return Scenario(**data)


def load_scenario(source: str | Mapping[str, Any]) -> Scenario:
    """Build a validated :class:`Scenario` from YAML text or an already-parsed mapping.

    ``noise_db`` / ``beta0_db`` are accepted in place of the linear fields and
    converted with ``10 ** (dB / 10)``.
    """
    if isinstance(source, Mapping):
        return _scenario_from_mapping(source)
    try:
        doc = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"parse error: {exc}") from None
    return _scenario_from_mapping(doc)


def read_scenario(path: str | Path) -> Scenario:
    return load_scenario(Path(path).read_text(encoding="utf-8"))


def scenario_to_dict(scn: Scenario) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in dataclasses.fields(scn):
        value = getattr(scn, f.name)
        if isinstance(value, Vec2):
            value = [value.x, value.y]
        elif isinstance(value, RotorParams):
            value = dataclasses.asdict(value)
        out[f.name] = value
    return out


def dump_scenario(scn: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scn), sort_keys=False)


def default_scenario_text() -> str:
    return resources.files("uav_csee").joinpath("data/default_scenario.yaml").read_text(encoding="utf-8")


def default_scenario() -> Scenario:
    return load_scenario(default_scenario_text())


# ---------------------------------------------------------------------------
# Phase plan, trajectory, powers, solution


@dataclass(frozen=True)
class PhasePlan:
    alpha: float
    delta1: float
    delta2: float
    phi1: float
    phi2: float


def phase_plan(scn: Scenario, alpha: float) -> PhasePlan:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return PhasePlan(
        alpha=alpha,
        delta1=alpha * scn.period / scn.n1,
        delta2=(1.0 - alpha) * scn.period / scn.n2,
        phi1=alpha / scn.n1,
        phi2=(1.0 - alpha) / scn.n2,
    )


@dataclass(frozen=True)
class Trajectory:
    """N+1 planar waypoints; slot n (1..N) sits at ``waypoints[n]``."""

    waypoints: np.ndarray

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=float)
        if w.ndim != 2 or w.shape[1] != 2 or w.shape[0] < 2:
            raise ValueError("waypoints must have shape (N+1, 2) with N >= 1")
        if not np.all(np.isfinite(w)):
            raise ValueError("waypoints must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    @property
    def n(self) -> int:
        return self.waypoints.shape[0] - 1

    def legs(self) -> np.ndarray:
        """Leg lengths d(n) = |w[n] - w[n-1]| for n = 1..N."""
        return np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)

    def slots(self) -> np.ndarray:
        """Positions at which slots 1..N are evaluated."""
        return self.waypoints[1:]


@dataclass(frozen=True)
class PowerSchedule:
    p_src: np.ndarray
    p_relay: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_src", _frozen_array(self.p_src))
        object.__setattr__(self, "p_relay", _frozen_array(self.p_relay))


@dataclass(frozen=True)
class Solution:
    trajectory: Trajectory
    powers: PowerSchedule
    alpha: float
    csee: float = float("nan")
    acsr_lb: float = float("nan")
    energy: float = float("nan")
    iterations: int = 0
    phi_history: tuple[float, ...] = ()


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class ConstraintCheck:
    """Signed slacks for one constraint family (negative means violated)."""

    name: str
    slacks: np.ndarray

    @property
    def worst(self) -> float:
        return float(np.min(self.slacks)) if self.slacks.size else float("inf")

    @property
    def worst_index(self) -> int:
        return int(np.argmin(self.slacks)) if self.slacks.size else -1

    def violated(self, tol: float = FEAS_TOL) -> np.ndarray:
        return np.flatnonzero(self.slacks < -tol)


@dataclass(frozen=True)
class ValidationReport:
    checks: dict[str, ConstraintCheck] = field(default_factory=dict)

    def __getitem__(self, name: str) -> ConstraintCheck:
        return self.checks[name]

    def violations(self, tol: float = FEAS_TOL) -> list[str]:
        return [name for name, c in self.checks.items() if c.worst < -tol]

    @property
    def feasible(self) -> bool:
        return not self.violations()


def validate_solution(scn: Scenario, sol: Solution) -> ValidationReport:
    """Signed slack of every problem constraint at ``sol``.

    Covertness is judged with the worst-case gains over the uncertainty discs;
    its slack is expressed in watts of source power.
    """
    w = sol.trajectory.waypoints
    n1, n2 = scn.n1, scn.n2
    checks: dict[str, ConstraintCheck] = {}

    def add(name, slacks):
        checks[name] = ConstraintCheck(name, _frozen_array(np.atleast_1d(slacks)))

    p_src = np.asarray(sol.powers.p_src, dtype=float)
    p_relay = np.asarray(sol.powers.p_relay, dtype=float)
    add("alpha_range", [sol.alpha, 1.0 - sol.alpha])
    if w.shape[0] != scn.n + 1 or p_src.shape != (n1,) or p_relay.shape != (n2,):
        add("shape", [-1.0])
        return ValidationReport(checks)

    add("src_power", np.minimum(p_src, scn.p_src_max - p_src))
    add("relay_power", np.minimum(p_relay, scn.p_relay_max - p_relay))

    g_sw = channel.worst_case_sw_gain(scn)
    g_rw = channel.worst_case_rw_gain(w[1 : n1 + 1], scn)
    cap = scn.epsilon_covert * scn.p_jam_max * g_rw / g_sw
    add("covert", cap - p_src)

    add("endpoints", [-math.dist(w[0], scn.q_start), -math.dist(w[-1], scn.q_end)])

    legs = sol.trajectory.legs()
    if 0.0 < sol.alpha < 1.0:
        plan = phase_plan(scn, sol.alpha)
        add("speed_phase1", plan.delta1 * scn.v_max - legs[:n1])
        add("speed_phase2", plan.delta2 * scn.v_max - legs[n1:])
    else:
        add("speed_phase1", -legs[:n1] - 1.0)
        add("speed_phase2", -legs[n1:] - 1.0)
    return ValidationReport(checks)
