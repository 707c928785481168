import math

import numpy as np
import pytest

from uav_csee import channel, sca
from uav_csee.ao import _dinkelbach, evaluate, initial_powers, initialize
from uav_csee.convex import check_kkt, zero_multipliers
from uav_csee.energy import propulsion_power_approx
from uav_csee.errors import DegenerateGeometryError
from uav_csee.experiments import random_expansion
from uav_csee.rates import r1_sec_slot, r2_sec_slot
from uav_csee.scenario import PowerSchedule, Solution, Trajectory, phase_plan


def _rel(a, b):
    return np.max(np.abs(np.asarray(a) - b) / (1.0 + np.abs(b)))


@pytest.fixture(scope="module")
def expansion(small):
    exp = random_expansion(small, np.random.default_rng(3))
    return exp, sca.linearize_terms(exp, small)


def test_tangency(small, expansion):
    exp, lin = expansion
    sl = lin.slacks
    w0 = lin.waypoints
    q2 = w0[1:][small.n1 :]
    assert _rel(lin.K(lin.p_relay), sca.target_K(lin.p_relay, lin.g_re_wc, small)) <= 1e-9
    assert _rel(lin.B(w0), sca.target_B(w0)) <= 1e-9
    assert _rel(lin.C(sl.nu), sca.target_C(sl.nu, lin.jam_noise, small)) <= 1e-9
    assert _rel(lin.D(sl.kappa), sca.target_D(sl.kappa, small)) <= 1e-9
    assert _rel(lin.E(sl.varpi), sca.target_E(sl.varpi, lin.p_relay, small)) <= 1e-9
    assert _rel(lin.F(q2), sca.target_F(q2, small)) <= 1e-9


def test_bound_directions(small, expansion):
    _, lin = expansion
    rng = np.random.default_rng(8)
    sl = lin.slacks
    for _ in range(2000):
        p = rng.uniform(0.0, small.p_relay_max, small.n2)
        assert np.all(lin.K(p) >= sca.target_K(p, lin.g_re_wc, small) - 1e-12)
        w = lin.waypoints + np.vstack([[0, 0], rng.uniform(-200, 200, (small.n - 1, 2)), [0, 0]])
        assert np.all(lin.B(w) <= sca.target_B(w) + 1e-9)
        q = w[1:][small.n1 :]
        assert np.all(lin.F(q) <= sca.target_F(q, small) + 1e-9)
        nu = sl.nu * rng.uniform(0.2, 5.0, small.n1)
        assert np.all(lin.C(nu) >= sca.target_C(nu, lin.jam_noise, small) - 1e-12)
        ka = sl.kappa * rng.uniform(0.2, 5.0, small.n2)
        assert np.all(lin.D(ka) >= sca.target_D(ka, small) - 1e-12)
        vp = sl.varpi * rng.uniform(0.2, 5.0, small.n2)
        assert np.all(lin.E(vp) >= sca.target_E(vp, lin.p_relay, small) - 1e-12)


def test_k_slope_at_zero_power(small, expansion):
    exp, _ = expansion
    zero = Solution(exp.trajectory, PowerSchedule(exp.powers.p_src, np.zeros(small.n2)), exp.alpha)
    lin = sca.linearize_terms(zero, small)
    expect = small.bandwidth * lin.g_re_wc / (small.noise * math.log(2.0))
    np.testing.assert_allclose(lin.K_slope(), expect, rtol=1e-14)


def test_degenerate_geometry(small):
    sol = initialize(small)
    w = np.array(sol.trajectory.waypoints)
    w[small.n1 + 2] = small.q_eaves_est.as_array()
    with pytest.raises(DegenerateGeometryError):
        sca.linearize_terms(Solution(Trajectory(w), sol.powers, sol.alpha), small)


def test_seeded_slacks(small, expansion):
    exp, lin = expansion
    sl = sca.seed_slacks(exp.trajectory, small)
    q2 = exp.trajectory.slots()[small.n1 :]
    np.testing.assert_allclose(small.beta0 / sl.varpi, channel.worst_case_re_gain(q2, small),
                               rtol=1e-14)
    h2 = small.altitude**2
    assert np.all(sl.lam >= exp.trajectory.legs())
    assert min(sl.nu.min(), sl.kappa.min(), sl.theta.min(), sl.varpi.min()) >= h2


def _expansion_point(prog, traj, scn):
    """The trajectory program's variables at ``traj`` with tight slacks."""
    L = sca.LENGTH_UNIT
    sl = sca.seed_slacks(traj, scn)
    legs = traj.legs() / L
    p1 = traj.slots()[: scn.n1]
    vals = {
        "q": traj.waypoints[1:-1].reshape(-1) / L,
        "lam": sl.lam / L,
        "x": legs,
        "s": legs**2,
        "w": legs**3,
        "u": L / sl.lam,
        "nu": sl.nu / L**2,
        "t_w": np.linalg.norm(p1 - scn.q_warden_est.as_array(), axis=1) / L,
        "theta": sl.theta / L**2,
        "kappa": sl.kappa / L**2,
        "varpi": sl.varpi / L**2,
        "omega": np.array([-1e6]),
    }
    x = np.zeros(prog.n)
    for k, s in prog.blocks.items():
        x[s] = vals[k]
    return x


def test_reseeded_expansion_is_feasible(small):
    """Random perturbations of the straight line with re-derived covert powers."""
    rng = np.random.default_rng(21)
    base = initialize(small)
    for _ in range(20):
        w = np.array(base.trajectory.waypoints)
        w[1:-1] += rng.uniform(-20.0, 20.0, (small.n - 1, 2))
        traj = Trajectory(w)
        prev = Solution(traj, initial_powers(traj, small), base.alpha)
        prog, _ = sca.build_trajectory_program(prev.powers, prev.alpha, prev, small, base.csee)
        res = check_kkt(prog, _expansion_point(prog, traj, small), zero_multipliers(prog))
        assert res.feasibility <= 1e-9


def _cap(traj, scn):
    g = channel.gain_set(traj, scn)
    return np.minimum(scn.p_src_max, scn.epsilon_covert * scn.p_jam_max * g.g_rw_wc / g.g_sw_wc)


def test_power_block_source_power_is_grid_optimum(small):
    sol = initialize(small)
    ps = sca.solve_power_subproblem(sol.trajectory, sol.alpha, sol, small, sol.csee)
    g = channel.gain_set(sol.trajectory, small)
    grid = np.linspace(0.0, small.p_src_max, 100_001)
    for n in range(small.n1):
        covert = grid * g.g_sw_wc <= small.epsilon_covert * small.p_jam_max * g.g_rw_wc[n]
        r = r1_sec_slot(grid, g.g_sr[n], small.p_jam_eff, small.sic_level, small.noise)
        best = grid[np.flatnonzero(covert)[np.argmax(r[covert])]]
        assert best <= ps.p_src[n] <= best + grid[1]
    np.testing.assert_allclose(ps.p_src, _cap(sol.trajectory, small), rtol=1.01e-6)


def test_power_block_relay_at_cap_when_destination_stronger(reference):
    scn = reference.replace(n1=1, n2=1)
    sol = initialize(scn)
    g = channel.gain_set(sol.trajectory, scn)
    assert g.g_rd[0] > g.g_re_wc[0]
    ps = sca.solve_power_subproblem(sol.trajectory, sol.alpha, sol, scn, sol.csee)
    assert ps.p_relay[0] == scn.p_relay_max
    assert ps.report.status == "optimal"


def test_blocks_ascend_true_objective(small):
    sol = initialize(small)
    phi = sol.csee
    ps = sca.solve_power_subproblem(sol.trajectory, sol.alpha, sol, small, phi)
    after_p = Solution(sol.trajectory, ps.powers, sol.alpha)
    assert _dinkelbach(small, after_p, phi) >= _dinkelbach(small, sol, phi) - 1e-8
    ts = sca.solve_trajectory_subproblem(ps.powers, sol.alpha, after_p, small, phi)
    after_t = Solution(ts.trajectory, ps.powers, sol.alpha)
    assert _dinkelbach(small, after_t, phi) >= _dinkelbach(small, after_p, phi) - 1e-8
    # The program value is a restriction of the true objective.
    assert _dinkelbach(small, after_t, phi) >= ts.objective - 1e-8


def test_pinned_when_speed_budget_below_floor(reference):
    scn = reference.replace(n1=6, n2=6, q_start=(350.0, 350.0), q_end=(350.0, 350.0), v_max=3.6e-4)
    sol = initialize(scn)
    np.testing.assert_allclose(sol.trajectory.legs(), 1e-3)
    ts = sca.solve_trajectory_subproblem(sol.powers, sol.alpha, sol, scn, sol.csee)
    assert ts.report.solver_status == "pinned"
    assert np.max(np.abs(ts.waypoints - 350.0)) <= 2 * scn.n * 1e-3


def _toy_objective(scn, powers, plan, phi, q1):
    """Trajectory-block objective of the one-slot-per-phase toy, evaluated on an array of waypoints."""
    start, end = scn.q_start.as_array(), scn.q_end.as_array()
    h2 = scn.altitude**2
    g_sr = scn.beta0 / (np.sum((q1 - scn.q_src.as_array()) ** 2, axis=1) + h2)
    r1 = r1_sec_slot(powers.p_src[0], g_sr, scn.p_jam_eff, scn.sic_level, scn.noise)
    g_rd = scn.beta0 / (np.sum((end - scn.q_dst.as_array()) ** 2) + h2)
    gap = max(np.linalg.norm(end - scn.q_eaves_est.as_array()) - scn.r_eaves, 0.0)
    r2 = r2_sec_slot(powers.p_relay[0], g_rd, scn.beta0 / (gap**2 + h2), scn.noise)
    d1 = np.linalg.norm(q1 - start, axis=1)
    d2 = np.linalg.norm(end - q1, axis=1)
    energy = (plan.delta1 * propulsion_power_approx(np.maximum(d1, 1e-3) / plan.delta1, scn.rotor)
              + plan.delta2 * propulsion_power_approx(np.maximum(d2, 1e-3) / plan.delta2, scn.rotor))
    val = np.minimum(plan.phi1 * r1, plan.phi2 * r2) - phi / scn.period * energy
    theta = (np.linalg.norm(q1 - scn.q_warden_est.as_array(), axis=1) + scn.r_warden) ** 2 + h2
    covert = (powers.p_src[0] * channel.worst_case_sw_gain(scn) * theta
              <= scn.epsilon_covert * scn.beta0 * scn.p_jam_max)
    ok = covert & (d1 <= plan.delta1 * scn.v_max) & (d2 <= plan.delta2 * scn.v_max)
    return np.where(ok, val, -np.inf)


def test_toy_matches_waypoint_grid(reference):
    scn = reference.replace(n1=1, n2=1)
    init = initialize(scn)
    # A low source power makes the phase-1 rate binding so the waypoint has a real trade-off.
    powers = PowerSchedule(np.array([5e-5]), init.powers.p_relay)
    prev = Solution(init.trajectory, powers, init.alpha)
    phi = evaluate(scn, prev).csee
    plan = phase_plan(scn, init.alpha)

    xs = np.arange(-1300.0, 2001.0)
    best = -np.inf
    for y in np.arange(-900.0, 1601.0):
        best = max(best, float(np.max(_toy_objective(
            scn, powers, plan, phi, np.column_stack([xs, np.full_like(xs, y)])))))

    for _ in range(10):
        ts = sca.solve_trajectory_subproblem(powers, init.alpha, prev, scn, phi)
        prev = Solution(ts.trajectory, powers, init.alpha)
    got = float(_toy_objective(scn, powers, plan, phi, ts.waypoints[1:2])[0])
    assert best > 0.1
    assert got >= best - 0.01 * abs(best)
