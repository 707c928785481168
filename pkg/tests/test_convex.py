import numpy as np
import pytest

from uav_csee.convex import Affine, ConvexProgram, check_kkt, solve, zero_multipliers


def _lp():
    p = ConvexProgram("lp")
    x = p.variable("x", 1, lb=0.0)
    p.add_linear_le("cap", x - 1.0)
    p.maximize(x)
    return p


def _log():
    p = ConvexProgram("log")
    x = p.variable("x", 1)
    p.add_linear_le("cap", x - 2.0)
    p.maximize(Affine.const([0.0]), [1.0], x)
    return p


def _projection(c, lo, hi, scale=1.0):
    p = ConvexProgram("proj")
    x = p.variable("x", len(c), lb=lo, ub=hi)
    t = p.variable("t", 1)
    p.add_sqnorm_le("dist", x - np.asarray(c, float), len(c), t)
    p.maximize(t * -scale)
    return p


def test_trivial_lp():
    rep = solve(_lp())
    assert rep.status == "optimal"
    assert rep.values["x"][0] == pytest.approx(1.0, abs=1e-6)
    assert check_kkt(_lp(), rep.x, rep.multipliers).max() <= 1e-10


def test_trivial_log():
    rep = solve(_log())
    assert rep.status == "optimal"
    assert rep.values["x"][0] == pytest.approx(2.0, abs=1e-6)
    assert rep.objective == pytest.approx(np.log(2.0), abs=1e-6)


def test_projection_clips():
    c = np.array([-1.0, 0.5, 3.0])
    rep = solve(_projection(c, 0.0, 1.0))
    assert rep.status == "optimal"
    np.testing.assert_allclose(rep.values["x"], np.clip(c, 0, 1), atol=1e-5)


def test_perturbed_point_is_not_stationary():
    prog = _log()
    rep = solve(prog)
    res = check_kkt(prog, rep.x + 1e-3, rep.multipliers)
    assert res.stationarity > 1e-4
    prog = _projection([-1.0, 0.5, 3.0], 0.0, 1.0)
    rep = solve(prog)
    assert check_kkt(prog, rep.x + 1e-3, rep.multipliers).stationarity > 1e-4


def test_zero_multipliers_give_gradient_norm():
    prog = _log()
    res = check_kkt(prog, np.array([0.8]), zero_multipliers(prog))
    assert res.stationarity == pytest.approx(1 / 0.8, rel=1e-14)
    assert res.feasibility == 0.0 and res.complementarity == 0.0


def test_feasibility_residual_measures_violation():
    prog = _lp()
    assert check_kkt(prog, np.array([1.25]), zero_multipliers(prog)).feasibility == pytest.approx(0.25)


def test_infeasible_program():
    p = ConvexProgram("bad")
    x = p.variable("x", 1, lb=0.0)
    p.add_linear_le("neg", x + 1.0)
    p.maximize(x)
    rep = solve(p)
    assert rep.status == "infeasible"
    assert rep.x is None


def test_iteration_cap_returns_best_iterate():
    rng = np.random.default_rng(0)
    p = ConvexProgram("many-logs")
    x = p.variable("x", 40, lb=0.0, ub=1.0)
    p.add_linear_le("budget", x.sum() - 3.0)
    p.maximize(Affine.const([0.0]), rng.uniform(0.1, 2.0, 40), x * 1.0 + rng.uniform(1e-3, 1, 40))
    rep = solve(p, tol=1e-14, max_iter=1)
    assert rep.status == "max-iterations"
    assert rep.x is not None


def test_solves_are_bit_identical():
    prog = _projection([0.3, -2.0, 7.0, 0.9], -1.0, 1.0)
    a, b = solve(prog), solve(prog)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.objective == b.objective
    assert a.residuals == b.residuals


@pytest.mark.parametrize("scale", [0.01, 0.5, 2.0, 10.0, 49.0, 100.0])
def test_objective_scaling_keeps_argmax(scale):
    c = [0.3, -2.0, 7.0]
    base = solve(_projection(c, -1.0, 1.0))
    # Residuals are absolute: with curvature 2 * scale, a stationarity residual
    # of tol bounds the argmax error by tol / (2 * scale), and a large scale
    # can miss the tolerance on status while the argmax still matches.
    scaled = solve(_projection(c, -1.0, 1.0, scale))
    assert scaled.x is not None
    np.testing.assert_allclose(scaled.values["x"], base.values["x"],
                               atol=1e-6 * max(1.0, 1.0 / scale))
    assert scaled.objective == pytest.approx(scale * base.objective, rel=1e-6)


def test_reported_residuals_agree_with_checker():
    prog = _projection([0.3, -2.0, 7.0], -1.0, 1.0)
    rep = solve(prog)
    chk = check_kkt(prog, rep.x, rep.multipliers)
    for got, rep_v in zip((chk.stationarity, chk.feasibility, chk.complementarity),
                          (rep.kkt_stationarity_residual, rep.kkt_feasibility_residual,
                           rep.kkt_complementarity_residual)):
        assert got <= 10 * rep_v + 1e-12


def test_dump_lists_every_atom():
    text = _projection([1.0, 2.0], 0.0, 1.0).dump()
    assert "var x[2]" in text and "var t[1]" in text
    assert "SqNormLe dist" in text


def test_negative_log_weight_rejected():
    p = ConvexProgram()
    x = p.variable("x", 1)
    with pytest.raises(ValueError):
        p.add_log_ge("bad", [-1.0], x, Affine.const([0.0]))
