"""Structured convex programs, a solver contract and an independent KKT checker.

A :class:`ConvexProgram` maximizes ``c.x + d + sum_i w_i log(a_i.x + b_i)``
over a flat variable vector with box bounds, subject to batches of

* affine rows ``A x + b <= 0``,
* norm rows ``||A_k x + b_k|| <= c_k.x + d_k``,
* squared-norm rows ``||A_k x + b_k||^2 <= c_k.x + d_k``,
* log-sum rows ``sum_i w_i log(a_i.x + b_i) >= c.x + d``.

Programs are solved through cvxpy (Clarabel backend). :func:`solve` reports
KKT residuals computed with cvxpy's expression gradients; :func:`check_kkt`
re-derives them from the atom definitions with plain numpy so it can serve as
an oracle for the solver.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field
from typing import Literal

import cvxpy as cp
import numpy as np
import scipy.sparse as sp
from scipy.optimize import nnls

# Lower bound enforced on every log argument.
MARGIN_MIN = 1e-12


class Affine:
    """Stack of affine forms ``A @ x + b`` over a program's flat variable vector."""

    __slots__ = ("A", "b")

    def __init__(self, A, b):
        self.A = sp.csr_array(A)
        self.b = np.asarray(b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.size:
            raise ValueError("row count mismatch between A and b")

    @classmethod
    def const(cls, values, width: int = 0) -> "Affine":
        b = np.atleast_1d(np.asarray(values, dtype=float)).reshape(-1)
        return cls(sp.csr_array((b.size, width)), b)

    @property
    def size(self) -> int:
        return self.b.size

    @property
    def width(self) -> int:
        return self.A.shape[1]

    def padded(self, width: int) -> sp.csr_array:
        if self.width == width:
            return self.A
        if self.width > width:
            raise ValueError("expression wider than requested width")
        return sp.csr_array(sp.hstack([self.A, sp.csr_array((self.size, width - self.width))]))

    def _coerce(self, other) -> "Affine":
        if isinstance(other, Affine):
            return other
        vals = np.broadcast_to(np.asarray(other, dtype=float), (self.size,))
        return Affine.const(vals)

    def __add__(self, other):
        o = self._coerce(other)
        if o.size == 1 and self.size > 1:
            o = o.repeat(self.size)
        elif self.size == 1 and o.size > 1:
            return self.repeat(o.size) + o
        w = max(self.width, o.width)
        return Affine(self.padded(w) + o.padded(w), self.b + o.b)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.A, -self.b)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, k):
        k = np.asarray(k, dtype=float)
        if k.ndim == 0:
            return Affine(self.A * float(k), self.b * float(k))
        k = np.broadcast_to(k.reshape(-1), (self.size,))
        return Affine(sp.diags_array(k) @ self.A, self.b * k)

    __rmul__ = __mul__

    def __getitem__(self, idx) -> "Affine":
        rows = np.arange(self.size)[idx]
        rows = np.atleast_1d(rows)
        return Affine(self.A[rows, :], self.b[rows])

    def repeat(self, m: int) -> "Affine":
        if self.size != 1:
            raise ValueError("only single-row expressions can be repeated")
        return self[np.zeros(m, dtype=int)]

    def sum(self) -> "Affine":
        return Affine(sp.csr_array(self.A.sum(axis=0).reshape(1, -1)), [self.b.sum()])

    def dot(self, w) -> "Affine":
        w = np.asarray(w, dtype=float).reshape(1, -1)
        return Affine(sp.csr_array(w @ self.A), [float(w @ self.b)])

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.padded(x.size) @ x + self.b


def vstack(*exprs: Affine) -> Affine:
    w = max(e.width for e in exprs)
    return Affine(sp.vstack([e.padded(w) for e in exprs]), np.concatenate([e.b for e in exprs]))


def interleave(*exprs: Affine) -> Affine:
    """Row-interleave equally sized expressions: row k of each, then row k+1 ..."""
    m = exprs[0].size
    if any(e.size != m for e in exprs):
        raise ValueError("interleave needs equally sized expressions")
    stacked = vstack(*exprs)
    order = np.arange(m * len(exprs)).reshape(len(exprs), m).T.reshape(-1)
    return stacked[order]


@dataclass
class LinearLe:
    name: str
    expr: Affine

    @property
    def rows(self) -> int:
        return self.expr.size


@dataclass
class NormLe:
    name: str
    vec: Affine
    block: int
    rhs: Affine
    squared: bool = False

    def __post_init__(self):
        if self.vec.size != self.block * self.rhs.size:
            raise ValueError(f"{self.name}: vec has {self.vec.size} rows, expected "
                             f"{self.block} x {self.rhs.size}")

    @property
    def rows(self) -> int:
        return self.rhs.size


@dataclass
class LogSumGe:
    name: str
    weights: np.ndarray
    args: Affine
    rhs: Affine

    @property
    def rows(self) -> int:
        return 1


Constraint = LinearLe | NormLe | LogSumGe


@dataclass
class ConvexProgram:
    name: str = "program"
    blocks: dict[str, slice] = field(default_factory=dict)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    obj_linear: Affine = field(default_factory=lambda: Affine.const([0.0]))
    obj_log_weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    obj_log_args: Affine | None = None

    @property
    def n(self) -> int:
        return len(self.lb)

    def variable(self, name: str, size: int, lb=-np.inf, ub=np.inf) -> Affine:
        if name in self.blocks:
            raise ValueError(f"duplicate variable {name!r}")
        start = self.n
        self.blocks[name] = slice(start, start + size)
        self.lb.extend(np.broadcast_to(np.asarray(lb, dtype=float), (size,)).tolist())
        self.ub.extend(np.broadcast_to(np.asarray(ub, dtype=float), (size,)).tolist())
        A = sp.csr_array((np.ones(size), (np.arange(size), np.arange(start, start + size))),
                         shape=(size, start + size))
        return Affine(A, np.zeros(size))

    def add_linear_le(self, name: str, expr: Affine) -> None:
        self.constraints.append(LinearLe(name, expr))

    def add_norm_le(self, name: str, vec: Affine, block: int, rhs: Affine) -> None:
        self.constraints.append(NormLe(name, vec, block, rhs, squared=False))

    def add_sqnorm_le(self, name: str, vec: Affine, block: int, rhs: Affine) -> None:
        self.constraints.append(NormLe(name, vec, block, rhs, squared=True))

    def add_log_ge(self, name: str, weights, args: Affine, rhs: Affine) -> None:
        w = np.broadcast_to(np.asarray(weights, dtype=float), (args.size,)).copy()
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("log weights must be finite and >= 0")
        self.constraints.append(LogSumGe(name, w, args, rhs))
        self.constraints.append(LinearLe(f"{name}:margin", MARGIN_MIN - args))

    def maximize(self, linear: Affine, log_weights=None, log_args: Affine | None = None) -> None:
        if linear.size != 1:
            raise ValueError("objective linear part must be a single row")
        self.obj_linear = linear
        if log_args is not None:
            w = np.broadcast_to(np.asarray(log_weights, dtype=float), (log_args.size,)).copy()
            if np.any(w < 0):
                raise ValueError("objective log weights must be >= 0")
            self.obj_log_weights = w
            self.obj_log_args = log_args
            self.constraints.append(LinearLe("objective:margin", MARGIN_MIN - log_args))

    def unpack(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {k: np.array(x[s]) for k, s in self.blocks.items()}

    def objective_value(self, x: np.ndarray) -> float:
        val = float(self.obj_linear.value(x)[0])
        if self.obj_log_args is not None:
            val += float(self.obj_log_weights @ np.log(self.obj_log_args.value(x)))
        return val

    def dump(self) -> str:
        """Plain-text listing of variables, objective atoms and constraints."""
        out = io.StringIO()
        out.write(f"program {self.name}: {self.n} variables\n")
        for k, s in self.blocks.items():
            out.write(f"  var {k}[{s.stop - s.start}] lb={self.lb[s][:3]}.. ub={self.ub[s][:3]}..\n")
        nlog = 0 if self.obj_log_args is None else self.obj_log_args.size
        out.write(f"maximize linear(nnz={self.obj_linear.A.nnz}) + {nlog} log terms\n")
        for c in self.constraints:
            kind = type(c).__name__
            if isinstance(c, NormLe):
                kind = "SqNormLe" if c.squared else "NormLe"
                out.write(f"  {kind} {c.name}: {c.rows} rows of block {c.block}\n")
            elif isinstance(c, LogSumGe):
                out.write(f"  {kind} {c.name}: {c.args.size} log terms\n")
            else:
                out.write(f"  {kind} {c.name}: {c.rows} rows\n")
        return out.getvalue()


@dataclass
class Multipliers:
    constraints: list[np.ndarray]
    lower: np.ndarray
    upper: np.ndarray


@dataclass
class KktResiduals:
    stationarity: float
    feasibility: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.feasibility, self.complementarity)


@dataclass
class SolveReport:
    status: Literal["optimal", "infeasible", "max-iterations"]
    x: np.ndarray | None
    values: dict[str, np.ndarray]
    objective: float
    kkt_stationarity_residual: float
    kkt_feasibility_residual: float
    kkt_complementarity_residual: float
    multipliers: Multipliers | None
    certificate: Multipliers | None = None
    solver_status: str = ""

    @property
    def residuals(self) -> KktResiduals:
        return KktResiduals(self.kkt_stationarity_residual, self.kkt_feasibility_residual,
                            self.kkt_complementarity_residual)


# ---------------------------------------------------------------------------
# Solving through cvxpy


def _cvx_expr(e: Affine, x: cp.Variable, n: int):
    return e.padded(n) @ x + e.b


def _build(prog: ConvexProgram):
    n = prog.n
    x = cp.Variable(n)
    cons = []
    for c in prog.constraints:
        if isinstance(c, LinearLe):
            cons.append(_cvx_expr(c.expr, x, n) <= 0)
        elif isinstance(c, NormLe):
            v = cp.reshape(_cvx_expr(c.vec, x, n), (c.rows, c.block), order="C")
            lhs = cp.sum(cp.square(v), axis=1) if c.squared else cp.norm(v, 2, axis=1)
            cons.append(lhs <= _cvx_expr(c.rhs, x, n))
        else:
            logs = c.weights @ cp.log(_cvx_expr(c.args, x, n))
            cons.append(_cvx_expr(c.rhs, x, n) <= logs)
    lb = np.asarray(prog.lb)
    ub = np.asarray(prog.ub)
    lo_idx = np.flatnonzero(np.isfinite(lb))
    hi_idx = np.flatnonzero(np.isfinite(ub))
    lo_con = lb[lo_idx] <= x[lo_idx] if lo_idx.size else None
    hi_con = x[hi_idx] <= ub[hi_idx] if hi_idx.size else None
    obj = _cvx_expr(prog.obj_linear, x, n)[0]
    if prog.obj_log_args is not None and prog.obj_log_args.size:
        obj = obj + prog.obj_log_weights @ cp.log(_cvx_expr(prog.obj_log_args, x, n))
    extra = [c for c in (lo_con, hi_con) if c is not None]
    problem = cp.Problem(cp.Maximize(obj), cons + extra)
    return problem, x, cons, (lo_idx, lo_con), (hi_idx, hi_con)


def _grad(expr, x: cp.Variable, n: int, rows: int) -> np.ndarray:
    g = expr.grad.get(x) if expr.grad is not None else None
    if g is None:
        return np.zeros((n, rows))
    return np.asarray(g.todense() if sp.issparse(g) else g).reshape(n, rows)


def _cvx_residuals(problem, x, cons, lo, hi, n) -> tuple[KktResiduals, Multipliers]:
    grad_l = _grad(problem.objective.expr, x, n, 1)[:, 0].copy()
    feas = 0.0
    comp = 0.0
    mults = []
    for con in cons:
        dual = np.atleast_1d(np.asarray(con.dual_value, dtype=float)).reshape(-1)
        gval = np.atleast_1d(np.asarray(con.expr.value, dtype=float)).reshape(-1)
        grad_l -= _grad(con.expr, x, n, gval.size) @ dual
        feas = max(feas, float(np.max(gval, initial=0.0)))
        comp = max(comp, float(np.max(np.abs(dual * gval), initial=0.0)))
        mults.append(dual)
    lower = np.zeros(n)
    upper = np.zeros(n)
    for (idx, con), store, sign in ((lo, lower, -1.0), (hi, upper, 1.0)):
        if con is None:
            continue
        dual = np.asarray(con.dual_value, dtype=float).reshape(-1)
        gval = np.asarray(con.expr.value, dtype=float).reshape(-1)
        store[idx] = dual
        grad_l[idx] -= sign * dual
        feas = max(feas, float(np.max(gval, initial=0.0)))
        comp = max(comp, float(np.max(np.abs(dual * gval), initial=0.0)))
    res = KktResiduals(float(np.max(np.abs(grad_l), initial=0.0)), feas, comp)
    return res, Multipliers(mults, lower, upper)


def _polish_duals(problem, x, cons, lo, hi, n) -> tuple[KktResiduals, Multipliers]:
    """Refit multipliers at the returned primal point.

    Stacked NNLS over all rows: ``||grad f - J mu||^2 + ||diag(|g|) mu||^2``,
    which trades stationarity against complementarity. Feasibility is a
    property of ``x`` and does not change.
    """
    grad_f = _grad(problem.objective.expr, x, n, 1)[:, 0]
    blocks, gvals, sizes = [], [], []
    for con in cons:
        gval = np.atleast_1d(np.asarray(con.expr.value, dtype=float)).reshape(-1)
        blocks.append(_grad(con.expr, x, n, gval.size))
        gvals.append(gval)
        sizes.append(gval.size)
    for (idx, con), sign in ((lo, -1.0), (hi, 1.0)):
        k = idx.size if con is not None else 0
        J = np.zeros((n, k))
        if k:
            J[idx, np.arange(k)] = sign
            gvals.append(np.asarray(con.expr.value, dtype=float).reshape(-1))
        else:
            gvals.append(np.zeros(0))
        blocks.append(J)
        sizes.append(k)
    J = np.hstack(blocks)
    g = np.concatenate(gvals)
    mu, _ = nnls(np.vstack([J, np.diag(np.abs(g))]), np.concatenate([grad_f, np.zeros(g.size)]),
                 maxiter=50 * max(g.size, 1))
    parts = np.split(mu, np.cumsum(sizes)[:-1])
    lower = np.zeros(n)
    upper = np.zeros(n)
    if lo[1] is not None:
        lower[lo[0]] = parts[len(cons)]
    if hi[1] is not None:
        upper[hi[0]] = parts[len(cons) + 1]
    res = KktResiduals(float(np.max(np.abs(grad_f - J @ mu), initial=0.0)),
                       float(np.max(g, initial=0.0)),
                       float(np.max(np.abs(mu * g), initial=0.0)))
    return res, Multipliers(parts[: len(cons)], lower, upper)


_TIGHT = dict(tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10, tol_ktratio=1e-8)
_TIGHTER = dict(tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12, tol_ktratio=1e-10)


def solve(prog: ConvexProgram, tol: float = 1e-6, max_iter: int = 200) -> SolveReport:
    """Maximize ``prog``; ``status == "optimal"`` guarantees all KKT residuals <= ``tol``.

    Clarabel can stall early on a first solve and still finish on a repeat
    solve of the same problem object, so the ladder re-solves one problem
    rather than rebuilding it.
    """
    problem, x, cons, lo, hi = _build(prog)
    best: SolveReport | None = None
    for settings, iters in ((_TIGHT, max_iter), (_TIGHT, 2 * max_iter), (_TIGHTER, 2 * max_iter)):
        try:
            with warnings.catch_warnings():
                # Inaccurate solves are judged by the residual check below.
                warnings.simplefilter("ignore", UserWarning)
                problem.solve(solver=cp.CLARABEL, max_iter=iters, **settings)
        except cp.SolverError as exc:
            best = best or SolveReport("max-iterations", None, {}, float("nan"), np.inf, np.inf,
                                       np.inf, None, solver_status=f"error: {exc}")
            continue
        status = problem.status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            cert = None
            try:
                cert = Multipliers(
                    [np.atleast_1d(np.asarray(c.dual_value, dtype=float)) for c in cons],
                    np.zeros(prog.n), np.zeros(prog.n))
            except (TypeError, ValueError):
                pass
            return SolveReport("infeasible", None, {}, float("nan"), np.inf, np.inf, np.inf,
                               None, certificate=cert, solver_status=status)
        if x.value is None:
            continue
        res, mult = _cvx_residuals(problem, x, cons, lo, hi, prog.n)
        if res.max() > tol and status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            # Interior-point duals can lag the primal when the solver stalls.
            pres, pmult = _polish_duals(problem, x, cons, lo, hi, prog.n)
            if pres.max() < res.max():
                res, mult = pres, pmult
        xv = np.array(x.value, dtype=float)
        ok = status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) and res.max() <= tol
        report = SolveReport(
            "optimal" if ok else "max-iterations", xv, prog.unpack(xv), prog.objective_value(xv),
            res.stationarity, res.feasibility, res.complementarity, mult, solver_status=status)
        if ok:
            return report
        if best is None or best.x is None or res.max() < best.residuals.max():
            best = report
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# Independent KKT check


def _constraint_rows(c: Constraint, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values ``g`` (feasible when <= 0) and gradients (rows x n) of one constraint."""
    n = x.size
    if isinstance(c, LinearLe):
        A = c.expr.padded(n)
        return A @ x + c.expr.b, A.toarray()
    if isinstance(c, NormLe):
        A = c.vec.padded(n).toarray()
        v = A @ x + c.vec.b
        C = c.rhs.padded(n).toarray()
        rhs = C @ x + c.rhs.b
        g = np.empty(c.rows)
        G = np.empty((c.rows, n))
        for k in range(c.rows):
            sl = slice(k * c.block, (k + 1) * c.block)
            vk = v[sl]
            if c.squared:
                g[k] = vk @ vk - rhs[k]
                G[k] = 2.0 * vk @ A[sl] - C[k]
            else:
                nv = float(np.sqrt(vk @ vk))
                g[k] = nv - rhs[k]
                G[k] = (vk @ A[sl] / nv if nv > 0 else 0.0) - C[k]
        return g, G
    A = c.args.padded(n).toarray()
    a = A @ x + c.args.b
    C = c.rhs.padded(n).toarray()
    g = C @ x + c.rhs.b - c.weights @ np.log(a)
    G = C - (c.weights / a) @ A
    return np.atleast_1d(g), G.reshape(1, n)


def check_kkt(prog: ConvexProgram, x: np.ndarray, multipliers: Multipliers) -> KktResiduals:
    """KKT residuals of ``x`` with the given multipliers, assembled from the atom formulas.

    stationarity ``= ||grad f - sum mu_i grad g_i||_inf``; feasibility is the
    largest positive ``g_i``; complementarity is ``max |mu_i g_i|``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    grad = prog.obj_linear.padded(n).toarray()[0].copy()
    if prog.obj_log_args is not None:
        A = prog.obj_log_args.padded(n).toarray()
        grad += (prog.obj_log_weights / (A @ x + prog.obj_log_args.b)) @ A
    feas = 0.0
    comp = 0.0
    for c, mu in zip(prog.constraints, multipliers.constraints):
        g, G = _constraint_rows(c, x)
        mu = np.asarray(mu, dtype=float).reshape(-1)
        grad -= mu @ G
        feas = max(feas, float(np.max(g, initial=0.0)))
        comp = max(comp, float(np.max(np.abs(mu * g), initial=0.0)))
    lb = np.asarray(prog.lb)
    ub = np.asarray(prog.ub)
    for bound, mu, sign in ((lb, multipliers.lower, -1.0), (ub, multipliers.upper, 1.0)):
        fin = np.isfinite(bound)
        g = np.where(fin, sign * (x - bound), 0.0)
        grad -= sign * np.where(fin, mu, 0.0)
        feas = max(feas, float(np.max(g, initial=0.0)))
        comp = max(comp, float(np.max(np.abs(np.where(fin, mu, 0.0) * g), initial=0.0)))
    return KktResiduals(float(np.max(np.abs(grad), initial=0.0)), feas, comp)


def zero_multipliers(prog: ConvexProgram) -> Multipliers:
    return Multipliers([np.zeros(c.rows) for c in prog.constraints], np.zeros(prog.n),
                       np.zeros(prog.n))
