"""Consensus ADMM main loop, the LLA outer loop, stopping rules and diagnostics.

The splitting solved here is::

    min  (1/n) sum_m L(r_m) + P1(beta) + P2(b)
    s.t. X_m beta_m + r_m = y_m,   beta_m = beta,   G beta = b

Each iteration runs the central step (beta, b, f) followed by the worker
step (r_m, beta_m, d_m, e_m) on every shard.  ``(beta, r)`` and
``(beta_m, b)`` form the two primal blocks of a standard two-block ADMM,
which is what the residuals and the H-norm below are measured against.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    CentralState,
    InvalidProblemError,
    IterationRecord,
    ProblemSpec,
    Shard,
    SolveReport,
    SolverState,
    init_feasible,
    make_shards,
)
from .prox import loss_value, nonconvex_weight
from .regularizer import (
    apply_FtF,
    apply_G,
    central_b_update,
    central_beta_update,
    central_f_update,
    linearization_constant,
    penalty_value,
)
from .worker import Worker, prepare_factorization

__all__ = [
    "StoppingRule",
    "Residuals",
    "compute_residuals",
    "h_norm_sq",
    "objective_value",
    "solve",
    "lla_solve",
    "lambda_grid",
    "GridPoint",
    "lambda_grid_solve",
    "contraction_diagnostics",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StoppingRule:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-4
    max_iter: int = 5000

    def __post_init__(self):
        if not (self.eps_abs > 0 and self.eps_rel > 0 and self.max_iter > 0):
            raise InvalidProblemError("stopping rule parameters must be positive")

    @classmethod
    def from_options(cls, options) -> "StoppingRule":
        return cls(options.eps_abs, options.eps_rel, int(options.max_iter))


@dataclass(frozen=True)
class Residuals:
    primal: float
    dual: float
    eps_primal: float
    eps_dual: float

    @property
    def converged(self) -> bool:
        return self.primal <= self.eps_primal and self.dual <= self.eps_dual


def _constraint_dim(family, shards) -> int:
    p = shards[0].p
    return sum(s.n for s in shards) + len(shards) * p + family.aux_dim(p)


def _thresholds(rule: StoppingRule, dim: int, Av: float, Bv: float, c: float, duals: float):
    base = math.sqrt(dim) * rule.eps_abs
    return base + rule.eps_rel * max(Av, Bv, c), base + rule.eps_rel * duals


def compute_residuals(problem: ProblemSpec, shards: Sequence[Shard], state: SolverState,
                      previous: SolverState, rule: StoppingRule | None = None) -> Residuals:
    """Primal and dual residuals of ``state`` (``previous`` is the iterate before it).

    primal is the norm of the stacked constraint violations
    ``[X_m beta_m + r_m - y_m; beta_m - beta; G beta - b]``; dual is ``mu``
    times the norm of the change in ``(beta_m, b)`` mapped through the
    constraint operator, i.e. ``mu * sqrt(sum ||dbeta_m||^2 + ||X_m dbeta_m||^2 + ||db||^2)``.
    """
    rule = rule or StoppingRule.from_options(problem.options)
    family, mu = problem.penalty, problem.mu
    c = state.central
    Gb = apply_G(family, c.beta)
    pri = float(np.sum((Gb - c.b) ** 2))
    dua = float(np.sum((c.b - previous.central.b) ** 2))
    Av = float(Gb @ Gb) + len(shards) * float(c.beta @ c.beta)
    Bv = float(c.b @ c.b)
    y_sq = 0.0
    duals = float(c.f @ c.f)
    for s, loc, old in zip(shards, state.locals, previous.locals):
        Xb = s.X @ loc.beta
        pri += float(np.sum((Xb + loc.r - s.y) ** 2) + np.sum((loc.beta - c.beta) ** 2))
        db = loc.beta - old.beta
        Xdb = s.X @ db
        dua += float(db @ db + Xdb @ Xdb)
        Av += float(loc.r @ loc.r)
        Bv += float(loc.beta @ loc.beta + Xb @ Xb)
        y_sq += float(s.y @ s.y)
        duals += float(loc.d @ loc.d + loc.e @ loc.e)
    eps_pri, eps_dual = _thresholds(rule, _constraint_dim(family, shards), math.sqrt(Av), math.sqrt(Bv),
                                    math.sqrt(y_sq), math.sqrt(duals))
    return Residuals(math.sqrt(pri), mu * math.sqrt(dua), eps_pri, eps_dual)


def _S_G_quad(family, dbeta, M: int, mu: float) -> float:
    if not family.fused:
        return 0.0
    eta = linearization_constant(M, mu)
    return float(eta * (dbeta @ dbeta) - mu * (M * (dbeta @ dbeta) + dbeta @ apply_FtF(dbeta)))


def h_norm_sq(delta: SolverState, mu: float, family, shards: Sequence[Shard], M: int | None = None) -> float:
    """Squared H-norm of an iterate difference, evaluated blockwise.

    ``H = blockdiag(S_G, mu B^T B, I / mu)`` over ``(beta; beta_1..beta_M, b;
    f, d_1..d_M, e_1..e_M)``.  ``B^T B`` is block diagonal with blocks
    ``X_m^T X_m + I`` and ``I``, so no matrix is formed.  The local residual
    variables ``r_m`` do not enter.
    """
    M = len(shards) if M is None else M
    c = delta.central
    total = _S_G_quad(family, c.beta, M, mu) + mu * float(c.b @ c.b) + float(c.f @ c.f) / mu
    for s, loc in zip(shards, delta.locals):
        Xdb = s.X @ loc.beta
        total += mu * float(loc.beta @ loc.beta + Xdb @ Xdb)
        total += float(loc.d @ loc.d + loc.e @ loc.e) / mu
    return total


def objective_value(problem: ProblemSpec, X, y, beta, weights=None, nonconvex: bool = False) -> float:
    """``(1/n) sum L(y - X beta) + penalty(beta)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    return loss_value(problem.loss, y - X @ beta, y.size) + penalty_value(problem.penalty, beta, weights, nonconvex)


def _validate_data(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidProblemError(f"X shape {X.shape} does not match y length {y.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidProblemError("X and y must be finite")
    return X, y


def _check_init(init: SolverState, central: CentralState, locals_: list) -> SolverState:
    if len(init.locals) != len(locals_):
        raise InvalidProblemError(f"initial state has {len(init.locals)} shards, problem has {len(locals_)}")
    for name in ("beta", "b", "f"):
        if getattr(init.central, name).shape != getattr(central, name).shape:
            raise InvalidProblemError(f"initial central {name} has the wrong shape")
    for a, b in zip(init.locals, locals_):
        for name in ("r", "beta", "d", "e"):
            if getattr(a, name).shape != getattr(b, name).shape:
                raise InvalidProblemError(f"initial local {name} has the wrong shape")
    return init.copy()


def solve(problem: ProblemSpec, X, y, init: SolverState | None = None, weights=None,
          callback: Callable[[int, SolverState], None] | None = None) -> SolveReport:
    """Run consensus ADMM on ``(X, y)`` split into ``problem.M`` row shards.

    The sparsity part is always treated as a (possibly weighted) l1 norm;
    use :func:`lla_solve` for scad / mcp.

    Parameters
    ----------
    problem : ProblemSpec
    X, y : array_like
    init : SolverState, optional
        Warm start.  Defaults to the feasible zero start.
    weights : ndarray, optional
        Per-coordinate l1 weights replacing ``lambda1``.
    callback : callable, optional
        Called as ``callback(k, state)`` after every iteration with a copy
        of the full iterate.

    Returns
    -------
    SolveReport
        ``converged`` is False when ``max_iter`` is reached.
    """
    t_start = time.perf_counter()
    X, y = _validate_data(X, y)
    opts = problem.options
    rule = StoppingRule.from_options(opts)
    family, mu, M = problem.penalty, float(problem.mu), int(problem.M)
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (X.shape[1],):
            raise InvalidProblemError(f"weights must have length p={X.shape[1]}")
        if np.any(weights < 0):
            raise InvalidProblemError("l1 weights must be nonnegative")
    shards = make_shards(X, y, M)
    central, locals_ = init_feasible(problem, shards)
    if init is not None:
        st = _check_init(init, central, locals_)
        central, locals_ = st.central, st.locals
    shards = [prepare_factorization(s, opts.strategy, opts.cg_tol, opts.cg_max_iter) for s in shards]
    n = X.shape[0]
    workers = [Worker(s, loc, problem.loss, mu, n) for s, loc in zip(shards, locals_)]
    dim = _constraint_dim(family, shards)
    y_norm = float(np.linalg.norm(y))
    sqrt_loss = problem.loss.kind == "square_root"
    threads = min(int(opts.threads), M)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def run(fn, items):
        return list(pool.map(fn, items)) if pool is not None else [fn(i) for i in items]

    timings = {"setup": time.perf_counter() - t_start, "central": 0.0, "local": 0.0}
    history: list = []
    converged = False
    k = 0
    try:
        for k in range(1, rule.max_iter + 1):
            t0 = time.perf_counter()
            beta_bar = np.zeros_like(central.beta)
            e_bar = np.zeros_like(central.beta)
            for w in workers:
                beta_bar += w.local.beta
                e_bar += w.local.e
            beta_bar /= M
            e_bar /= M
            beta = central_beta_update(family, beta_bar, e_bar, central, M, mu, problem.constraint, weights)
            b = central_b_update(family, beta, central.f, mu)
            f = central_f_update(beta, b, central.f, mu, family)
            d_beta, d_b, d_f = beta - central.beta, b - central.b, f - central.f
            central = CentralState(beta, b, f)
            t1 = time.perf_counter()

            gnorm = None
            if sqrt_loss:
                gnorm = math.sqrt(sum(run(lambda w: w.residual_input_sq(), workers)))
            obj_beta = beta if opts.track_objective else None
            steps = run(lambda w: w.step(beta, gnorm, obj_beta), workers)
            t2 = time.perf_counter()

            Gb = apply_G(family, beta)
            gap = Gb - b
            primal = math.sqrt(sum(s.primal_sq for s in steps) + float(gap @ gap))
            dual = math.sqrt(sum(s.dual_sq for s in steps) + mu * mu * float(d_b @ d_b))
            Av = math.sqrt(float(Gb @ Gb) + M * float(beta @ beta) + sum(s.Av_sq for s in steps))
            Bv = math.sqrt(sum(s.Bv_sq for s in steps) + float(b @ b))
            zn = math.sqrt(sum(s.z_sq for s in steps) + float(f @ f))
            eps_pri, eps_dual = _thresholds(rule, dim, Av, Bv, y_norm, zn)
            objective = float("nan")
            if opts.track_objective:
                parts = [s.loss_part for s in steps]
                lv = math.sqrt(sum(parts) / (2.0 * n)) if sqrt_loss else sum(parts)
                objective = lv + penalty_value(family, beta, weights)
            h = float("nan")
            if opts.track_h_norm:
                h = (sum(s.h_sq for s in steps) + _S_G_quad(family, d_beta, M, mu)
                     + mu * float(d_b @ d_b) + float(d_f @ d_f) / mu)
            history.append(IterationRecord(primal, dual, objective, h))
            timings["central"] += t1 - t0
            timings["local"] += t2 - t1
            if callback is not None:
                callback(k, SolverState(central.copy(), [w.local.copy() for w in workers]))
            if primal <= eps_pri and dual <= eps_dual:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    timings["total"] = time.perf_counter() - t_start
    state = SolverState(central, [w.local for w in workers])
    if not converged:
        log.warning("ADMM stopped at max_iter=%d without meeting the stopping rule", rule.max_iter)
    obj = objective_value(problem, X, y, central.beta, weights)
    return SolveReport(central.beta.copy(), k, converged, history, timings, state, obj)


def lla_solve(problem: ProblemSpec, X, y, L: int = 3, warm_start: bool = True,
              init: SolverState | None = None) -> SolveReport:
    """Local linear approximation for scad / mcp sparsity parts.

    Step 1 solves the plain l1 problem.  Each of the ``L`` outer steps then
    re-solves with l1 weights given by the penalty derivative at the
    current ``|beta|``.  The returned report is the last inner solve, with
    ``objective`` set to the nonconvex objective and one snapshot per
    solve in ``outer``.
    """
    family = problem.penalty
    if family.convex:
        raise InvalidProblemError(f"lla_solve needs a scad or mcp sparsity part, got {family.name}")
    if int(L) < 1:
        raise InvalidProblemError("L must be at least 1")
    X, y = _validate_data(X, y)
    convex = problem.replace(penalty=family.as_convex())
    report = solve(convex, X, y, init=init)
    snapshots = [_snapshot(0, problem, X, y, report, None)]
    all_converged = report.converged
    for step in range(1, int(L) + 1):
        w = nonconvex_weight(family.sparsity, family.lambda1, np.abs(report.beta), family.a)
        report = solve(convex, X, y, init=report.state if warm_start else None, weights=w)
        all_converged &= report.converged
        snapshots.append(_snapshot(step, problem, X, y, report, w))
    report.converged = all_converged
    report.outer = snapshots
    report.objective = objective_value(problem, X, y, report.beta, nonconvex=True)
    return report


def _snapshot(step, problem, X, y, report, weights) -> dict:
    return {
        "step": step,
        "beta": report.beta.copy(),
        "weights": None if weights is None else weights.copy(),
        "iterations": report.iterations,
        "converged": report.converged,
        "nnz": report.nnz,
        "objective": objective_value(problem, X, y, report.beta, nonconvex=True),
    }


def lambda_grid(n: int, p: int, size: int, scale: float = 100.0) -> np.ndarray:
    """Uniform grid on ``[0, scale * sqrt(log(p) / n)]``, both endpoints included."""
    if size < 1:
        raise InvalidProblemError("grid size must be at least 1")
    if n < 1 or p < 2:
        raise InvalidProblemError("need n >= 1 and p >= 2 for the default grid")
    top = scale * math.sqrt(math.log(p) / n)
    return np.linspace(0.0, top, size) if size > 1 else np.array([top])


@dataclass
class GridPoint:
    lambda1: float
    lambda2: float
    report: Optional[SolveReport] = None
    error: Optional[str] = None
    nnz: int = -1
    objective: float = float("nan")


def lambda_grid_solve(problem: ProblemSpec, X, y, grid, warm_start: bool = True) -> list:
    """Solve along a sequence of ``(lambda1, lambda2)`` pairs.

    A failing grid point records its error and the sweep continues; the
    next point then starts cold.
    """
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise InvalidProblemError("lambda grid is empty")
    out = []
    state = None
    for l1, l2 in grid:
        try:
            prob = problem.replace(penalty=problem.penalty.with_lambdas(l1, l2))
            if prob.penalty.convex:
                rep = solve(prob, X, y, init=state if warm_start else None)
            else:
                rep = lla_solve(prob, X, y, init=state if warm_start else None)
        except (InvalidProblemError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
            log.warning("grid point (%g, %g) failed: %s", l1, l2, exc)
            out.append(GridPoint(l1, l2, error=str(exc)))
            state = None
            continue
        state = rep.state
        out.append(GridPoint(l1, l2, rep, None, rep.nnz, rep.objective))
    return out


@dataclass
class ContractionTrace:
    """H-norm distances along one run.

    ``dist_sq[k]`` is ``||v^k - v*||_H^2`` for ``k = 0..K`` and
    ``step_sq[k]`` is ``||v^k - v^{k+1}||_H^2`` for ``k = 0..K-1``.
    """

    dist_sq: np.ndarray
    step_sq: np.ndarray
    proxy_iterations: int = 0
    beta_star: np.ndarray = field(default_factory=lambda: np.zeros(0))


def contraction_diagnostics(problem: ProblemSpec, X, y, iterations: int, proxy_factor: int = 5) -> ContractionTrace:
    """Track the H-norm along ``iterations`` steps against a long-run proxy optimum.

    The proxy ``v*`` is the iterate after ``proxy_factor * iterations``
    steps of the same run (stopping rule disabled).
    """
    X, y = _validate_data(X, y)
    long = proxy_factor * int(iterations)
    prob = problem.with_options(eps_abs=1e-300, eps_rel=1e-300, max_iter=long,
                                track_objective=False, track_h_norm=False)
    shards = make_shards(X, y, problem.M)
    central, locals_ = init_feasible(problem, shards)
    states = [SolverState(central, locals_)]

    def keep(k, st):
        if k <= iterations:
            states.append(st)

    rep = solve(prob, X, y, callback=keep)
    star = rep.state
    mu, fam = problem.mu, problem.penalty
    dist = np.array([h_norm_sq(s - star, mu, fam, shards, problem.M) for s in states])
    step = np.array([h_norm_sq(states[k] - states[k + 1], mu, fam, shards, problem.M)
                     for k in range(len(states) - 1)])
    return ContractionTrace(dist, step, rep.iterations, rep.beta)
