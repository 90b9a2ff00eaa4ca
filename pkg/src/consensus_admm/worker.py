"""Local-machine updates for one shard.

Each worker owns one :class:`~consensus_admm.core.Shard` and its
:class:`~consensus_admm.core.LocalState`.  Per iteration it receives the
broadcast central coefficient vector and performs, in order:

1. residual step   r_m    <- prox_{L/n}(y_m + d_m/mu - X_m beta_m)   (old beta_m)
2. local solve     beta_m <- (X_m^T X_m + I)^{-1} [X_m^T(y_m + d_m/mu - r_m) + beta + e_m/mu]
3. dual steps      d_m    <- d_m - mu (X_m beta_m + r_m - y_m)
                   e_m    <- e_m - mu (beta_m - beta)

The linear system in step 2 is factorized once per solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import InvalidProblemError, LocalState, LossKind, Shard
from .prox import loss_value, prox_loss

__all__ = [
    "STRATEGIES",
    "CGConvergenceError",
    "select_strategy",
    "GramFactor",
    "WoodburyFactor",
    "CGSolver",
    "prepare_factorization",
    "conjugate_gradient",
    "update_residual",
    "update_local_beta",
    "update_local_duals",
    "Worker",
]

STRATEGIES = ("direct_gram", "woodbury", "conjugate_gradient")

# auto-selection switches from Woodbury to CG above this many shard rows
WOODBURY_MAX_ROWS = 2000


class CGConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual_norm: float):
        super().__init__(f"conjugate gradient did not converge in {iterations} iterations "
                         f"(final residual norm {residual_norm:.3e})")
        self.iterations = iterations
        self.residual_norm = residual_norm


def select_strategy(n_m: int, p: int) -> str:
    if p <= n_m:
        return "direct_gram"
    if n_m <= WOODBURY_MAX_ROWS:
        return "woodbury"
    return "conjugate_gradient"


class GramFactor:
    """Cholesky factor of ``X^T X + I`` (p x p)."""

    strategy = "direct_gram"

    def __init__(self, X: np.ndarray):
        A = X.T @ X
        A[np.diag_indices_from(A)] += 1.0
        self._c = cho_factor(A, lower=True, check_finite=False)

    def solve(self, rhs: np.ndarray, x0=None) -> np.ndarray:
        return cho_solve(self._c, rhs, check_finite=False)


class WoodburyFactor:
    """Applies ``(X^T X + I)^{-1} = I - X^T (I + X X^T)^{-1} X`` (n_m x n_m factor)."""

    strategy = "woodbury"

    def __init__(self, X: np.ndarray):
        self._X = X
        K = X @ X.T
        K[np.diag_indices_from(K)] += 1.0
        self._c = cho_factor(K, lower=True, check_finite=False)

    def solve(self, rhs: np.ndarray, x0=None) -> np.ndarray:
        X = self._X
        return rhs - X.T @ cho_solve(self._c, X @ rhs, check_finite=False)


def conjugate_gradient(matvec, rhs: np.ndarray, x0: np.ndarray, tol: float, max_iter: int):
    """Plain CG for a symmetric positive definite operator.

    Stops when ``||A x - rhs|| <= tol * ||rhs||``.  Returns ``(x, iterations)``;
    raises :class:`CGConvergenceError` after ``max_iter`` iterations.
    """
    x = np.array(x0, dtype=float, copy=True)
    r = rhs - matvec(x)
    bnorm = np.linalg.norm(rhs)
    target = tol * bnorm if bnorm > 0 else tol
    rs = float(r @ r)
    if np.sqrt(rs) <= target:
        return x, 0
    d = r.copy()
    for it in range(1, max_iter + 1):
        Ad = matvec(d)
        alpha = rs / float(d @ Ad)
        x += alpha * d
        r -= alpha * Ad
        rs_new = float(r @ r)
        if np.sqrt(rs_new) <= target:
            return x, it
        d = r + (rs_new / rs) * d
        rs = rs_new
    raise CGConvergenceError(max_iter, float(np.sqrt(rs)))


class CGSolver:
    """Matrix-free CG on ``X^T X + I`` with warm starts."""

    strategy = "conjugate_gradient"

    def __init__(self, X: np.ndarray, tol: float = 1e-10, max_iter: int | None = None):
        self._X = X
        self.tol = tol
        self.max_iter = max_iter if max_iter is not None else 10 * X.shape[1]
        self.last_iterations = 0

    def _matvec(self, v):
        return self._X.T @ (self._X @ v) + v

    def solve(self, rhs: np.ndarray, x0=None) -> np.ndarray:
        if x0 is None:
            x0 = np.zeros_like(rhs)
        x, self.last_iterations = conjugate_gradient(self._matvec, rhs, x0, self.tol, self.max_iter)
        return x


def prepare_factorization(shard: Shard, strategy: str = "auto", cg_tol: float = 1e-10,
                          cg_max_iter: int | None = None) -> Shard:
    """Return a copy of ``shard`` carrying the cached linear-system solver."""
    if strategy == "auto":
        strategy = select_strategy(shard.n, shard.p)
    if strategy == "direct_gram":
        factor = GramFactor(shard.X)
    elif strategy == "woodbury":
        factor = WoodburyFactor(shard.X)
    elif strategy == "conjugate_gradient":
        factor = CGSolver(shard.X, cg_tol, cg_max_iter)
    else:
        raise InvalidProblemError(f"unknown linear-solver strategy {strategy!r}")
    return Shard(shard.X, shard.y, factor)


def _residual_input(shard: Shard, local: LocalState, mu: float, Xbeta=None) -> np.ndarray:
    if Xbeta is None:
        Xbeta = shard.X @ local.beta
    return shard.y + local.d / mu - Xbeta


def update_residual(shard: Shard, local: LocalState, mu: float, loss: LossKind, n_total: int,
                    global_norm: float | None = None, Xbeta=None) -> np.ndarray:
    """Residual step using the *current* (pre-update) local coefficients.

    For the square-root loss, pass ``global_norm``: the norm of the stacked
    prox argument over all shards, so the sharded step equals the prox of
    the global loss.
    """
    x = _residual_input(shard, local, mu, Xbeta)
    return prox_loss(loss, x, mu, n_total, norm=global_norm)


def update_local_beta(shard: Shard, local: LocalState, beta_central, r_new, mu: float, factor=None) -> np.ndarray:
    factor = factor if factor is not None else shard.factor
    if factor is None:
        factor = prepare_factorization(shard).factor
    rhs = shard.X.T @ (shard.y + local.d / mu - r_new) + (beta_central + local.e / mu)
    return factor.solve(rhs, local.beta)


def update_local_duals(shard: Shard, local: LocalState, beta_central, mu: float, Xbeta=None) -> tuple:
    """Dual ascent on both local constraints, using the updated ``r`` and ``beta``."""
    if Xbeta is None:
        Xbeta = shard.X @ local.beta
    d = local.d - mu * (Xbeta + local.r - shard.y)
    e = local.e - mu * (local.beta - beta_central)
    return d, e


@dataclass
class StepResult:
    """What a worker sends back after one iteration."""

    beta: np.ndarray
    e: np.ndarray
    # squared norms used by the coordinator for residuals and stopping
    primal_sq: float
    dual_sq: float
    Av_sq: float
    Bv_sq: float
    z_sq: float
    h_sq: float
    loss_part: float


class Worker:
    """Owns one shard and its local state for the duration of a solve."""

    def __init__(self, shard: Shard, local: LocalState, loss: LossKind, mu: float, n_total: int):
        self.shard = shard
        self.local = local
        self.loss = loss
        self.mu = mu
        self.n_total = n_total
        self.Xbeta = shard.X @ local.beta
        self._x = None

    def residual_input_sq(self) -> float:
        """Square-root loss only: first half-step, returns ``||x_m||^2``."""
        self._x = _residual_input(self.shard, self.local, self.mu, self.Xbeta)
        return float(self._x @ self._x)

    def step(self, beta_central: np.ndarray, global_norm: float | None = None,
             objective_beta: np.ndarray | None = None) -> StepResult:
        shard, old, mu = self.shard, self.local, self.mu
        if self._x is not None:
            x, self._x = self._x, None
        else:
            x = _residual_input(shard, old, mu, self.Xbeta)
        r = prox_loss(self.loss, x, mu, self.n_total, norm=global_norm)
        rhs = shard.X.T @ (shard.y + old.d / mu - r) + (beta_central + old.e / mu)
        beta_m = shard.factor.solve(rhs, old.beta)
        Xbeta = shard.X @ beta_m
        c1 = Xbeta + r - shard.y
        c2 = beta_m - beta_central
        d = old.d - mu * c1
        e = old.e - mu * c2
        dbeta = beta_m - old.beta
        dXbeta = Xbeta - self.Xbeta
        b_part = float(dbeta @ dbeta + dXbeta @ dXbeta)
        dd, de = d - old.d, e - old.e
        loss_part = float("nan")
        if objective_beta is not None:
            resid = shard.y - shard.X @ objective_beta
            if self.loss.kind == "square_root":
                loss_part = float(resid @ resid)
            else:
                loss_part = loss_value(self.loss, resid, self.n_total)
        self.local = LocalState(r, beta_m, d, e)
        self.Xbeta = Xbeta
        return StepResult(
            beta=beta_m,
            e=e,
            primal_sq=float(c1 @ c1 + c2 @ c2),
            dual_sq=mu * mu * b_part,
            Av_sq=float(r @ r),
            Bv_sq=float(beta_m @ beta_m + Xbeta @ Xbeta),
            z_sq=float(d @ d + e @ e),
            h_sq=mu * b_part + (float(dd @ dd) + float(de @ de)) / mu,
            loss_part=loss_part,
        )
