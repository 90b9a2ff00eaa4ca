"""Closed-form proximal maps, loss values and nonconvex penalty weights.

Loss proximal maps solve::

    argmin_r  L(r) + (mu / 2) * ||r - x||^2

where ``L`` carries the ``1/n`` factor of the *global* sample size ``n``
(not the shard size), so every shard scales its residual step identically.
"""

from __future__ import annotations

import numpy as np

from .core import GroupMap, InvalidProblemError, LossKind

__all__ = [
    "prox_loss",
    "loss_value",
    "soft_threshold",
    "group_soft_threshold",
    "ridge_shrink",
    "nonconvex_weight",
    "scad_penalty",
    "mcp_penalty",
]


def _check_prox_args(mu, n_total):
    if not mu > 0:
        raise InvalidProblemError(f"mu must be positive, got {mu}")
    if n_total < 1:
        raise InvalidProblemError(f"n_total must be >= 1, got {n_total}")


def prox_loss(loss: LossKind, x, mu: float, n_total: int, norm: float | None = None) -> np.ndarray:
    """Proximal map of the scaled loss ``(1/n) * sum L(r_i)`` at ``x``.

    Parameters
    ----------
    loss : LossKind
    x : array_like
        Point to evaluate at.  Componentwise for the separable losses; the
        square-root loss acts on the whole vector.
    mu : float
        Augmented Lagrangian penalty.
    n_total : int
        Global number of observations.
    norm : float, optional
        Square-root loss only: Euclidean norm of the *full* argument when
        ``x`` is one block of a longer, sharded vector.  Defaults to
        ``||x||_2``.
    """
    _check_prox_args(mu, n_total)
    x = np.asarray(x, dtype=float)
    nmu = n_total * mu
    kind = loss.kind
    if kind == "least_squares":
        return nmu * x / (1.0 + nmu)
    if kind == "quantile":
        tau = loss.tau
        return np.maximum(x - tau / nmu, np.minimum(0.0, x + (1.0 - tau) / nmu))
    if kind == "square_root":
        nrm = float(np.linalg.norm(x)) if norm is None else float(norm)
        if nrm == 0.0:
            return np.zeros_like(x)
        shrink = max(nrm - 1.0 / (np.sqrt(2.0 * n_total) * mu), 0.0)
        return x * (shrink / nrm)
    if kind == "huber":
        delta = loss.delta
        if loss.huber_variant == "standard":
            k = nmu * delta
            return (k * x + np.sign(x) * np.maximum(0.0, np.abs(x) - 1.0 / nmu - delta)) / (1.0 + k)
        # quadratic branch only for r >= delta, absolute value elsewhere
        soft = np.sign(x) * np.maximum(np.abs(x) - 1.0 / nmu, 0.0)
        quad = nmu * delta * x / (1.0 + nmu * delta)
        return np.where(x >= delta + 1.0 / nmu, quad, soft)
    raise InvalidProblemError(f"unknown loss {kind!r}")  # pragma: no cover


def loss_value(loss: LossKind, r, n_total: int) -> float:
    """Value of the scaled loss ``(1/n) sum L(r_i)`` (square root: whole vector)."""
    r = np.asarray(r, dtype=float)
    kind = loss.kind
    if kind == "least_squares":
        return float(r @ r) / (2.0 * n_total)
    if kind == "quantile":
        return float(np.sum(r * (loss.tau - (r < 0)))) / n_total
    if kind == "square_root":
        return float(np.sqrt(r @ r / (2.0 * n_total)))
    if kind == "huber":
        d = loss.delta
        if loss.huber_variant == "standard":
            a = np.abs(r)
            v = np.where(a <= d, r * r / (2 * d), a - d / 2)
        else:
            v = np.where(r >= d, r * r / (2 * d), np.abs(r) - d / 2)
        return float(np.sum(v)) / n_total
    raise InvalidProblemError(f"unknown loss {kind!r}")  # pragma: no cover


def soft_threshold(x, t) -> np.ndarray:
    """``sign(x) * max(|x| - t, 0)``; ``t`` may be a scalar or per-coordinate."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidProblemError("soft-threshold level must be nonnegative")
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def group_soft_threshold(x, groups: GroupMap, t: float) -> np.ndarray:
    """Shrink the Euclidean norm of every group of ``x`` by ``t``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (groups.p,):
        raise InvalidProblemError(f"vector of length {x.size} does not match group map over {groups.p} coefficients")
    if t < 0:
        raise InvalidProblemError("group threshold must be nonnegative")
    out = np.zeros_like(x)
    for idx in groups.indices():
        xg = x[idx]
        nrm = np.linalg.norm(xg)
        if nrm > t:
            out[idx] = xg * ((nrm - t) / nrm)
    return out


def ridge_shrink(v, lambda2: float, mu: float) -> np.ndarray:
    """Minimizer of ``lambda2 ||b||^2 + (mu/2) ||b - v||^2``."""
    if not mu > 0:
        raise InvalidProblemError(f"mu must be positive, got {mu}")
    return mu * np.asarray(v, dtype=float) / (2.0 * lambda2 + mu)


def _check_a(kind, a):
    if kind == "scad":
        if not a > 2:
            raise InvalidProblemError(f"scad needs a > 2, got {a}")
    elif kind == "mcp":
        if not a > 1:
            raise InvalidProblemError(f"mcp needs a > 1, got {a}")
    else:
        raise InvalidProblemError(f"no nonconvex weight for {kind!r}")


def nonconvex_weight(kind: str, lambda1: float, beta_abs, a: float | None = None) -> np.ndarray:
    """Derivative of the scad / mcp penalty at ``|beta|``, used as l1 weights.

    scad::

        lambda1                              |b| <= lambda1
        (a*lambda1 - |b|) / (a - 1)          lambda1 < |b| < a*lambda1
        0                                    |b| >= a*lambda1

    mcp::

        lambda1 - |b| / a                    |b| <= a*lambda1
        0                                    otherwise
    """
    if a is None:
        a = 3.7 if kind == "scad" else 3.0
    _check_a(kind, a)
    t = np.abs(np.asarray(beta_abs, dtype=float))
    if kind == "scad":
        mid = (a * lambda1 - t) / (a - 1.0)
        w = np.where(t <= lambda1, lambda1, np.where(t < a * lambda1, mid, 0.0))
    else:
        w = np.where(t <= a * lambda1, lambda1 - t / a, 0.0)
    return np.maximum(w, 0.0)


def scad_penalty(beta, lambda1: float, a: float = 3.7) -> float:
    """Summed scad penalty."""
    _check_a("scad", a)
    t = np.abs(np.asarray(beta, dtype=float))
    lam = lambda1
    v = np.where(
        t <= lam,
        lam * t,
        np.where(t <= a * lam, (2 * a * lam * t - t**2 - lam**2) / (2 * (a - 1)), lam**2 * (a + 1) / 2),
    )
    return float(np.sum(v))


def mcp_penalty(beta, lambda1: float, a: float = 3.0) -> float:
    """Summed mcp penalty."""
    _check_a("mcp", a)
    t = np.abs(np.asarray(beta, dtype=float))
    v = np.where(t <= a * lambda1, lambda1 * t - t**2 / (2 * a), a * lambda1**2 / 2)
    return float(np.sum(v))
