"""Central-machine updates: the beta, b and f steps for all nine families.

The structure operator ``G`` is either the identity (ridge and group
structures) or the first-difference operator ``F`` of shape ``(p-1, p)``
with ``(F beta)_j = beta_j - beta_{j+1}``.  ``F`` is never formed; all
products are O(p) stencils.
"""

from __future__ import annotations

import numpy as np

from .core import CentralState, ConstraintSet, InvalidProblemError, PenaltyFamily
from .prox import group_soft_threshold, mcp_penalty, ridge_shrink, scad_penalty, soft_threshold

__all__ = [
    "apply_F",
    "apply_Ft",
    "apply_FtF",
    "apply_G",
    "apply_Gt",
    "linearization_constant",
    "project_simplex",
    "project_constraint",
    "central_beta_update",
    "central_b_update",
    "central_f_update",
    "penalty_value",
]


def apply_F(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.size < 2:
        raise InvalidProblemError("first-difference operator needs p >= 2")
    return beta[:-1] - beta[1:]


def apply_Ft(u) -> np.ndarray:
    """Adjoint of :func:`apply_F`: maps length p-1 to length p."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.size + 1)
    out[:-1] += u
    out[1:] -= u
    return out


def apply_FtF(beta) -> np.ndarray:
    """``F^T F beta`` via the [-1, 2, -1] stencil with [1, -1] boundary rows."""
    beta = np.asarray(beta, dtype=float)
    if beta.size < 2:
        raise InvalidProblemError("first-difference operator needs p >= 2")
    out = 2.0 * beta
    out[0] = beta[0] - beta[1]
    out[-1] = beta[-1] - beta[-2]
    out[1:-1] -= beta[:-2] + beta[2:]
    return out


def apply_G(family: PenaltyFamily, beta) -> np.ndarray:
    return apply_F(beta) if family.fused else np.asarray(beta, dtype=float)


def apply_Gt(family: PenaltyFamily, u) -> np.ndarray:
    return apply_Ft(u) if family.fused else np.asarray(u, dtype=float)


def linearization_constant(M: int, mu: float = 1.0) -> float:
    """Step constant for the linearized fused beta step.

    ``M + 4`` bounds the largest eigenvalue of ``M I + F^T F``; the
    proximal term must dominate ``mu`` times that matrix, hence the ``mu``
    factor (equal to ``M + 4`` at the default ``mu = 1``).
    """
    return mu * (M + 4.0)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v, kind="stable")[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_constraint(cset: ConstraintSet, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    kind = cset.kind
    if kind == "none":
        return beta
    if kind == "nonnegative":
        return np.maximum(beta, 0.0)
    if kind == "simplex":
        return project_simplex(beta)
    if kind == "box":
        return np.clip(beta, np.asarray(cset.lo, dtype=float), np.asarray(cset.hi, dtype=float))
    raise InvalidProblemError(f"unknown constraint {kind!r}")  # pragma: no cover


def _threshold(family: PenaltyFamily, weights, scale: float):
    if weights is None:
        return family.lambda1 / scale
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise InvalidProblemError("l1 weights must be nonnegative")
    return w / scale


def central_beta_update(family: PenaltyFamily, beta_bar, e_bar, central: CentralState, M: int, mu: float,
                        constraint: ConstraintSet | None = None, weights=None) -> np.ndarray:
    """New central coefficient vector.

    Parameters
    ----------
    family : PenaltyFamily
    beta_bar, e_bar : ndarray
        Shard averages of the local coefficients and their duals.
    central : CentralState
        Current ``beta``, ``b``, ``f``.  ``central.beta`` is the expansion
        point of the linearized fused step.
    M : int
    mu : float
    constraint : ConstraintSet, optional
        Applied after thresholding.
    weights : ndarray, optional
        Per-coordinate l1 weights replacing ``lambda1`` (LLA steps).
    """
    beta_bar = np.asarray(beta_bar, dtype=float)
    e_bar = np.asarray(e_bar, dtype=float)
    p = beta_bar.size
    if e_bar.shape != (p,) or central.beta.shape != (p,):
        raise InvalidProblemError("dimension mismatch in central beta update")
    if central.b.shape != (family.aux_dim(p),) or central.f.shape != central.b.shape:
        raise InvalidProblemError("auxiliary variable has the wrong length for this family")
    consensus = M * (beta_bar - e_bar / mu)
    aux = central.b + central.f / mu
    if family.fused:
        eta = linearization_constant(M, mu)
        beta_k = central.beta
        grad = M * beta_k + apply_FtF(beta_k) - consensus - apply_Ft(aux)
        out = soft_threshold(beta_k - (mu / eta) * grad, _threshold(family, weights, eta))
    else:
        out = soft_threshold((consensus + aux) / (M + 1.0), _threshold(family, weights, mu * (M + 1.0)))
    if constraint is not None and constraint.kind != "none":
        out = project_constraint(constraint, out)
    return out


def central_b_update(family: PenaltyFamily, beta, f, mu: float) -> np.ndarray:
    """Prox step for the structure part at ``G beta - f / mu``."""
    v = apply_G(family, beta) - np.asarray(f, dtype=float) / mu
    if family.structure == "ridge":
        return ridge_shrink(v, family.lambda2, mu)
    if family.structure == "group":
        return group_soft_threshold(v, family.groups, family.lambda2 / mu)
    return soft_threshold(v, family.lambda2 / mu)


def central_f_update(beta, b, f, mu: float, family: PenaltyFamily) -> np.ndarray:
    return np.asarray(f, dtype=float) - mu * (apply_G(family, beta) - np.asarray(b, dtype=float))


def penalty_value(family: PenaltyFamily, beta, weights=None, nonconvex: bool = False) -> float:
    """Regularizer value at ``beta``.

    By default the sparsity part is the (possibly weighted) l1 norm that the
    ADMM iteration actually minimizes.  With ``nonconvex=True`` the scad or
    mcp penalty itself is used.
    """
    beta = np.asarray(beta, dtype=float)
    if nonconvex and family.sparsity == "scad":
        sparse = scad_penalty(beta, family.lambda1, family.a)
    elif nonconvex and family.sparsity == "mcp":
        sparse = mcp_penalty(beta, family.lambda1, family.a)
    elif weights is not None:
        sparse = float(np.sum(np.asarray(weights) * np.abs(beta)))
    else:
        sparse = family.lambda1 * float(np.sum(np.abs(beta)))
    if family.structure == "ridge":
        struct = family.lambda2 * float(beta @ beta)
    elif family.structure == "group":
        struct = family.lambda2 * sum(float(np.linalg.norm(beta[idx])) for idx in family.groups.indices())
    else:
        struct = family.lambda2 * float(np.sum(np.abs(apply_F(beta))))
    return sparse + struct
