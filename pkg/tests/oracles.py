"""Independent reference implementations used only by the tests.

None of these share code with the package: they minimize the defining
objective numerically or solve the problem by a different algorithm.
"""

import itertools

import numpy as np
from scipy.optimize import minimize, minimize_scalar


def scalar_argmin(f, center, half_width, tol=1e-12):
    """Bounded Brent minimization of a convex 1-D function, then a grid refine."""
    lo, hi = center - half_width, center + half_width
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": tol, "maxiter": 2000})
    x = res.x
    # grid + refine guards against Brent stopping at a kink
    for width in (1e-3, 1e-6, 1e-9):
        grid = np.linspace(x - width, x + width, 201)
        x = grid[int(np.argmin(f(grid)))]
    return x


def loss_scalar(kind, r, n, tau=None, delta=None, variant="standard"):
    """One summand of the scaled loss ``(1/n) L(r)`` written from its definition.

    Works elementwise on arrays so grids can be evaluated in one call.
    """
    r = np.asarray(r, dtype=float)
    if kind == "least_squares":
        return r * r / (2 * n)
    if kind == "quantile":
        return np.where(r >= 0, r * tau, r * (tau - 1)) / n
    if kind == "huber":
        quad = r >= delta if variant == "table" else np.abs(r) <= delta
        return np.where(quad, r * r / (2 * delta), np.abs(r) - delta / 2) / n
    raise ValueError(kind)


def prox_scalar_oracle(kind, x, mu, n, **params):
    f = lambda r: loss_scalar(kind, r, n, **params) + 0.5 * mu * (r - x) ** 2
    return scalar_argmin(f, x, abs(x) + 10.0)


def prox_sqrt_oracle(x, mu, n):
    """The minimizer lies on the ray through x, so minimize over its length."""
    nx = np.linalg.norm(x)
    if nx == 0:
        return np.zeros_like(x)
    f = lambda t: np.abs(t) / np.sqrt(2 * n) + 0.5 * mu * (t - nx) ** 2
    t = scalar_argmin(f, nx, nx + 10.0)
    return t * x / nx


def brute_force_argmin(f, dim, center, radius, levels=12, pts=None):
    """Grid search on a box, then repeatedly zoom in around the best point.

    ``f`` maps an ``(N, dim)`` array of candidates to ``N`` values.  Each zoom
    keeps four grid spacings on either side of the incumbent, which is enough
    to hold the minimizer even when it sits close to a kink.
    """
    pts = pts or {1: 401, 2: 81, 3: 31}[dim]
    c = np.array(center, dtype=float)
    w = float(radius)
    for _ in range(levels):
        axes = [np.linspace(ci - w, ci + w, pts) for ci in c]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, dim)
        c = mesh[int(np.argmin(f(mesh)))]
        w *= 8.0 / (pts - 1)
    return c


def norm_prox_oracle(x, blocks, weights):
    """Minimize ``sum_k w_k ||B[blocks[k]]|| + ||B - x||^2 / 2`` on dims <= 3.

    The objective is smooth away from the sets where a block vanishes, so
    every pattern of zero blocks is tried: the zero blocks are pinned at 0
    and BFGS minimizes over the rest.  The best candidate, together with a
    zooming grid search, wins.
    """
    x = np.asarray(x, dtype=float)
    dim = x.size
    w = np.asarray(weights, dtype=float)

    def f(B):
        B = np.atleast_2d(B)
        pen = sum(wk * np.linalg.norm(B[:, blk], axis=1) for wk, blk in zip(w, blocks))
        return pen + 0.5 * np.sum((B - x) ** 2, axis=1)

    candidates = [brute_force_argmin(f, dim, x, float(w.max()) + 1.0)]
    for mask in itertools.product([False, True], repeat=len(blocks)):
        free = [j for blk, keep in zip(blocks, mask) if keep for j in blk]
        B = np.zeros(dim)
        if free:
            def g(z, free=free):
                full = np.zeros(dim)
                full[free] = z
                return f(full)[0]
            z0 = x[free] + 1e-3 * np.sign(x[free] + 1e-300)
            res = minimize(g, z0, method="BFGS", options={"gtol": 1e-13, "maxiter": 2000})
            B[free] = res.x
        candidates.append(B)
    vals = [f(c)[0] for c in candidates]
    return candidates[int(np.argmin(vals))]


def cd_elastic_net(X, y, lambda1, lambda2, tol=1e-12, max_sweeps=100000):
    """Cyclic coordinate descent on (1/2n)||y - X b||^2 + lambda1 |b|_1 + lambda2 ||b||^2."""
    n, p = X.shape
    b = np.zeros(p)
    r = y.astype(float).copy()
    col_sq = (X * X).sum(axis=0) / n
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(p):
            old = b[j]
            z = X[:, j] @ r / n + col_sq[j] * old
            new = np.sign(z) * max(abs(z) - lambda1, 0.0) / (col_sq[j] + 2.0 * lambda2)
            if new != old:
                r -= X[:, j] * (new - old)
                biggest = max(biggest, abs(new - old))
                b[j] = new
        if biggest < tol:
            return b
    raise RuntimeError("coordinate descent did not converge")


def enet_objective(X, y, b, lambda1, lambda2):
    r = y - X @ b
    return r @ r / (2 * len(y)) + lambda1 * np.abs(b).sum() + lambda2 * b @ b


def dense_first_difference(p):
    F = np.zeros((p - 1, p))
    F[np.arange(p - 1), np.arange(p - 1)] = 1.0
    F[np.arange(p - 1), np.arange(1, p)] = -1.0
    return F
