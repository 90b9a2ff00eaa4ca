"""Synthetic benchmark designs, CSV ingestion, standardization and splitting.

Random numbers come from numpy's PCG64 generator.  A design's seed feeds a
``SeedSequence`` whose spawned children drive independent streams, so each
part of a dataset is reproducible on its own::

    child 0   common factor g0 (one value per row)
    child 1   per-column noise g_j
    child 2   coefficient draws (block values, group picks)
    child 3   response noise
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import InvalidProblemError

__all__ = [
    "REGIMES",
    "DataError",
    "SyntheticDesign",
    "true_coefficients",
    "gen_synthetic",
    "read_numeric_csv",
    "load_csv",
    "Standardization",
    "standardize",
    "split_train_test",
]

REGIMES = ("elastic_net_decay", "fused_blocks", "group_sparse")

BIT_GENERATOR = "PCG64"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class SyntheticDesign:
    """Equicorrelated Gaussian design with a regime-specific true coefficient vector.

    ``n_groups`` and ``n_active`` only matter for the grouped regimes; there
    ``p`` must be divisible by ``n_groups`` (equal contiguous groups).
    """

    n: int
    p: int
    rho: float = 0.5
    regime: str = "elastic_net_decay"
    seed: int = 0
    snr: float = 1.0
    n_groups: int = 80
    n_active: int = 10

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise InvalidProblemError(f"need n, p >= 1, got n={self.n}, p={self.p}")
        if not (0.0 <= self.rho < 1.0):
            raise InvalidProblemError(f"rho must lie in [0, 1), got {self.rho}")
        if self.regime not in REGIMES:
            raise InvalidProblemError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if not self.snr > 0:
            raise InvalidProblemError(f"snr must be positive, got {self.snr}")
        if self.regime != "elastic_net_decay":
            if self.n_groups < 1 or self.p % self.n_groups:
                raise InvalidProblemError(
                    f"p={self.p} is not divisible by n_groups={self.n_groups} for regime {self.regime}")
            if not (1 <= self.n_active <= self.n_groups):
                raise InvalidProblemError(f"n_active must lie in [1, {self.n_groups}], got {self.n_active}")

    @property
    def group_size(self) -> int:
        return self.p // self.n_groups

    def group_labels(self) -> np.ndarray:
        """Contiguous group labels 1..n_groups."""
        return np.repeat(np.arange(1, self.n_groups + 1), self.group_size)

    def to_dict(self) -> dict:
        return asdict(self)


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(4)]


def true_coefficients(design: SyntheticDesign, rng: np.random.Generator | None = None) -> np.ndarray:
    """True coefficient vector for a design.

    elastic_net_decay
        ``beta_j = (-1)^j exp(-(2j - 1) / 20)`` for ``j = 1..p``.
    fused_blocks
        ``n_active`` randomly chosen blocks, each filled with one U[-3, 3] value.
    group_sparse
        ``n_active`` randomly chosen groups with entries ``xi (1 + |a|)``,
        ``xi`` uniform on {-1, +1} and ``a`` standard normal.
    """
    p = design.p
    if design.regime == "elastic_net_decay":
        j = np.arange(1, p + 1)
        return (-1.0) ** j * np.exp(-(2 * j - 1) / 20.0)
    if rng is None:
        rng = _streams(design.seed)[2]
    beta = np.zeros(p)
    size = design.group_size
    active = np.sort(rng.choice(design.n_groups, size=design.n_active, replace=False))
    for g in active:
        sl = slice(g * size, (g + 1) * size)
        if design.regime == "fused_blocks":
            beta[sl] = rng.uniform(-3.0, 3.0)
        else:
            xi = rng.choice([-1.0, 1.0], size=size)
            beta[sl] = xi * (1.0 + np.abs(rng.standard_normal(size)))
    return beta


def gen_synthetic(design: SyntheticDesign):
    """Draw ``(X, y, beta_true)``.

    Rows of ``X`` are ``sqrt(rho) g0 + sqrt(1 - rho) g_j`` so the population
    covariance is ``rho 11^T + (1 - rho) I``.  The noise level is set so that
    ``beta^T Sigma beta / sigma^2 = snr``.
    """
    g_common, g_cols, g_coef, g_noise = _streams(design.seed)
    n, p, rho = design.n, design.p, design.rho
    g0 = g_common.standard_normal(n)
    G = g_cols.standard_normal((n, p))
    X = math.sqrt(rho) * g0[:, None] + math.sqrt(1.0 - rho) * G
    beta = true_coefficients(design, g_coef)
    signal_var = rho * float(beta.sum()) ** 2 + (1.0 - rho) * float(beta @ beta)
    sigma = math.sqrt(signal_var / design.snr)
    y = X @ beta + sigma * g_noise.standard_normal(n)
    return X, y, beta


def read_numeric_csv(path, delimiter: str = ","):
    """Read a rectangular numeric CSV with a header row.

    Returns ``(A, header)``.  Errors name the offending line.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise DataError(f"{path}: file is empty or has no header row")
    header = [h.strip() for h in rows[0]]
    width = len(header)
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise DataError(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
        try:
            values.append([float(c) for c in row])
        except ValueError:
            bad = next(c for c in row if not _is_float(c))
            raise DataError(f"{path}: line {lineno} has non-numeric cell {bad!r}") from None
    if not values:
        raise DataError(f"{path}: no data rows")
    A = np.array(values, dtype=float)
    if not np.all(np.isfinite(A)):
        raise DataError(f"{path}: missing or non-finite values are not supported")
    return A, header


def load_csv(path, response_column=-1, delimiter: str = ","):
    """Read a numeric CSV with a header row and split off the response.

    Parameters
    ----------
    path : str or Path
    response_column : int or str
        Column index (negative allowed) or header name of the response.
    delimiter : str

    Returns
    -------
    X : ndarray, shape (n, p)
    y : ndarray, shape (n,)
    names : list of str
        Header names of the ``X`` columns.
    """
    A, header = read_numeric_csv(path, delimiter)
    width = len(header)
    if isinstance(response_column, str):
        if response_column not in header:
            raise DataError(f"{path}: response column {response_column!r} not found in header {header}")
        col = header.index(response_column)
    else:
        col = int(response_column)
        if not -width <= col < width:
            raise DataError(f"{path}: response column index {col} out of range for {width} columns")
        col %= width
    if width < 2:
        raise DataError(f"{path}: need at least one covariate column besides the response")
    names = [h for i, h in enumerate(header) if i != col]
    return np.delete(A, col, axis=1), A[:, col], names


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


@dataclass
class Standardization:
    """Record of a standardization so coefficients can be mapped back."""

    mode: str
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float = 0.0
    constant_columns: list = field(default_factory=list)

    def coefficients_to_original(self, beta):
        """Map coefficients fitted on transformed data back to original units.

        Returns ``(beta_original, intercept)``.
        """
        beta = np.asarray(beta, dtype=float) / self.x_scale
        return beta, self.y_mean - float(self.x_mean @ beta)


def standardize(X, y, mode: str = "none"):
    """Center or z-score the columns of ``X`` (and center ``y``).

    ``zscore`` uses the sample standard deviation (ddof=1).  Constant
    columns keep scale 1 and are listed in ``constant_columns``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    p = X.shape[1]
    if mode == "none":
        return X.copy(), y.copy(), Standardization(mode, np.zeros(p), np.ones(p))
    if mode not in ("center", "zscore"):
        raise InvalidProblemError(f"unknown standardization mode {mode!r}")
    mean = X.mean(axis=0)
    ym = float(y.mean())
    scale = np.ones(p)
    constant = []
    if mode == "zscore":
        if X.shape[0] < 2:
            raise DataError("zscore needs at least 2 rows")
        sd = X.std(axis=0, ddof=1)
        constant = [int(j) for j in np.flatnonzero(sd <= 1e-12 * np.maximum(1.0, np.abs(mean)))]
        scale = np.where(np.isin(np.arange(p), constant), 1.0, sd)
    Xs = (X - mean) / scale
    return Xs, y - ym, Standardization(mode, mean, scale, ym, constant)


def split_train_test(X, y, n_train: int):
    """Prefix split: the first ``n_train`` rows train, the rest test. No shuffling."""
    X = np.asarray(X)
    y = np.asarray(y).reshape(-1)
    n = X.shape[0]
    if not (1 <= n_train < n):
        raise DataError(f"n_train must satisfy 1 <= n_train < n={n}, got {n_train}")
    return (X[:n_train], y[:n_train]), (X[n_train:], y[n_train:])
