"""Estimation and prediction error summaries and the annual tracking error."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SUPPORT_TOL",
    "TRADING_DAYS",
    "SupportStats",
    "ErrorSummary",
    "estimation_errors",
    "prediction_errors",
    "support_stats",
    "group_support_stats",
    "error_summary",
    "annual_tracking_error",
]

SUPPORT_TOL = 1e-8
TRADING_DAYS = 252


@dataclass(frozen=True)
class SupportStats:
    true_positive: int
    false_positive: int
    false_negative: int
    true_negative: int

    @property
    def tpr(self) -> float:
        pos = self.true_positive + self.false_negative
        return self.true_positive / pos if pos else float("nan")

    @property
    def fpr(self) -> float:
        neg = self.false_positive + self.true_negative
        return self.false_positive / neg if neg else float("nan")


@dataclass(frozen=True)
class ErrorSummary:
    aae: float
    ase: float
    aap: float
    asp: float
    support: SupportStats


def _same_shape(a, b):
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def estimation_errors(beta_hat, beta_true):
    """``(mean |beta_hat - beta|, mean (beta_hat - beta)^2)`` over the p coordinates."""
    a, b = _same_shape(beta_hat, beta_true)
    diff = a - b
    return float(np.mean(np.abs(diff))), float(np.mean(diff * diff))


def prediction_errors(X_test, y_test, beta_hat):
    """``(mean |y_hat - y|, mean (y_hat - y)^2)`` over the test rows."""
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    resid, y = _same_shape(X_test @ np.asarray(beta_hat, dtype=float), y_test)
    resid = resid - y
    return float(np.mean(np.abs(resid))), float(np.mean(resid * resid))


def support_stats(beta_hat, beta_true, tol: float = SUPPORT_TOL) -> SupportStats:
    a, b = _same_shape(beta_hat, beta_true)
    est, true = np.abs(a) > tol, np.abs(b) > tol
    return SupportStats(int(np.sum(est & true)), int(np.sum(est & ~true)),
                        int(np.sum(~est & true)), int(np.sum(~est & ~true)))


def group_support_stats(beta_hat, beta_true, labels, tol: float = SUPPORT_TOL) -> SupportStats:
    """Support stats at group level: a group is selected if any member is nonzero."""
    a, b = _same_shape(beta_hat, beta_true)
    labels = np.asarray(labels)
    groups = np.unique(labels)
    est = np.array([np.any(np.abs(a[labels == g]) > tol) for g in groups])
    true = np.array([np.any(np.abs(b[labels == g]) > tol) for g in groups])
    return SupportStats(int(np.sum(est & true)), int(np.sum(est & ~true)),
                        int(np.sum(~est & true)), int(np.sum(~est & ~true)))


def error_summary(beta_hat, beta_true, X_test, y_test) -> ErrorSummary:
    aae, ase = estimation_errors(beta_hat, beta_true)
    aap, asp = prediction_errors(X_test, y_test, beta_hat)
    return ErrorSummary(aae, ase, aap, asp, support_stats(beta_hat, beta_true))


def annual_tracking_error(err) -> float:
    """``sqrt(252)`` times the sample standard deviation (ddof=1) of daily tracking errors."""
    err = np.asarray(err, dtype=float).reshape(-1)
    if err.size < 2:
        raise ValueError(f"annual tracking error needs at least 2 observations, got {err.size}")
    centered = err - err.mean()
    return math.sqrt(TRADING_DAYS) * math.sqrt(float(centered @ centered) / (err.size - 1))
