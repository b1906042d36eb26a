"""Rank-aware linear least squares.

Indicator designs go rank deficient in exactly predictable ways (a type
whose units all share one treatment timing duplicates its own time
dummies), so deficiency must degrade deterministically: columns are
examined in order and a column whose pivot falls below
``pivot_rtol * largest pivot`` is dropped, keeping the earlier columns.

Two equivalent routes implement that rule.  The hot path factorizes the
Gram matrix with a greedy order-respecting Cholesky plus one step of
iterative refinement; it is only trusted while every pivot clears a
conservative gray zone (1e-6 of the largest), since squared pivots near
the Gram matrix's precision floor cannot be compared against the 1e-10
threshold.  Anything murkier falls back to a dense Householder QR, whose
R diagonal measures the same column-order pivots at full precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import EstimationError

PIVOT_RTOL = 1e-10
_GRAY_RTOL = 1e-6


@dataclass(frozen=True)
class LsqSolution:
    coefficients: np.ndarray     # per surviving column
    kept: np.ndarray             # indices of surviving columns
    rank_dropped: np.ndarray     # indices removed for rank deficiency
    rss: float
    residuals: np.ndarray
    fitted: np.ndarray
    n_columns: int

    def full_coefficients(self) -> np.ndarray:
        """Coefficients over all input columns, zero at rank-dropped ones."""
        out = np.zeros(self.n_columns)
        out[self.kept] = self.coefficients
        return out


class _GrayZone(Exception):
    pass


def _solve_cholesky(a, y, n):
    """Greedy order-respecting Cholesky on A'A; raises _GrayZone on doubt."""
    gram = a.T @ a
    rhs = a.T @ y
    scale2 = float(gram.diagonal().max())
    if scale2 <= 0.0:
        raise EstimationError("all columns are zero")
    gray2 = (_GRAY_RTOL ** 2) * scale2

    lower = np.zeros((n, n))
    kept = []
    for j in range(n):
        r = len(kept)
        w = (
            solve_triangular(lower[:r, :r], gram[kept, j], lower=True)
            if r else np.zeros(0)
        )
        d = gram[j, j] - w @ w
        if d <= gray2:
            raise _GrayZone
        lower[r, :r] = w
        lower[r, r] = np.sqrt(d)
        kept.append(j)

    kept = np.asarray(kept)
    lo = lower[: kept.size, : kept.size]
    coef = solve_triangular(
        lo.T, solve_triangular(lo, rhs[kept], lower=True), lower=False
    )
    # one refinement step recovers QR-level accuracy from the squared system
    resid = y - a[:, kept] @ coef
    corr = a[:, kept].T @ resid
    coef = coef + solve_triangular(
        lo.T, solve_triangular(lo, corr, lower=True), lower=False
    )
    return coef, kept


def _solve_qr(a, y, n, pivot_rtol):
    kept = np.arange(n)
    while True:
        q, r = qr(a[:, kept], mode="economic")
        diag = np.abs(np.diag(r))
        if diag.size == 0:
            raise EstimationError("all columns rank-dropped")
        ok = diag > pivot_rtol * diag.max()
        if kept.size > diag.size:  # more columns than rows: the tail is unidentified
            ok = np.concatenate([ok, np.zeros(kept.size - diag.size, dtype=bool)])
        if ok.all():
            return solve_triangular(r, q.T @ y), kept
        kept = kept[ok]
        if kept.size == 0:
            raise EstimationError("all columns rank-dropped")


def solve(design, response, pivot_rtol: float = PIVOT_RTOL) -> LsqSolution:
    """Least-squares fit of ``response`` on the design's columns.

    ``design`` may be a raw 2-D array or anything exposing ``.values``
    (e.g. a DesignMatrix).  Ties in rank detection resolve by column
    order: among dependent columns the earliest one survives.
    """
    a = np.asarray(getattr(design, "values", design), dtype=float)
    y = np.asarray(response, dtype=float).reshape(-1)
    m, n = a.shape
    if m != y.shape[0]:
        raise EstimationError(f"design has {m} rows but response has {y.shape[0]}")
    if n == 0:
        raise EstimationError("design has no columns")

    if pivot_rtol >= _GRAY_RTOL or m < n:
        coef, kept = _solve_qr(a, y, n, pivot_rtol)
    else:
        try:
            coef, kept = _solve_cholesky(a, y, n)
        except _GrayZone:
            coef, kept = _solve_qr(a, y, n, pivot_rtol)

    fitted = a[:, kept] @ coef
    residuals = y - fitted
    rss = float(residuals @ residuals)
    dropped = np.setdiff1d(np.arange(n), kept)
    return LsqSolution(coef, kept, dropped, rss, residuals, fitted, n)
