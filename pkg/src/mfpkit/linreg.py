"""Gaussian least squares: fits, deviances and chi-square tail probabilities.

Deviance is ``n * log(rss / n)``: the Gaussian -2 log-likelihood with the
constant ``n * (log(2*pi) + 1)`` dropped. Only differences of deviances are
used anywhere, and for those the constant cancels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import brentq

from .errors import DegenerateFit, FitError, MismatchedFits, RankDeficient

RANK_TOL = 1e-10
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    rss: float
    deviance: float
    r2: float
    sigma2_hat: float
    cov: np.ndarray
    n: int
    p: int
    residuals: np.ndarray
    degenerate: bool = False


def deviance(rss: float, n: int) -> float:
    if rss <= 0:
        return -math.inf
    return n * math.log(rss / n)


def check_rank(design: np.ndarray, r_diag: np.ndarray | None = None) -> None:
    """Raise RankDeficient if any column lies (numerically) in the span of the earlier ones.

    Column j counts as dependent when the norm of its residual after
    projection on columns 0..j-1 falls below ``RANK_TOL`` times its own norm.
    For an unpivoted QR factorisation that residual norm is ``|R[j, j]|``.
    """
    if r_diag is None:
        r_diag = np.diag(np.linalg.qr(design, mode="r"))
    norms = np.linalg.norm(design, axis=0)
    dependent = [j for j in range(design.shape[1]) if abs(r_diag[j]) < RANK_TOL * norms[j] or norms[j] == 0]
    if dependent:
        raise RankDeficient(dependent)


def fit_ols(design, y, check_degenerate: bool = True) -> FitResult:
    """Least-squares fit of ``y`` on ``design`` (which must contain the intercept column).

    Raises
    ------
    RankDeficient
        When a column is numerically dependent on the preceding ones.
    DegenerateFit
        When ``rss / n < 1e-12 * var(y)`` and ``check_degenerate`` is set; with the
        check off the returned fit carries ``degenerate=True`` instead.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if y.shape != (n,):
        raise FitError(f"y has shape {y.shape}, expected ({n},)")
    if n <= p:
        raise FitError(f"need more observations than columns (n={n}, p={p})")
    q, r = np.linalg.qr(X, mode="reduced")
    check_rank(X, np.diag(r))
    qty = q.T @ y
    beta = solve_triangular(r, qty, lower=False)
    resid = y - X @ beta
    rss = float(resid @ resid)
    var_y = float(np.var(y))
    degenerate = rss / n < DEGENERATE_TOL * var_y
    if degenerate and check_degenerate:
        raise DegenerateFit(rss, n)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    sigma2 = rss / (n - p)
    rinv = solve_triangular(r, np.eye(p), lower=False)
    cov = sigma2 * (rinv @ rinv.T)
    cov = 0.5 * (cov + cov.T)
    return FitResult(beta, rss, deviance(rss, n), r2, sigma2, cov, n, p, resid, bool(degenerate))


def deviance_difference(smaller: FitResult, larger: FitResult) -> float:
    """``n * log(rss_smaller / rss_larger)``, clamped at zero for tiny negative noise."""
    if smaller.n != larger.n:
        raise MismatchedFits(smaller.n, larger.n)
    return dd_from_rss(smaller.rss, larger.rss, smaller.n)


def dd_from_rss(rss_small: float, rss_large: float, n: int) -> float:
    if rss_large <= 0:
        return math.inf if rss_small > 0 else 0.0
    d = n * math.log(rss_small / rss_large)
    if d < 0:
        if d < -1e-9 * max(1.0, abs(n * math.log(max(rss_small, 1e-300) / n))):
            # a nested model can never fit strictly better; surface the bug
            raise FitError(f"negative deviance difference {d:.3g}; models are not nested")
        return 0.0
    return d


# --------------------------------------------------------------------------
# Chi-square distribution via the regularized incomplete gamma function
# --------------------------------------------------------------------------

_EPS = 1e-16
_MAX_ITER = 10_000


def _gamma_p_series(a: float, x: float) -> float:
    # P(a, x) = x^a e^-x / Gamma(a+1) * sum_k x^k / ((a+1)...(a+k))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    # Legendre continued fraction for Q(a, x), modified Lentz evaluation
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_p_series(a, x))
    return min(1.0, _gamma_q_contfrac(a, x))


def chisq_sf(x: float, k: int) -> float:
    """Upper tail probability of the chi-square distribution with ``k`` degrees of freedom."""
    if k < 1:
        raise ValueError("degrees of freedom must be >= 1")
    x = float(x)
    if math.isnan(x):
        return math.nan
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return gamma_q(0.5 * k, 0.5 * x)


def chisq_quantile(alpha: float, k: int) -> float:
    """Critical value c with ``chisq_sf(c, k) == alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    hi = max(1.0, 2.0 * k)
    while chisq_sf(hi, k) > alpha:
        hi *= 2.0
    return brentq(lambda c: chisq_sf(c, k) - alpha, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
