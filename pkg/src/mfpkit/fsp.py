"""Function selection procedure: closed test of FP2 against null, linear and FP1."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fp import FPSpec, PowerTuple, decimal_scale, fp_search, pick_best, with_intercept
from .linreg import FitResult, chisq_sf, dd_from_rss, fit_ols

# degrees of freedom of (vs null, vs linear, vs FP1) for each maximum degree
TEST_DF = {2: (4, 3, 2), 1: (2, 1, None)}


@dataclass(frozen=True)
class FSPResult:
    """Outcome of the closed test for one variable.

    The ``*_fp2_*`` fields compare the most complex permitted model with the
    null, linear and best-FP1 models. With ``max_degree=1`` the most complex
    model is the best FP1, the degrees of freedom are 2 and 1, and the third
    comparison is NaN.
    """

    dd_fp2_null: float
    dd_fp2_linear: float
    dd_fp2_fp1: float
    p_fp2_null: float
    p_fp2_linear: float
    p_fp2_fp1: float
    best_fp1: PowerTuple
    best_fp2: PowerTuple | None
    selection: FPSpec
    alpha: float
    steps_run: int
    alpha_select: float
    max_degree: int = 2
    n: int = 0
    fits: dict[str, FitResult] = field(default_factory=dict, repr=False, compare=False)

    @property
    def dd(self) -> tuple[float, float, float]:
        return (self.dd_fp2_null, self.dd_fp2_linear, self.dd_fp2_fp1)

    @property
    def p_values(self) -> tuple[float, float, float]:
        return (self.p_fp2_null, self.p_fp2_linear, self.p_fp2_fp1)

    @property
    def selected_fit(self) -> FitResult | None:
        key = {"out": "null", "linear": "linear", "fp1": "fp1", "fp2": "fp2"}[self.selection.status]
        return self.fits.get(key)


def significant(p: float, alpha: float) -> bool:
    # p == alpha does not reject
    return p < alpha


def decide(p_null, p_linear, p_fp1, best_fp1: PowerTuple, alpha: float, alpha_select: float,
           forced_in: bool, max_degree: int) -> tuple[str, int]:
    """Walk the closed test; returns (status, last step reached)."""
    forced = forced_in or alpha_select >= 1.0
    if not forced and not significant(p_null, alpha_select):
        return "out", 1
    if not significant(p_linear, alpha):
        return "linear", 2
    if max_degree == 1:
        return "fp1", 2
    if best_fp1.is_linear:
        # FP2 vs FP1 is then the step-2 deviance difference on fewer df, so it
        # rejects as well; the test need not be run
        return "fp2", 2
    if not significant(p_fp1, alpha):
        return "fp1", 3
    return "fp2", 3


def run_fsp(
    x,
    y,
    adjust=None,
    alpha: float = 0.05,
    forced_in: bool = False,
    max_degree: int = 2,
    alpha_select: float | None = None,
    rescale: bool = True,
    shift: float = 0.0,
) -> FSPResult:
    """Select out / linear / FP1 / FP2 for ``x`` (shifted to be positive).

    ``alpha`` governs the function steps; ``alpha_select`` (default ``alpha``)
    governs step 1, the test for inclusion. ``adjust`` columns enter every
    model alongside the intercept.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    if max_degree not in (1, 2):
        raise ValueError("max_degree must be 1 or 2")
    alpha_select = alpha if alpha_select is None else alpha_select
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    scale = decimal_scale(x) if rescale else 1.0
    base = with_intercept(adjust, n)

    null = fit_ols(base, y, check_degenerate=False)
    linear = fit_ols(np.hstack([base, (x / scale)[:, None]]), y, check_degenerate=False)
    c1 = pick_best(fp_search(x, y, adjust, 1, rescale))
    fits = {"null": null, "linear": linear, "fp1": c1.fit}
    df_null, df_lin, df_fp1 = TEST_DF[max_degree]

    if max_degree == 2:
        c2 = pick_best(fp_search(x, y, adjust, 2, rescale))
        fits["fp2"] = c2.fit
        top = c2.fit.rss
        dd_fp1 = dd_from_rss(c1.fit.rss, top, n)
        p_fp1 = chisq_sf(dd_fp1, df_fp1)
        best2 = c2.powers
    else:
        top = c1.fit.rss
        dd_fp1, p_fp1, best2 = math.nan, math.nan, None
    dd_null = dd_from_rss(null.rss, top, n)
    dd_lin = dd_from_rss(linear.rss, top, n)
    p_null = chisq_sf(dd_null, df_null)
    p_lin = chisq_sf(dd_lin, df_lin)

    status, steps = decide(p_null, p_lin, p_fp1, c1.powers, alpha, alpha_select, forced_in, max_degree)
    k = base.shape[1]
    if status == "out":
        spec = FPSpec("out", shift=shift, scale=scale)
    elif status == "linear":
        spec = FPSpec("linear", coefficients=linear.coefficients[k:], shift=shift, scale=scale)
    elif status == "fp1":
        spec = FPSpec.from_powers(c1.powers, coefficients=c1.fit.coefficients[k:], shift=shift, scale=scale)
    else:
        spec = FPSpec("fp2", best2, coefficients=fits["fp2"].coefficients[k:], shift=shift, scale=scale)
    return FSPResult(dd_null, dd_lin, dd_fp1, p_null, p_lin, p_fp1, c1.powers, best2, spec,
                     alpha, steps, alpha_select, max_degree, n, fits)

