"""Leave-one-out and leave-two-out influence scans on the three FSP comparisons.

For each deleted observation (or pair) the null, linear, best FP1 and best
FP2 models are refitted on the reduced data, with the best powers searched
again, and the three deviance differences are recorded.

Refitting all 46 candidate models for each of n(n-1)/2 pairs is avoided
with the case-deletion identity for least squares: if ``r`` are full-data
residuals and ``H`` the hat matrix of a candidate design, deleting the set
``D`` gives

    rss_{-D} = rss - r_D' (I - H_DD)^{-1} r_D.

This is exact. Whenever ``I - H_DD`` is close to singular (leverage near
one) or the update cancels badly, that deletion is refitted directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .data import Dataset, prepare
from .errors import FitError
from .fp import TIE_RTOL, PowerTuple, decimal_scale, enumerate_powers, fp_basis, with_intercept
from .fsp import TEST_DF, FSPResult, run_fsp
from .linreg import check_rank, chisq_quantile, fit_ols
from .mfp import MFPModel, design_matrix, fit_mfp

logger = logging.getLogger(__name__)

COMPARISONS = ("fp2_null", "fp2_linear", "fp2_fp1")
MIN_N = 10
# below these the closed-form update is replaced by a direct refit
_LEVERAGE_FLOOR = 1e-8
_CANCEL_FLOOR = 1e-6


@dataclass(frozen=True)
class DevDiffRecord:
    deleted: tuple[int, ...]  # observation ids (1-based unless ids were supplied)
    dd_fp2_null: float
    dd_fp2_linear: float
    dd_fp2_fp1: float
    decisions_at: dict[float, tuple[bool, bool, bool]] = field(compare=False)
    best_fp1: PowerTuple | None = None
    best_fp2: PowerTuple | None = None
    error: str | None = None

    @property
    def dd(self) -> tuple[float, float, float]:
        return (self.dd_fp2_null, self.dd_fp2_linear, self.dd_fp2_fp1)


@dataclass
class IPReport:
    variable: str
    flagged: list[tuple[int, ...]]
    full_data_decisions: tuple[bool, bool, bool]
    alpha: float
    mode: str  # univariable | multivariable-adjusted
    scan: str = "loo"  # loo | pairs
    records: list[DevDiffRecord] = field(default_factory=list, repr=False)

    def flagged_ids(self) -> set[int]:
        """Observations to remove.

        Single scans: every flagged id. Pair scans: ids for which more than
        half of the pairs containing them are flagged; a pair flagged only
        in combination is reported but not removed.
        """
        if self.scan == "loo":
            return {d[0] for d in self.flagged}
        return pair_majority_ids(self.records, self.flagged)


def critical_values(alpha: float, max_degree: int = 2) -> tuple[float, float, float]:
    return tuple(math.nan if k is None else chisq_quantile(alpha, k) for k in TEST_DF[max_degree])


def decisions(dd: Sequence[float], alpha: float, max_degree: int = 2) -> tuple[bool, bool, bool]:
    crit = critical_values(alpha, max_degree)
    return tuple(bool(d > c) for d, c in zip(dd, crit))


def full_decisions(res: FSPResult, alpha: float | None = None) -> tuple[bool, bool, bool]:
    """Significance of the three comparisons on the full data."""
    return decisions(res.dd, res.alpha if alpha is None else alpha, res.max_degree)


# --------------------------------------------------------------------------
# Scan engine
# --------------------------------------------------------------------------


class _Candidates:
    """Full-data QR factors for the null, linear and every FP design."""

    def __init__(self, x, y, adjust, max_degree: int, rescale: bool):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.n = self.x.shape[0]
        self.base = with_intercept(adjust, self.n)
        if self.base.shape[1] > 1:
            check_rank(self.base)
        self.max_degree = max_degree
        self.xs = self.x / decimal_scale(self.x) if rescale else self.x
        self.fp1 = enumerate_powers(1)
        self.fp2 = enumerate_powers(2) if max_degree == 2 else []
        designs = [self.base, np.hstack([self.base, self.xs[:, None]])]
        designs += [np.hstack([self.base, fp_basis(self.xs, pw)]) for pw in self.fp1 + self.fp2]
        self.designs = designs
        self.q, self.resid, self.rss, self.valid = [], [], [], []
        for X in designs:
            q, r = np.linalg.qr(X)
            try:
                check_rank(X, np.diag(r))
                ok = True
            except FitError:
                ok = False
            res = self.y - q @ (q.T @ self.y)
            self.q.append(q)
            self.resid.append(res)
            self.rss.append(float(res @ res))
            self.valid.append(ok)

    def _direct(self, c: int, keep: np.ndarray) -> float:
        try:
            return fit_ols(self.designs[c][keep], self.y[keep], check_degenerate=False).rss
        except FitError:
            return math.inf

    def deleted_rss(self, pos: np.ndarray) -> np.ndarray:
        """RSS of every candidate after deleting each row set; shape (n_candidates, m)."""
        m, d = pos.shape
        out = np.empty((len(self.designs), m))
        for c in range(len(self.designs)):
            if not self.valid[c]:
                out[c] = math.inf
                continue
            q, r, rss = self.q[c], self.resid[c], self.rss[c]
            if d == 1:
                i = pos[:, 0]
                one_minus_h = 1.0 - np.einsum("ij,ij->i", q[i], q[i])
                with np.errstate(divide="ignore", invalid="ignore"):
                    val = rss - r[i] ** 2 / one_minus_h
                bad = one_minus_h < _LEVERAGE_FLOOR
            else:
                i, j = pos[:, 0], pos[:, 1]
                qi, qj = q[i], q[j]
                a = 1.0 - np.einsum("ij,ij->i", qi, qi)
                b = 1.0 - np.einsum("ij,ij->i", qj, qj)
                hij = np.einsum("ij,ij->i", qi, qj)
                det = a * b - hij**2
                ri, rj = r[i], r[j]
                with np.errstate(divide="ignore", invalid="ignore"):
                    val = rss - (ri**2 * b + rj**2 * a + 2.0 * ri * rj * hij) / det
                bad = det < _LEVERAGE_FLOOR
            bad |= ~(val > _CANCEL_FLOOR * rss)
            for k in np.flatnonzero(bad):
                keep = np.ones(self.n, dtype=bool)
                keep[pos[k]] = False
                val[k] = self._direct(c, keep)
            out[c] = val
        return out


def _first_best(rss: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per column: index of the earliest candidate within the tie tolerance of the minimum."""
    lo = rss.min(axis=0)
    within = rss <= lo * (1.0 + TIE_RTOL)
    idx = within.argmax(axis=0)
    return idx, rss[idx, np.arange(rss.shape[1])]


def _dd(small: np.ndarray, large: np.ndarray, n: int) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        d = n * np.log(small / large)
    return np.where(d < 0, 0.0, d)


def _scan(x, y, adjust, deletions: np.ndarray, alphas, ids, max_degree, rescale) -> list[DevDiffRecord]:
    n = np.asarray(x).shape[0]
    if n < MIN_N:
        raise ValueError(f"influence scans need n >= {MIN_N} (got {n})")
    ids = np.arange(1, n + 1) if ids is None else np.asarray(ids, dtype=int)
    cand = _Candidates(x, y, adjust, max_degree, rescale)
    m, d = deletions.shape
    n_red = n - d
    crits = {a: critical_values(a, max_degree) for a in alphas}
    records = []
    chunk = 4096
    n_fp1 = len(cand.fp1)
    for start in range(0, m, chunk):
        pos = deletions[start:start + chunk]
        rss = cand.deleted_rss(pos)
        null, lin = rss[0], rss[1]
        i1, fp1 = _first_best(rss[2:2 + n_fp1])
        if max_degree == 2:
            i2, fp2 = _first_best(rss[2 + n_fp1:])
            top = fp2
            dd3 = _dd(fp1, fp2, n_red)
        else:
            i2 = None
            top = fp1
            dd3 = np.full(pos.shape[0], math.nan)
        dd1 = _dd(null, top, n_red)
        dd2 = _dd(lin, top, n_red)
        for k in range(pos.shape[0]):
            dds = (float(dd1[k]), float(dd2[k]), float(dd3[k]))
            checked = dds if max_degree == 2 else dds[:2]
            err = None if all(math.isfinite(v) for v in checked) else "fit failed on reduced data"
            dec = {a: tuple(bool(v > c) for v, c in zip(dds, crits[a])) for a in alphas}
            records.append(DevDiffRecord(
                tuple(int(ids[p]) for p in pos[k]), *dds, dec,
                cand.fp1[i1[k]], cand.fp2[i2[k]] if i2 is not None else None, err,
            ))
    return records


def loo_scan(x, y, adjust=None, alphas=(0.05, 0.01), ids=None, max_degree: int = 2,
             rescale: bool = True) -> list[DevDiffRecord]:
    """Delete each observation in turn; one record per observation."""
    n = np.asarray(x).shape[0]
    return _scan(x, y, adjust, np.arange(n)[:, None], tuple(alphas), ids, max_degree, rescale)


def pair_positions(n: int) -> np.ndarray:
    i, j = np.triu_indices(n, k=1)
    return np.column_stack([i, j])


def pair_scan(x, y, adjust=None, alphas=(0.05, 0.01), ids=None, max_degree: int = 2,
              rescale: bool = True) -> list[DevDiffRecord]:
    """Delete every unordered pair i < j; n(n-1)/2 records in lexicographic order."""
    n = np.asarray(x).shape[0]
    return _scan(x, y, adjust, pair_positions(n), tuple(alphas), ids, max_degree, rescale)


def flag_influential(records: Sequence[DevDiffRecord], full: tuple[bool, bool, bool], alpha: float,
                     variable: str = "", mode: str = "univariable") -> IPReport:
    """Flag deletions that change the significance of any comparison, in either direction."""
    flagged = [r.deleted for r in records if r.decisions_at[alpha] != tuple(full)]
    scan = "loo" if records and len(records[0].deleted) == 1 else "pairs"
    return IPReport(variable, flagged, tuple(full), alpha, mode, scan, list(records))


def pair_majority_ids(records: Sequence[DevDiffRecord], flagged: Sequence[tuple[int, ...]]) -> set[int]:
    total: dict[int, int] = {}
    hits: dict[int, int] = {}
    for r in records:
        for i in r.deleted:
            total[i] = total.get(i, 0) + 1
    for pair in flagged:
        for i in pair:
            hits[i] = hits.get(i, 0) + 1
    return {i for i, h in hits.items() if h > total[i] / 2}


@dataclass(frozen=True)
class FiveNumber:
    count: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


def five_number(values) -> FiveNumber:
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return FiveNumber(0, math.nan, math.nan, math.nan, math.nan, math.nan)
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return FiveNumber(int(v.size), *map(float, q))


def split_pairs(records: Sequence[DevDiffRecord], ip_set) -> dict[str, list[DevDiffRecord]]:
    """G1 all pairs; G2 pairs leaving every IP in the data; G3 pairs removing at least one IP."""
    ip = set(ip_set)
    g3 = [r for r in records if ip.intersection(r.deleted)]
    g2 = [r for r in records if not ip.intersection(r.deleted)]
    return {"G1": list(records), "G2": g2, "G3": g3}


def group_pairs(records: Sequence[DevDiffRecord], ip_set) -> dict[str, dict[str, FiveNumber]]:
    groups = split_pairs(records, ip_set)
    return {
        g: {c: five_number(getattr(r, f"dd_{c}") for r in recs) for c in COMPARISONS}
        for g, recs in groups.items()
    }


# --------------------------------------------------------------------------
# Workflows
# --------------------------------------------------------------------------


class IPXResult(NamedTuple):
    ip_set: list[int]
    reduced: Dataset
    model: MFPModel
    reports: dict[str, IPReport]


def _scan_fn(mode: str):
    if mode == "loo":
        return loo_scan
    if mode == "pairs":
        return pair_scan
    raise ValueError("mode must be 'loo' or 'pairs'")


def scan_variable(x, y, adjust, alpha: float, mode: str = "loo", max_degree: int = 2, ids=None,
                  variable: str = "", label: str = "univariable", alphas=None) -> IPReport:
    alphas = tuple(sorted(set((alpha,) + tuple(alphas or ())), reverse=True))
    full = run_fsp(x, y, adjust, alpha=alpha, max_degree=max_degree)
    records = _scan_fn(mode)(x, y, adjust, alphas, ids, max_degree)
    return flag_influential(records, full_decisions(full, alpha), alpha, variable, label)


def ipx_univariable(ds: Dataset, alpha_select: float = 0.05, alpha_fp: float | None = None,
                    mode: str = "loo", alphas=None) -> IPXResult:
    """Scan each continuous predictor univariably, drop the union of IPs, refit MFP (IPXu).

    Points are flagged at ``alpha_fp``; ``alphas`` adds further levels to the
    recorded decisions without changing what is flagged.
    """
    alpha_fp = alpha_select if alpha_fp is None else alpha_fp
    ds = prepare(ds)
    reports = {}
    ips: set[int] = set()
    for m in ds.predictors:
        if not m.is_continuous:
            continue
        rep = scan_variable(ds[m.name], ds.y, None, alpha_fp, mode, m.max_degree, ds.row_ids, m.name,
                            alphas=alphas)
        reports[m.name] = rep
        ips |= rep.flagged_ids()
    reduced = ds.drop_ids(ips, provenance=f"{ds.provenance} IPXu")
    model = fit_mfp(reduced, alpha_select, alpha_fp)
    return IPXResult(sorted(ips), reduced, model, reports)


def working_response(ds: Dataset, model: MFPModel, variable: str) -> np.ndarray:
    """Outcome minus the frozen contributions of every other selected predictor."""
    offset = np.zeros(ds.n)
    for name in model.selected:
        if name != variable:
            offset += model.contribution(ds, name)
    return ds.y - offset


def ipx_multivariable(ds: Dataset, model: MFPModel, alpha_fp: float | None = None, mode: str = "loo",
                      adjustment: str = "frozen", alphas=None) -> IPXResult:
    """Scan each selected continuous predictor of ``model``, drop the union of IPs, refit MFP (IPXm).

    ``adjustment="frozen"`` keeps the other variables' powers *and*
    coefficients fixed (an offset); ``"refit"`` keeps their powers but
    re-estimates their coefficients in every reduced-data fit.
    """
    if not model.converged:
        logger.warning("multivariable IP check on a model that did not converge")
    alpha_fp = model.alpha_fp if alpha_fp is None else alpha_fp
    ds = prepare(ds)
    reports = {}
    ips: set[int] = set()
    for name in model.selected:
        if model.kinds.get(name) != "continuous":
            continue
        m = ds.get_meta(name)
        if adjustment == "frozen":
            y, adjust = working_response(ds, model, name), None
        elif adjustment == "refit":
            y, adjust = ds.y, design_matrix(ds, model.specs, exclude=name)
        else:
            raise ValueError("adjustment must be 'frozen' or 'refit'")
        rep = scan_variable(ds[name], y, adjust, alpha_fp, mode, m.max_degree, ds.row_ids, name,
                            "multivariable-adjusted", alphas)
        reports[name] = rep
        ips |= rep.flagged_ids()
    reduced = ds.drop_ids(ips, provenance=f"{ds.provenance} IPXm")
    refit_model = fit_mfp(reduced, model.alpha_select, model.alpha_fp)
    return IPXResult(sorted(ips), reduced, refit_model, reports)


# --------------------------------------------------------------------------
# Tables
# --------------------------------------------------------------------------


def records_table(records: Sequence[DevDiffRecord], alphas: Sequence[float]) -> tuple[list[str], list[list]]:
    header = ["deleted_i", "deleted_j", "dd_fp2_null", "dd_fp2_linear", "dd_fp2_fp1"]
    for a in alphas:
        header += [f"sig_{c}_{a:g}" for c in COMPARISONS]
    rows = []
    for r in records:
        row = [r.deleted[0], r.deleted[1] if len(r.deleted) > 1 else None, *r.dd]
        for a in alphas:
            row += list(r.decisions_at[a])
        rows.append(row)
    return header, rows
