"""Fractional polynomial powers, basis construction and best-FP search."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError, NonPositiveInput, RankDeficient
from .linreg import FitResult, check_rank, fit_ols

POWERS = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0)
# relative rss slack inside which two candidates count as tied
TIE_RTOL = 1e-10


@dataclass(frozen=True, order=True)
class PowerTuple:
    degree: int
    p1: float
    p2: float | None = None

    def __post_init__(self):
        if self.degree == 1 and self.p2 is not None:
            raise ValueError("FP1 takes a single power")
        if self.degree == 2:
            if self.p2 is None:
                raise ValueError("FP2 needs two powers")
            if self.p1 > self.p2:
                a, b = self.p2, self.p1
                object.__setattr__(self, "p1", float(a))
                object.__setattr__(self, "p2", float(b))

    @property
    def powers(self) -> tuple[float, ...]:
        return (self.p1,) if self.degree == 1 else (self.p1, self.p2)

    @property
    def is_linear(self) -> bool:
        return self.degree == 1 and self.p1 == 1.0

    def label(self) -> str:
        return ", ".join(_fmt_power(p) for p in self.powers)

    @classmethod
    def parse(cls, text: str) -> "PowerTuple":
        parts = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
        if len(parts) == 1:
            return cls(1, parts[0])
        if len(parts) == 2:
            return cls(2, parts[0], parts[1])
        raise ValueError(f"cannot parse FP powers from {text!r}")


def _fmt_power(p: float) -> str:
    return f"{p:g}"


def fp1(p: float) -> PowerTuple:
    return PowerTuple(1, float(p))


def fp2(p1: float, p2: float) -> PowerTuple:
    return PowerTuple(2, float(p1), float(p2))


LINEAR = fp1(1.0)


@dataclass(frozen=True)
class FPSpec:
    """Functional form chosen for one predictor.

    ``coefficients`` align with the columns of :meth:`basis`. The basis is
    evaluated on ``x / scale`` where ``x`` is the (already origin-shifted)
    predictor; ``shift`` is kept so raw values can be mapped back.
    """

    status: str  # out | linear | fp1 | fp2
    powers: PowerTuple | None = None
    coefficients: tuple[float, ...] = ()
    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.status not in ("out", "linear", "fp1", "fp2"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "out" and self.coefficients:
            raise ValueError("an excluded variable has no coefficients")
        if self.status == "linear" and self.powers is not None:
            raise ValueError("linear specs carry no powers")
        if self.status in ("fp1", "fp2") and (self.powers is None or self.powers.degree != int(self.status[-1])):
            raise ValueError(f"{self.status} spec needs matching powers")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @classmethod
    def from_powers(cls, powers: PowerTuple | None, **kw) -> "FPSpec":
        if powers is None:
            return cls("out", **kw)
        if powers.is_linear:
            return cls("linear", **kw)
        return cls(f"fp{powers.degree}", powers, **kw)

    @property
    def selected(self) -> bool:
        return self.status != "out"

    @property
    def effective_powers(self) -> PowerTuple | None:
        if self.status == "out":
            return None
        return LINEAR if self.status == "linear" else self.powers

    @property
    def n_columns(self) -> int:
        return {"out": 0, "linear": 1, "fp1": 1, "fp2": 2}[self.status]

    def basis(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.status == "out":
            return np.empty((x.shape[0], 0))
        if self.status == "linear":
            # a linear term needs no positivity, which is what lets binaries use it
            return (x / self.scale)[:, None]
        return fp_basis(x / self.scale, self.effective_powers)

    def label(self) -> str:
        """Power notation used in model tables: ``out``, ``1``, ``0``, ``0, 3``."""
        if self.status == "out":
            return "out"
        return self.effective_powers.label()

    def same_form(self, other: "FPSpec") -> bool:
        return self.status == other.status and self.powers == other.powers

    def with_coefficients(self, coefficients) -> "FPSpec":
        return FPSpec(self.status, self.powers, tuple(coefficients), self.shift, self.scale)


def enumerate_powers(degree: int) -> list[PowerTuple]:
    """All FP1 (8) or FP2 (36, repeated powers included) power tuples in search order."""
    if degree == 1:
        return [fp1(p) for p in POWERS]
    if degree == 2:
        return [fp2(a, b) for a, b in itertools.combinations_with_replacement(POWERS, 2)]
    raise ValueError("degree must be 1 or 2")


def fp_power(x: np.ndarray, p: float) -> np.ndarray:
    return np.log(x) if p == 0 else x**p


def fp_basis(x, powers: PowerTuple) -> np.ndarray:
    """FP design columns; power 0 is log, a repeated power adds ``x^p log x``."""
    x = np.asarray(x, dtype=float)
    bad = np.flatnonzero(~(x > 0))
    if bad.size:
        raise NonPositiveInput(int(bad[0]), float(x[bad[0]]))
    first = fp_power(x, powers.p1)
    if powers.degree == 1:
        return first[:, None]
    if powers.p1 == powers.p2:
        return np.column_stack([first, first * np.log(x)])
    return np.column_stack([first, fp_power(x, powers.p2)])


def decimal_scale(x) -> float:
    """Power of ten placing the median of ``x`` in [1, 10)."""
    med = float(np.median(x))
    if med <= 0:
        return 1.0
    return 10.0 ** math.floor(math.log10(med))


def with_intercept(adjust, n: int) -> np.ndarray:
    ones = np.ones((n, 1))
    if adjust is None:
        return ones
    adjust = np.asarray(adjust, dtype=float)
    if adjust.size == 0:
        return ones
    if adjust.ndim == 1:
        adjust = adjust[:, None]
    return np.hstack([ones, adjust])


@dataclass
class Candidate:
    powers: PowerTuple
    fit: FitResult | None
    error: Exception | None = None

    @property
    def rss(self) -> float:
        return math.inf if self.fit is None else self.fit.rss


def fp_search(x, y, adjust=None, degree: int = 2, rescale: bool = True) -> list[Candidate]:
    """Fit every FP model of the given degree (intercept and ``adjust`` always included)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    base = with_intercept(adjust, x.shape[0])
    if base.shape[1] > 1:
        # a dependent adjustment set makes every candidate singular; fail loudly
        check_rank(base)
    xs = x / decimal_scale(x) if rescale else x
    out = []
    for pw in enumerate_powers(degree):
        design = np.hstack([base, fp_basis(xs, pw)])
        try:
            out.append(Candidate(pw, fit_ols(design, y, check_degenerate=False)))
        except FitError as exc:
            out.append(Candidate(pw, None, exc))
    return out


def pick_best(candidates: list[Candidate]) -> Candidate:
    """Minimum-rss candidate; near-ties go to the earliest in search order."""
    fits = [c for c in candidates if c.fit is not None]
    if not fits:
        errors = [c.error for c in candidates]
        raise next((e for e in errors if isinstance(e, RankDeficient)), errors[0])
    best_rss = min(c.rss for c in fits)
    limit = best_rss * (1.0 + TIE_RTOL) if best_rss > 0 else 0.0
    return next(c for c in fits if c.rss <= limit)


def best_fp(x, y, adjust=None, degree: int = 2, rescale: bool = True) -> tuple[PowerTuple, FitResult]:
    """Best-fitting FP of one degree, by deviance."""
    best = pick_best(fp_search(x, y, adjust, degree, rescale))
    return best.powers, best.fit
