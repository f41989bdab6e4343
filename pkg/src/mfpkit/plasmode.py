"""Plasmode generator for ART-style data: known true model, realistic predictors.

Predictors are drawn through a Gaussian copula. A latent standard normal
vector with a chosen correlation matrix is generated, and each margin is
pushed through its own recipe (rounded normal, lognormal, two-piece
lognormal, zero-inflated lognormal, gamma, or thresholds for categories).
The latent correlations are set from target Spearman correlations by the
normal-copula identity ``r = 2 sin(pi * rho_s / 6)``.

All recipe constants live in ``profiles/art.json`` next to the summary
statistics they were tuned against.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .data import Dataset, VariableMeta, load_dataset
from .errors import NonPositiveX5, NonPSDCorrelation
from .fp import FPSpec, fp1, fp2

PSD_TOL = 1e-8
NOISE_VARIANCE = 0.49

PRESETS = {
    "A125": (1, 125),
    "A250": (1, 250),
    "A500": (1, 500),
    "B250": (2001, 2250),
    "B500": (2001, 2500),
    "C250": (3001, 3250),
    "C500": (3001, 3500),
}

# Schema of generated (and published) ART data. x6 carries an explicit shift
# of 1 so the true term log(x6 + 1) is an FP1(0) in the shifted variable even
# when a sample happens to contain no zeros.
ART_SCHEMA = (
    VariableMeta("y", "continuous", "outcome"),
    VariableMeta("x1"),
    VariableMeta("x2", "binary"),
    VariableMeta("x3"),
    VariableMeta("x4", "ordinal"),
    VariableMeta("x5"),
    VariableMeta("x6", shift=1.0),
    VariableMeta("x7"),
    VariableMeta("x8", "binary"),
    VariableMeta("x9", "nominal"),
    VariableMeta("x10"),
)


# --------------------------------------------------------------------------
# True model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    variable: str
    transform: str  # "power" | "identity" | "log1p"
    coefficient: float
    power: float = 1.0

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if self.transform == "identity":
            return self.coefficient * x
        if self.transform == "log1p":
            return self.coefficient * np.log(x + 1.0)
        return self.coefficient * x**self.power


@dataclass(frozen=True)
class TrueModel:
    intercept: float = -4.0
    terms: tuple[Term, ...] = (
        Term("x1", "power", 3.5, 0.5),
        Term("x1", "power", -0.25, 1.0),
        Term("x3", "power", -0.018, 1.0),
        Term("x4a", "identity", -0.4),
        Term("x5", "power", 4.0, -0.2),
        Term("x6", "log1p", 0.25),
        Term("x8", "identity", 0.4),
        Term("x10", "power", 0.021, 1.0),
    )
    noise_variance: float = NOISE_VARIANCE

    @property
    def variables(self) -> list[str]:
        return list(dict.fromkeys(t.variable for t in self.terms))

    def specs(self, noise_linear: bool = False, predictors: Sequence[str] = ()) -> dict[str, FPSpec]:
        """True forms as FPSpecs on the prepared ART variables (x6 shifted by 1).

        With ``noise_linear`` every predictor in ``predictors`` that is not
        in the true model enters linearly instead of being excluded.
        """
        truth = {
            "x1": FPSpec("fp2", fp2(0.5, 1)),
            "x3": FPSpec("linear"),
            "x4a": FPSpec("linear"),
            "x5": FPSpec("fp1", fp1(-0.2)),
            "x6": FPSpec("fp1", fp1(0), shift=1.0),
            "x8": FPSpec("linear"),
            "x10": FPSpec("linear"),
        }
        for name in predictors:
            if name not in truth:
                truth[name] = FPSpec("linear") if noise_linear else FPSpec("out")
        return truth


TRUE_MODEL = TrueModel()


def _x4a(row: Mapping[str, float]):
    if "x4a" in row:
        return row["x4a"]
    return (np.asarray(row["x4"], dtype=float) >= 2).astype(float)


def true_linear_predictor(row: Mapping[str, float], model: TrueModel = TRUE_MODEL):
    """Evaluate the true linear predictor for one row (or columnwise for arrays).

    ``row`` maps variable names to values; ``x4a`` may be given directly or
    derived from the grade-coded ``x4`` (``x4a = [x4 >= 2]``). ``x6`` is the
    raw value, before its shift of 1.
    """
    x5 = np.asarray(row["x5"], dtype=float)
    bad = np.flatnonzero(~(np.atleast_1d(x5) > 0))
    if bad.size:
        raise NonPositiveX5(float(np.atleast_1d(x5)[bad[0]]))
    eta = model.intercept
    for term in model.terms:
        value = _x4a(row) if term.variable == "x4a" else row[term.variable]
        eta = eta + term.evaluate(value)
    return float(eta) if np.ndim(eta) == 0 else np.asarray(eta)


def generate_outcome(eta, seed, variance: float = NOISE_VARIANCE) -> np.ndarray:
    """``eta`` plus i.i.d. normal noise of the given variance."""
    eta = np.asarray(eta, dtype=float)
    rng = np.random.default_rng(seed)
    return eta + rng.normal(0.0, math.sqrt(variance), size=eta.shape)


# --------------------------------------------------------------------------
# Predictor profile
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PredictorProfile:
    names: tuple[str, ...]
    recipes: dict[str, dict]
    targets: dict[str, dict] = field(default_factory=dict)
    spearman: tuple[tuple[str, str, float], ...] = ()
    name: str = "custom"

    def spearman_matrix(self) -> np.ndarray:
        k = len(self.names)
        index = {n: i for i, n in enumerate(self.names)}
        m = np.eye(k)
        for a, b, rho in self.spearman:
            m[index[a], index[b]] = m[index[b], index[a]] = rho
        return m

    def latent_correlation(self) -> np.ndarray:
        """Normal-copula correlation matrix, repaired to be positive semi-definite."""
        return nearest_correlation(2.0 * np.sin(np.pi * self.spearman_matrix() / 6.0))

    def kinds(self) -> dict[str, str]:
        return {n: ("categorical" if r["family"] == "categorical" else "continuous") for n, r in self.recipes.items()}


def load_profile(path=None) -> PredictorProfile:
    """Read a profile JSON file; the bundled ART profile when ``path`` is None."""
    if path is None:
        text = resources.files("mfpkit").joinpath("profiles/art.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    names = tuple(v["name"] for v in raw["variables"])
    return PredictorProfile(
        names,
        {v["name"]: dict(v["recipe"]) for v in raw["variables"]},
        {v["name"]: dict(v.get("target", {})) for v in raw["variables"]},
        tuple((a, b, float(r)) for a, b, r in raw.get("spearman", [])),
        raw.get("name", "custom"),
    )


def nearest_correlation(m: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Clip negative eigenvalues and rescale to a unit diagonal.

    Raises NonPSDCorrelation if the repaired matrix still has an eigenvalue
    below ``-tol``.
    """
    m = 0.5 * (np.asarray(m, dtype=float) + np.asarray(m, dtype=float).T)
    w, v = np.linalg.eigh(m)
    if w.min() < 0:
        # floor slightly above zero so the repaired matrix has a Cholesky factor
        m = (v * np.maximum(w, 1e-10)) @ v.T
        d = np.sqrt(np.diag(m))
        m = m / np.outer(d, d)
    w_min = float(np.linalg.eigvalsh(m).min())
    if w_min < -tol or not np.all(np.isfinite(m)):
        raise NonPSDCorrelation(w_min)
    return m


def _margin(z: np.ndarray, recipe: dict) -> np.ndarray:
    family = recipe["family"]
    if family == "normal":
        x = recipe["mean"] + recipe["sd"] * z
    elif family == "lognormal":
        x = recipe["median"] * np.exp(recipe["sigma"] * z)
    elif family == "two_piece_lognormal":
        # log x is piecewise linear in z: slope sigma_low below the median,
        # sigma_high above it, and optionally sigma_tail beyond tail_start
        zc = np.minimum(z, recipe.get("z_max", np.inf))
        t0 = recipe.get("tail_start", np.inf)
        st = recipe.get("sigma_tail", recipe["sigma_high"])
        sh = recipe["sigma_high"]
        logx = np.where(zc < 0, recipe["sigma_low"] * zc, np.where(zc < t0, sh * zc, sh * t0 + st * (zc - t0)))
        x = recipe["median"] * np.exp(logx)
    elif family == "zero_inflated_lognormal":
        # the lowest p_zero share of the latent becomes exact zeros; the rest
        # maps monotonically onto a lognormal, preserving rank correlation
        u = stats.norm.cdf(z)
        p0 = recipe["p_zero"]
        pos = np.clip((u - p0) / (1.0 - p0), 1e-12, 1.0 - 1e-12)
        zpos = np.minimum(stats.norm.ppf(pos), recipe.get("z_max", np.inf))
        x = np.where(u <= p0, 0.0, recipe["median"] * np.exp(recipe["sigma"] * zpos))
    elif family == "gamma":
        x = stats.gamma.ppf(stats.norm.cdf(z), recipe["shape"], scale=recipe["scale"])
    elif family == "categorical":
        cuts = stats.norm.ppf(np.cumsum(recipe["probs"])[:-1])
        x = np.asarray(recipe["levels"], dtype=float)[np.searchsorted(cuts, z)]
        return x
    else:
        raise ValueError(f"unknown margin family {family!r}")
    if recipe.get("round"):
        x = np.round(x)
    if "digits" in recipe:
        x = np.round(x, recipe["digits"])
    if "min" in recipe:
        x = np.maximum(x, recipe["min"])
    return x


def generate_predictors(n: int, profile: PredictorProfile | None = None, seed=None) -> Dataset:
    """Draw ``n`` rows of predictors (no outcome column) from ``profile``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    profile = load_profile() if profile is None else profile
    corr = profile.latent_correlation()
    chol = np.linalg.cholesky(corr + 1e-12 * np.eye(corr.shape[0]))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, len(profile.names))) @ chol.T
    columns = {name: _margin(z[:, j], profile.recipes[name]) for j, name in enumerate(profile.names)}
    schema = {m.name: m for m in ART_SCHEMA}
    meta = []
    for name in profile.names:
        if name in schema:
            meta.append(schema[name])
        elif profile.recipes[name]["family"] == "categorical":
            kind = "binary" if len(profile.recipes[name]["levels"]) == 2 else "nominal"
            meta.append(VariableMeta(name, kind))
        else:
            meta.append(VariableMeta(name))
    return Dataset(columns, tuple(meta), f"generated:{profile.name}:n={n}:seed={seed}")


def generate_art(n: int = 5000, seed=0, profile: PredictorProfile | None = None,
                 model: TrueModel = TRUE_MODEL, with_eta: bool = False) -> Dataset:
    """Full ART-style dataset: predictors plus ``y`` from the true model.

    The predictor and noise streams are independent children of ``seed``.
    With ``with_eta`` the true linear predictor is kept as an extra
    predictor-role column named ``eta`` (useful for calibration checks; do
    not feed it to selection).
    """
    pred_seed, noise_seed = np.random.SeedSequence(seed).spawn(2)
    x = generate_predictors(n, profile, pred_seed)
    eta = true_linear_predictor(x.columns, model)
    y = generate_outcome(eta, noise_seed, model.noise_variance)
    columns = {"y": y, **x.columns}
    meta = (next(m for m in ART_SCHEMA if m.name == "y"),) + x.meta
    if with_eta:
        columns["eta"] = eta
        meta = meta + (VariableMeta("eta"),)
    provenance = f"generated:art:n={n}:seed={seed}"
    return Dataset(columns, meta, provenance)


def load_art(path) -> Dataset:
    """Load a user-supplied ART file (columns y, x1..x10) with the ART schema."""
    return load_dataset(path, ART_SCHEMA)


# --------------------------------------------------------------------------
# Slicing
# --------------------------------------------------------------------------

_RANGE = re.compile(r"^\s*(\d+)\s*[-:]\s*(\d+)\s*$")


def parse_slice(spec) -> tuple[int, int]:
    """``"A250"``, ``"1-250"`` or ``(1, 250)`` to a 1-based inclusive range."""
    if isinstance(spec, str):
        if spec.upper() in PRESETS:
            return PRESETS[spec.upper()]
        m = _RANGE.match(spec)
        if not m:
            raise ValueError(f"unknown slice {spec!r}; use a preset {sorted(PRESETS)} or 'start-end'")
        start, end = int(m.group(1)), int(m.group(2))
    else:
        start, end = (int(v) for v in spec)
    if start < 1 or end < start:
        raise ValueError(f"invalid slice range {start}-{end}")
    return start, end


def slice_rows(ds: Dataset, spec) -> Dataset:
    """Rows ``start..end`` (1-based, inclusive, by position) with ids renumbered from 1.

    Observation numbers inside a slice run 1..m, as in an extracted subset file.
    """
    start, end = parse_slice(spec)
    if end > ds.n:
        raise ValueError(f"slice {start}-{end} exceeds the {ds.n} rows available")
    label = spec.upper() if isinstance(spec, str) and spec.upper() in PRESETS else f"{start}-{end}"
    part = ds.take(np.arange(start - 1, end), provenance=f"{ds.provenance}[{label}]")
    return Dataset(part.columns, part.meta, part.provenance, None, part.shifted)
