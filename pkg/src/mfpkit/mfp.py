"""Multivariable fractional polynomials: backward elimination cycled with the FSP.

Every cycle visits all predictors in a fixed order. A continuous predictor
runs the function selection procedure adjusted for the current forms of all
others (their coefficients re-estimated in each candidate fit); a binary
predictor gets a 1-df in/out test. Cycling stops when a full cycle leaves
every form unchanged.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, atomic_write, prepare
from .errors import NameMismatch, NonPositiveInput
from .fp import FPSpec, PowerTuple, decimal_scale
from .fsp import run_fsp, significant
from .linreg import FitResult, chisq_sf, dd_from_rss, fit_ols

logger = logging.getLogger(__name__)

MAX_CYCLES = 10
MODEL_FORMAT = "mfpkit-model"
MODEL_VERSION = 1


@dataclass
class MFPModel:
    specs: dict[str, FPSpec]
    alpha_select: float
    alpha_fp: float
    cycles_used: int
    converged: bool
    final_fit: FitResult
    kinds: dict[str, str] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)
    outcome: str = "y"
    history: list[dict[str, str]] = field(default_factory=list, repr=False)

    @property
    def selected(self) -> list[str]:
        return [name for name, s in self.specs.items() if s.selected]

    @property
    def intercept(self) -> float:
        return float(self.final_fit.coefficients[0])

    def label(self, name: str) -> str:
        return spec_label(self.specs[name], self.kinds.get(name, "continuous"))

    def contribution(self, ds: Dataset, name: str) -> np.ndarray:
        """Partial predictor basis(x) @ beta for one variable (zero if out)."""
        spec = self.specs[name]
        if not spec.selected:
            return np.zeros(ds.n)
        return spec.basis(ds[name]) @ np.asarray(spec.coefficients)

    def column_slices(self) -> dict[str, slice]:
        """Positions of each selected variable's coefficients in ``final_fit``."""
        out, pos = {}, 1
        for name, spec in self.specs.items():
            k = spec.n_columns
            if k:
                out[name] = slice(pos, pos + k)
            pos += k
        return out

    def predict(self, ds: Dataset) -> np.ndarray:
        eta = np.full(ds.n, self.intercept)
        for name in self.selected:
            eta += self.contribution(ds, name)
        return eta

    def forms(self) -> dict[str, tuple]:
        return {k: (s.status, s.powers) for k, s in self.specs.items()}


def spec_label(spec: FPSpec, kind: str) -> str:
    if kind == "continuous":
        return spec.label()
    return "in" if spec.selected else "out"


def design_matrix(ds: Dataset, specs: dict[str, FPSpec], exclude: str | None = None) -> np.ndarray:
    """Columns of all selected predictors except ``exclude`` (no intercept)."""
    blocks = [spec.basis(ds[name]) for name, spec in specs.items() if spec.selected and name != exclude]
    if not blocks:
        return np.empty((ds.n, 0))
    return np.hstack(blocks)


def full_design(ds: Dataset, specs: dict[str, FPSpec]) -> np.ndarray:
    return np.hstack([np.ones((ds.n, 1)), design_matrix(ds, specs)])


def _initial_specs(ds: Dataset, rescale: bool) -> dict[str, FPSpec]:
    specs = {}
    for m in ds.predictors:
        if m.is_continuous:
            x = ds[m.name]
            bad = np.flatnonzero(~(x > 0))
            if bad.size:
                raise NonPositiveInput(int(bad[0]), float(x[bad[0]]), m.name)
            specs[m.name] = FPSpec("linear", shift=m.shift or 0.0, scale=decimal_scale(x) if rescale else 1.0)
        else:
            specs[m.name] = FPSpec("linear")
    return specs


def visit_order(ds: Dataset, specs: dict[str, FPSpec]) -> list[str]:
    """Predictors sorted by ascending p-value of their removal from the full linear model."""
    y = ds.y
    full = fit_ols(full_design(ds, specs), y, check_degenerate=False)
    pvals = []
    for i, name in enumerate(specs):
        reduced = fit_ols(np.hstack([np.ones((ds.n, 1)), design_matrix(ds, specs, exclude=name)]), y,
                          check_degenerate=False)
        pvals.append((chisq_sf(dd_from_rss(reduced.rss, full.rss, ds.n), 1), i, name))
    return [name for _, _, name in sorted(pvals)]


def _binary_step(ds: Dataset, name: str, specs, alpha_select: float, forced: bool) -> FPSpec:
    if forced or alpha_select >= 1.0:
        return FPSpec("linear")
    y = ds.y
    base = np.hstack([np.ones((ds.n, 1)), design_matrix(ds, specs, exclude=name)])
    without = fit_ols(base, y, check_degenerate=False)
    with_ = fit_ols(np.hstack([base, ds[name][:, None]]), y, check_degenerate=False)
    p = chisq_sf(dd_from_rss(without.rss, with_.rss, ds.n), 1)
    return FPSpec("linear") if significant(p, alpha_select) else FPSpec("out")


def refit(ds: Dataset, specs: dict[str, FPSpec]) -> tuple[dict[str, FPSpec], FitResult]:
    """Fit the model implied by ``specs`` and load the coefficients back into them."""
    fit = fit_ols(full_design(ds, specs), ds.y, check_degenerate=False)
    out, pos = {}, 1
    for name, spec in specs.items():
        k = spec.n_columns
        out[name] = spec.with_coefficients(fit.coefficients[pos:pos + k])
        pos += k
    return out, fit


def fit_mfp(
    ds: Dataset,
    alpha_select: float = 0.05,
    alpha_fp: float | None = None,
    max_cycles: int = MAX_CYCLES,
    rescale: bool = True,
) -> MFPModel:
    """Run MFP(alpha_select, alpha_fp) on ``ds``.

    The returned model has ``converged=False`` (and a logged warning) when
    ``max_cycles`` cycles pass without reaching a fixed point.
    """
    alpha_fp = alpha_select if alpha_fp is None else alpha_fp
    ds = prepare(ds)
    metas = {m.name: m for m in ds.predictors}
    specs = _initial_specs(ds, rescale)
    order = visit_order(ds, specs)
    history = []
    converged = False
    cycles = 0
    while cycles < max_cycles:
        cycles += 1
        before = {k: (s.status, s.powers) for k, s in specs.items()}
        for name in order:
            m = metas[name]
            if m.is_continuous:
                adjust = design_matrix(ds, specs, exclude=name)
                res = run_fsp(ds[name], ds.y, adjust, alpha=alpha_fp, forced_in=m.forced_in,
                              max_degree=m.max_degree, alpha_select=alpha_select, rescale=rescale,
                              shift=m.shift or 0.0)
                specs[name] = res.selection
            else:
                specs[name] = _binary_step(ds, name, specs, alpha_select, m.forced_in)
        history.append({k: spec_label(s, metas[k].kind) for k, s in specs.items()})
        if {k: (s.status, s.powers) for k, s in specs.items()} == before:
            converged = True
            break
    if not converged:
        logger.warning("MFP did not converge within %d cycles", max_cycles)
    specs, fit = refit(ds, specs)
    return MFPModel(specs, alpha_select, alpha_fp, cycles, converged, fit,
                    {k: m.kind for k, m in metas.items()}, order, ds.outcome, history)


def fixed_model(ds: Dataset, forms: dict[str, FPSpec | PowerTuple | str | None]) -> MFPModel:
    """Fit a model with imposed forms (no selection).

    ``forms`` maps predictor name to an FPSpec, a PowerTuple, ``"linear"``,
    ``"in"`` or ``None``/``"out"``; predictors not mentioned are out.
    Continuous variables use scale 1 and their dataset shift unless an FPSpec
    says otherwise.
    """
    ds = prepare(ds)
    specs = {}
    for m in ds.predictors:
        f = forms.get(m.name)
        shift = m.shift or 0.0
        if isinstance(f, FPSpec):
            spec = f
        elif f is None or f == "out":
            spec = FPSpec("out", shift=shift)
        elif f in ("linear", "in"):
            spec = FPSpec("linear", shift=shift)
        elif isinstance(f, PowerTuple):
            spec = FPSpec.from_powers(f, shift=shift)
        else:
            raise ValueError(f"cannot interpret form {f!r} for {m.name}")
        specs[m.name] = spec
    specs, fit = refit(ds, specs)
    return MFPModel(specs, 1.0, 1.0, 0, True, fit, {m.name: m.kind for m in ds.predictors},
                    [m.name for m in ds.predictors], ds.outcome)


def r2_reduction(model: MFPModel, ds: Dataset) -> dict[str, float]:
    """Percent drop in R^2 when each selected predictor is removed (others' forms kept)."""
    ds = prepare(ds)
    full = fit_ols(full_design(ds, model.specs), ds.y, check_degenerate=False)
    out = {}
    for name in model.selected:
        design = np.hstack([np.ones((ds.n, 1)), design_matrix(ds, model.specs, exclude=name)])
        r2 = fit_ols(design, ds.y, check_degenerate=False).r2
        out[name] = 100.0 * (full.r2 - r2) / full.r2
    return out


# --------------------------------------------------------------------------
# Model comparison
# --------------------------------------------------------------------------


@dataclass
class ComparisonRow:
    name: str
    kind: str
    a: str
    cell: str  # "=" or b's form
    truth: str | None
    inclusion_agree: bool
    power_agree: bool


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]

    @property
    def inclusion_agreements(self) -> int:
        return sum(r.inclusion_agree for r in self.rows)

    @property
    def power_agreements(self) -> int:
        return sum(r.power_agree for r in self.rows)

    def table(self) -> tuple[list[str], list[list]]:
        header = ["variable", "kind", "a", "b", "truth", "inclusion_agree", "power_agree"]
        return header, [[r.name, r.kind, r.a, r.cell, r.truth or "", r.inclusion_agree, r.power_agree] for r in self.rows]


def compare_models(a: MFPModel, b: MFPModel, truth: dict[str, FPSpec] | None = None) -> ComparisonReport:
    """Per-predictor agreement of model ``b`` with model ``a`` ("=" when forms match)."""
    if set(a.specs) != set(b.specs):
        raise NameMismatch(set(a.specs) - set(b.specs), set(b.specs) - set(a.specs))
    rows = []
    for name in a.specs:
        kind = a.kinds.get(name, "continuous")
        la, lb = a.label(name), b.label(name)
        t = None
        if truth is not None:
            t = spec_label(truth.get(name, FPSpec("out")), kind)
        rows.append(ComparisonRow(name, kind, la, "=" if la == lb else lb, t,
                                  a.specs[name].selected == b.specs[name].selected, la == lb))
    return ComparisonReport(rows)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def model_to_dict(model: MFPModel) -> dict:
    variables = []
    for name, s in model.specs.items():
        variables.append({
            "name": name,
            "kind": model.kinds.get(name, "continuous"),
            "status": s.status,
            "powers": None if s.powers is None else list(s.powers.powers),
            "coefficients": list(s.coefficients),
            "shift": s.shift,
            "scale": s.scale,
        })
    f = model.final_fit
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "outcome": model.outcome,
        "alpha_select": model.alpha_select,
        "alpha_fp": model.alpha_fp,
        "cycles_used": model.cycles_used,
        "converged": model.converged,
        "order": list(model.order),
        "intercept": model.intercept,
        "variables": variables,
        "fit": {
            "n": f.n, "p": f.p, "rss": f.rss, "deviance": f.deviance, "r2": f.r2,
            "sigma2_hat": f.sigma2_hat, "coefficients": list(map(float, f.coefficients)),
            "cov": [list(map(float, row)) for row in f.cov],
        },
    }


def model_from_dict(d: dict) -> MFPModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not an mfpkit model file")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model file version {d.get('version')}")
    specs, kinds = {}, {}
    for v in d["variables"]:
        pw = v["powers"]
        powers = None if pw is None else PowerTuple(len(pw), *pw)
        specs[v["name"]] = FPSpec(v["status"], powers, tuple(v["coefficients"]), v["shift"], v["scale"])
        kinds[v["name"]] = v["kind"]
    f = d["fit"]
    fit = FitResult(np.array(f["coefficients"]), f["rss"], f["deviance"], f["r2"], f["sigma2_hat"],
                    np.array(f["cov"]), f["n"], f["p"], np.empty(0))
    return MFPModel(specs, d["alpha_select"], d["alpha_fp"], d["cycles_used"], d["converged"], fit,
                    kinds, list(d["order"]), d["outcome"])


def save_model(model: MFPModel, path) -> None:
    atomic_write(path, json.dumps(model_to_dict(model), indent=2) + "\n")


def load_model(path) -> MFPModel:
    return model_from_dict(json.loads(Path(path).read_text()))
