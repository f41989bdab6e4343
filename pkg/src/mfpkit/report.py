"""Report tables: fitted-function curves, smoothed residuals and run manifests."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .data import atomic_write
from .errors import VariableNotInModel
from .fp import FPSpec
from .fsp import FSPResult
from .linreg import FitResult
from .mfp import MFPModel

Z95 = 1.959963984540054
DEFAULT_GRID = 200


@dataclass(frozen=True)
class CurveTable:
    """Partial predictor of one variable on a grid, with 95% pointwise bounds.

    ``x`` is on the raw scale of the variable (before any origin shift).
    The bounds condition on the selected powers. Because those powers were
    themselves chosen by looking at the data, the true uncertainty about the
    function is larger than the bands show.
    """

    variable: str
    x: np.ndarray
    fit: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    label: str = ""

    def table(self) -> tuple[list[str], list[list]]:
        header = ["x", "fit", "lo", "hi"]
        return header, [list(r) for r in zip(self.x, self.fit, self.lo, self.hi)]


def _variable_block(model_or_fit, variable: str) -> tuple[FPSpec, np.ndarray, np.ndarray]:
    """(spec, coefficients, covariance block) of ``variable``'s own columns."""
    if isinstance(model_or_fit, MFPModel):
        spec = model_or_fit.specs.get(variable)
        if spec is None or not spec.selected:
            raise VariableNotInModel(variable)
        cols = model_or_fit.column_slices()[variable]
        cov = model_or_fit.final_fit.cov[cols, cols]
        return spec, np.asarray(spec.coefficients), cov
    if isinstance(model_or_fit, FSPResult):
        spec = model_or_fit.selection
        fit = model_or_fit.selected_fit
        if not spec.selected or fit is None:
            raise VariableNotInModel(variable)
        k = spec.n_columns
        return spec, np.asarray(spec.coefficients), fit.cov[-k:, -k:]
    if isinstance(model_or_fit, tuple) and len(model_or_fit) == 2:
        # (FPSpec, covariance of its coefficients), e.g. for hand-built specs
        spec, cov = model_or_fit
        if not spec.selected:
            raise VariableNotInModel(variable)
        return spec, np.asarray(spec.coefficients), np.atleast_2d(np.asarray(cov, dtype=float))
    raise TypeError(f"cannot draw a curve from {type(model_or_fit).__name__}")


def default_grid(x, points: int = DEFAULT_GRID) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.linspace(float(x.min()), float(x.max()), points)


def function_curve(model_or_fit, variable: str, grid=None, data=None, points: int = DEFAULT_GRID) -> CurveTable:
    """Fitted function ``basis(x) @ beta`` of one variable with pointwise 95% bounds.

    Parameters
    ----------
    model_or_fit
        An :class:`MFPModel`, an :class:`FSPResult`, or a ``(FPSpec, cov)`` pair.
    variable
        Predictor name (a label only for the last two forms).
    grid
        Raw-scale x values; when omitted, ``points`` equally spaced values
        spanning ``data``.
    data
        Raw values of the variable, used for the default grid.

    Notes
    -----
    Other predictors are held at the mean of their contributions, which only
    moves the curve vertically and is absorbed in the intercept, so the
    curve is centred nowhere in particular; compare shapes, not levels. The
    bands use the coefficient covariance of the selected model and so treat
    its powers as known in advance, which understates the uncertainty of a
    data-driven function.
    """
    spec, beta, cov = _variable_block(model_or_fit, variable)
    if grid is None:
        if data is None:
            raise ValueError("either grid or data is needed")
        grid = default_grid(data, points)
    grid = np.asarray(grid, dtype=float)
    b = spec.basis(grid + spec.shift)
    fit = b @ beta
    var = np.einsum("ij,jk,ik->i", b, cov, b)
    half = Z95 * np.sqrt(np.maximum(var, 0.0))
    return CurveTable(variable, grid, fit, fit - half, fit + half, spec.label())


# Running mean of residuals over the nearest neighbours in x. No particular
# smoother is prescribed for these plots, so this one is a stand-in and every
# table it produces says so in its header.
SMOOTHER_NOTE = "smoother: running mean over nearest neighbours in x (stand-in)"


@dataclass(frozen=True)
class SmoothedResiduals:
    x: np.ndarray
    smooth: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    k: int

    def table(self) -> tuple[list[str], list[list], list[str]]:
        header = ["x", "smoothed_residual", "lo", "hi"]
        comments = [f"{SMOOTHER_NOTE}; window k={self.k}"]
        return header, [list(r) for r in zip(self.x, self.smooth, self.lo, self.hi)], comments


def _nearest_windows(xs: np.ndarray, k: int) -> np.ndarray:
    """Start index of the k contiguous sorted points nearest to each point."""
    n = xs.shape[0]
    starts = np.empty(n, dtype=int)
    s = 0
    for i in range(n):
        # windows only ever move right as i increases
        s = max(s, i - k + 1)
        while s + k < n and xs[s + k] - xs[i] < xs[i] - xs[s]:
            s += 1
        starts[i] = min(s, n - k)
    return starts


def smooth_residuals(residuals, x, window_fraction: float = 0.2) -> SmoothedResiduals:
    """Running mean of residuals against ``x`` with a 95% band ``mean +- 1.96 sd / sqrt(k)``.

    ``residuals`` may be a :class:`FitResult`. Each point's window is the
    ``ceil(window_fraction * n)`` observations nearest to it in ``x``.
    """
    if isinstance(residuals, FitResult):
        residuals = residuals.residuals
    r = np.asarray(residuals, dtype=float)
    x = np.asarray(x, dtype=float)
    if r.shape != x.shape:
        raise ValueError("residuals and x must have the same length")
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window_fraction must be in (0, 1]")
    n = r.shape[0]
    k = max(1, min(n, math.ceil(window_fraction * n)))
    order = np.argsort(x, kind="stable")
    xs, rs = x[order], r[order]
    starts = _nearest_windows(xs, k)
    c1 = np.concatenate([[0.0], np.cumsum(rs)])
    c2 = np.concatenate([[0.0], np.cumsum(rs * rs)])
    s1 = c1[starts + k] - c1[starts]
    s2 = c2[starts + k] - c2[starts]
    mean = s1 / k
    if k > 1:
        var = np.maximum((s2 - k * mean * mean) / (k - 1), 0.0)
    else:
        var = np.zeros(n)
    half = Z95 * np.sqrt(var / k)
    return SmoothedResiduals(xs, mean, mean - half, mean + half, k)


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(command: str, flags: Mapping[str, Any], inputs: Sequence[str] = ()) -> str:
    """Hash of the command, its flags and the contents of its input files.

    Output locations are not part of the configuration and should be left
    out of ``flags``.
    """
    payload = {
        "command": command,
        "flags": {k: flags[k] for k in sorted(flags)},
        "inputs": [file_digest(p) for p in inputs],
    }
    text = json.dumps(payload, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def build_manifest(command: str, flags: Mapping[str, Any], inputs: Sequence[str] = (), seed=None,
                   provenance: str = "", outputs: Sequence[str] = ()) -> dict:
    from . import __version__

    return {
        "command": command,
        "flags": {k: flags[k] for k in sorted(flags)},
        "inputs": {str(p): file_digest(p) for p in inputs},
        "config_hash": config_hash(command, flags, inputs),
        "seed": seed,
        "provenance": provenance,
        "outputs": [str(p) for p in outputs],
        "version": __version__,
    }


def write_manifest(path, manifest: dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
