import math

import numpy as np
import pytest
from scipy import stats

import oracle
from mfpkit.errors import NonPositiveX5, NonPSDCorrelation
from mfpkit.fp import fp1, fp2
from mfpkit.plasmode import (
    PRESETS,
    TRUE_MODEL,
    PredictorProfile,
    generate_art,
    generate_outcome,
    generate_predictors,
    load_profile,
    nearest_correlation,
    parse_slice,
    slice_rows,
    true_linear_predictor,
)

CONTINUOUS = ("x1", "x3", "x5", "x6", "x7", "x10")


@pytest.fixture(scope="module")
def art():
    return generate_art(5000, seed=0, with_eta=True)


@pytest.fixture(scope="module")
def big():
    return generate_predictors(200_000, seed=1)


def test_x1_component_is_six():
    total = sum(t.evaluate(4.0) for t in TRUE_MODEL.terms if t.variable == "x1")
    assert total == pytest.approx(6.0, abs=1e-12)


def test_log_term_vanishes_at_zero():
    term = next(t for t in TRUE_MODEL.terms if t.variable == "x6")
    assert term.evaluate(0.0) == 0.0


def test_eta_matches_hand_coded_evaluator():
    rng = np.random.default_rng(0)
    for _ in range(20):
        row = {"x1": rng.uniform(20, 80), "x3": rng.uniform(1, 100), "x4": float(rng.integers(1, 4)),
               "x5": rng.uniform(0.5, 200), "x6": float(rng.integers(0, 1000)), "x8": float(rng.integers(0, 2)),
               "x10": rng.uniform(1, 40)}
        ref = oracle.linear_predictor(**row)
        assert true_linear_predictor(row) == pytest.approx(ref, abs=1e-12)
        row["x4a"] = 1.0 if row.pop("x4") >= 2 else 0.0
        assert true_linear_predictor(row) == pytest.approx(ref, abs=1e-12)


def test_non_positive_x5():
    row = {"x1": 50, "x3": 10, "x4": 2, "x5": 0.0, "x6": 1, "x8": 0, "x10": 5}
    with pytest.raises(NonPositiveX5):
        true_linear_predictor(row)


def test_noise_variables_not_in_eta(art):
    cols = dict(art.columns)
    base = true_linear_predictor(cols)
    for name in ("x2", "x7", "x9"):
        changed = dict(cols)
        changed[name] = np.zeros(art.n)
        assert np.array_equal(true_linear_predictor(changed), base)
    assert np.allclose(base, art["eta"])


def test_true_specs():
    specs = TRUE_MODEL.specs()
    assert specs["x1"].powers == fp2(0.5, 1)
    assert specs["x5"].powers == fp1(-0.2)
    assert specs["x6"].powers == fp1(0) and specs["x6"].shift == 1.0
    assert {k for k, s in specs.items() if s.selected} == {"x1", "x3", "x4a", "x5", "x6", "x8", "x10"}


def test_outcome_reproducible():
    eta = np.zeros(100)
    assert np.array_equal(generate_outcome(eta, 3), generate_outcome(eta, 3))
    assert not np.array_equal(generate_outcome(eta, 3), generate_outcome(eta, 4))


def test_generation_deterministic():
    a = generate_art(300, seed=5)
    b = generate_art(300, seed=5)
    for name in a.columns:
        assert np.array_equal(a[name], b[name])
    assert a.provenance == "generated:art:n=300:seed=5"


def test_residual_variance_and_r2(art):
    resid = art.y - art["eta"]
    assert 0.45 <= np.var(resid, ddof=1) <= 0.53
    r2 = np.corrcoef(art["eta"], art.y)[0, 1] ** 2
    assert 0.47 <= r2 <= 0.53


def test_heavy_tail_at_n250():
    x5 = generate_art(250, seed=0)["x5"]
    assert x5.min() > 0
    assert x5.max() > 10 * np.median(x5)


def test_spearman_x6_x7(art):
    rho = stats.spearmanr(art["x6"], art["x7"])[0]
    assert abs(rho - 0.40) <= 0.05


def test_zero_correlation_profile():
    prof = load_profile()
    flat = PredictorProfile(prof.names, prof.recipes, prof.targets, (), "flat")
    ds = generate_predictors(5000, flat, seed=0)
    rho = stats.spearmanr(np.column_stack([ds[n] for n in prof.names]))[0]
    off = rho[~np.eye(len(prof.names), dtype=bool)]
    assert np.nanmax(np.abs(off)) < 0.1


def test_categorical_frequencies(big):
    assert np.mean(big["x2"] == 1) == pytest.approx(0.752, abs=0.01)
    assert np.mean(big["x8"] == 1) == pytest.approx(0.34, abs=0.01)
    for level, p in zip((1, 2, 3), (0.12, 0.656, 0.224)):
        assert np.mean(big["x4"] == level) == pytest.approx(p, abs=0.01)
    for level, p in zip((1, 2, 3), (0.704, 0.232, 0.064)):
        assert np.mean(big["x9"] == level) == pytest.approx(p, abs=0.01)


@pytest.mark.parametrize("name", CONTINUOUS)
def test_population_moments_within_15_percent(big, name):
    target = load_profile().targets[name]
    x = big[name]
    for stat, value in (("mean", x.mean()), ("median", np.median(x)), ("sd", x.std(ddof=1))):
        assert value == pytest.approx(target[stat], rel=0.15), stat


@pytest.mark.parametrize("name", CONTINUOUS)
def test_calibration_seed_moments_within_15_percent(art, name):
    target = load_profile().targets[name]
    x = art[name]
    for stat, value in (("mean", x.mean()), ("median", np.median(x)), ("sd", x.std(ddof=1))):
        assert value == pytest.approx(target[stat], rel=0.15), stat


def test_x1_rounded_and_clipped(big):
    x1 = big["x1"]
    assert np.array_equal(x1, np.round(x1)) and x1.min() >= 20


def test_latent_correlation_is_valid():
    m = load_profile().latent_correlation()
    assert np.allclose(m, m.T) and np.allclose(np.diag(m), 1)
    assert np.linalg.eigvalsh(m).min() > -1e-8


def test_nearest_correlation_repairs_indefinite():
    bad = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    assert np.linalg.eigvalsh(bad).min() < 0
    fixed = nearest_correlation(bad)
    assert np.allclose(np.diag(fixed), 1)
    assert np.linalg.eigvalsh(fixed).min() > -1e-8
    np.linalg.cholesky(fixed + 1e-12 * np.eye(3))


def test_nearest_correlation_rejects_garbage():
    with pytest.raises(NonPSDCorrelation):
        nearest_correlation(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_copula_identity():
    # rank correlation of a bivariate normal with latent r = 2 sin(pi rho / 6)
    rho = 0.4
    r = 2 * math.sin(math.pi * rho / 6)
    rng = np.random.default_rng(0)
    z = rng.multivariate_normal([0, 0], [[1, r], [r, 1]], 200_000)
    assert stats.spearmanr(z[:, 0], z[:, 1])[0] == pytest.approx(rho, abs=0.01)


def test_slices():
    ds = generate_art(5000, seed=2)
    a = slice_rows(ds, "A250")
    assert a.n == 250
    assert np.array_equal(a.y, ds.y[:250])
    assert list(a.row_ids[:3]) == [1, 2, 3]
    c = slice_rows(ds, "C500")
    assert np.array_equal(c.y, ds.y[3000:3500])
    assert "[C500]" in c.provenance
    whole = slice_rows(ds, (1, 5000))
    assert all(np.array_equal(whole[n], ds[n]) for n in ds.columns)
    with pytest.raises(ValueError):
        slice_rows(generate_art(100, seed=0), "A250")


def test_presets_disjoint_across_letters():
    ranges = {k: set(range(a, b + 1)) for k, (a, b) in PRESETS.items()}
    for k1, k2 in [(a, b) for a in ranges for b in ranges if a[0] != b[0]]:
        assert not ranges[k1] & ranges[k2]


@pytest.mark.parametrize("spec, expected", [("a250", (1, 250)), ("11-20", (11, 20)), ((3, 4), (3, 4))])
def test_parse_slice(spec, expected):
    assert parse_slice(spec) == expected


@pytest.mark.parametrize("spec", ["Z9", "0-10", "10-5"])
def test_parse_slice_rejects(spec):
    with pytest.raises(ValueError):
        parse_slice(spec)
