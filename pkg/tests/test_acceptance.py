"""End-to-end acceptance checks, one test per criterion.

Each test carries ``@pytest.mark.criterion(n)``; the terminal summary prints
one PASS/FAIL line per criterion using the first docstring line as title.
"""

import time
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from istrate.data import FeatureMatrix
from istrate.econ import PremiumTable, balances, build_premiums, economic_report, fairness
from istrate.glm import fit_glm
from istrate.ist import simulate_panel
from istrate.penalized import PenaltySpec, fit_path, kkt_violation, lambda_max
from istrate.pipeline import Pipeline, RunConfig, run_pipeline
from istrate.tweedie import (
    TweedieParams,
    deviance_pseudo_residual,
    estimate_power_index,
    sample,
    unit_deviance,
    zero_mass,
)

from conftest import make_panel, tweedie_design
from test_ist import HAND_INDEMNITIES, HAND_PANEL
from test_penalized import grouped_design, independent_kkt
from test_tweedie import total_mass


@pytest.fixture(scope="session")
def demo_runs(tmp_path_factory):
    """Two full runs of the bundled demo config, each in its own directory."""
    root = tmp_path_factory.mktemp("demo")
    runs = []
    for name in ("first", "second"):
        config = RunConfig.demo().with_overrides(output=root / name)
        start = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pipe = run_pipeline(config)
        runs.append((pipe, time.perf_counter() - start))
    return runs


@pytest.mark.criterion(1)
def test_tweedie_zero_mass():
    """Tweedie zero mass: exp(-2) at (1, 1.5, 1), Monte Carlo within 3 SE, < 10 s"""
    start = time.perf_counter()
    params = TweedieParams(1.5, 1.0)
    p0 = zero_mass(1.0, params)
    assert p0 == pytest.approx(np.exp(-2.0), rel=1e-15)
    assert round(p0, 6) == 0.135335
    draws = sample(np.ones(1_000_000), params, np.random.default_rng(2024))
    se = np.sqrt(p0 * (1 - p0) / draws.size)
    assert abs(np.mean(draws == 0) - p0) < 3 * se
    assert time.perf_counter() - start < 10


@pytest.mark.criterion(2)
def test_density_normalization():
    """Density normalization: total mass within 1e-4 of 1 on a 3x3x3 grid, < 60 s"""
    start = time.perf_counter()
    worst = 0.0
    for mu in (0.2, 1.0, 5.0):
        for phi in (0.5, 1.0, 3.0):
            for p in (1.1, 1.5, 1.9):
                worst = max(worst, abs(total_mass(mu, p, phi) - 1.0))
    assert worst <= 1e-4
    assert time.perf_counter() - start < 60


@pytest.mark.criterion(3)
def test_pseudo_residual_gradient():
    """Pseudo-residual gradient: central differences of half deviance within 1e-6 relative"""
    rng = np.random.default_rng(33)
    n = 1000
    p = rng.uniform(1.05, 1.95, n)
    eta = rng.uniform(-3, 3, n)
    y = np.where(rng.random(n) < 0.2, 0.0, rng.lognormal(0, 1.5, n))
    h = 1e-4
    rel = np.empty(n)
    for i in range(n):
        def half(e):
            return 0.5 * float(unit_deviance(y[i], np.exp(e), p[i]))

        # Richardson extrapolation of two central differences
        d1 = (half(eta[i] + h) - half(eta[i] - h)) / (2 * h)
        d2 = (half(eta[i] + h / 2) - half(eta[i] - h / 2)) / h
        fd = (4 * d2 - d1) / 3
        r = float(deviance_pseudo_residual(y[i], eta[i], p[i]))
        rel[i] = abs(fd + r) / max(abs(r), 1e-12)
    assert rel.max() <= 1e-6, f"worst relative error {rel.max():.2e}"


@pytest.mark.criterion(4)
def test_ist_simulator():
    """IST simulator: hand panel reproduced exactly and the jump bound never violated"""
    from istrate.data import GeneratorConfig, generate_synthetic_panel

    table = simulate_panel(make_panel(HAND_PANEL))
    got = {(f, int(y)): v for f, y, v in zip(table.farm_id, table.year, table.indemnity)}
    assert got == HAND_INDEMNITIES
    synthetic = generate_synthetic_panel(GeneratorConfig(n_farms=1000, n_years=11), 7).panel
    sim = simulate_panel(synthetic)
    pos = sim[sim.indemnity > 0]
    assert len(pos) > 100
    assert int(np.sum(~(pos.indemnity > 0.21 * pos.expected_income))) == 0


@pytest.mark.criterion(5)
def test_glm_recovery():
    """GLM recovery: coefficients within 3 SE in >= 95 of 100 runs, monotone trace, < 2 min"""
    start = time.perf_counter()
    beta = np.array([0.5, 0.3, -0.2, 0.1])
    covered = 0
    for seed in range(100):
        design = tweedie_design(5000, beta, 1.5, 1.0, seed=1000 + seed)
        fit = fit_glm(design, 1.5)
        assert np.all(np.diff(fit.trace) <= 0)
        covered += bool(np.all(np.abs(fit.coefficients - beta) <= 3 * fit.standard_errors()))
    assert covered >= 95, f"{covered} of 100 runs covered"
    assert time.perf_counter() - start < 120


@pytest.mark.criterion(6)
def test_penalized_certification():
    """Penalized solver: KKT within 1e-6, empty set at lambda_max, GLM limit, grouped selection"""
    design = grouped_design(800, 6)
    for alpha in (1.0, 0.5):
        path = fit_path(design, 1.5, PenaltySpec(alpha))
        for i in range(len(path)):
            assert kkt_violation(design, 1.5, path.intercepts[i], path.coefs[i],
                                 path.lambdas[i], alpha) <= 1e-6
            assert independent_kkt(design, 1.5, path.intercepts[i], path.coefs[i],
                                   path.lambdas[i], alpha) <= 1e-6
        dummies = path.coefs[:, 4:]
        assert np.all(np.all(dummies == 0, axis=1) | np.all(dummies != 0, axis=1))
        lam = lambda_max(design, 1.5, alpha)
        above = fit_path(design, 1.5, PenaltySpec(alpha, lambda_grid=(4 * lam, 2 * lam, lam)))
        assert np.all(above.coefs == 0)

    rng = np.random.default_rng(8)
    X = rng.standard_normal((3000, 5))
    y = sample(np.exp(0.2 + X @ [0.3, -0.2, 0.0, 0.1, 0.25]), TweedieParams(1.5, 1.0), rng)
    plain = FeatureMatrix.from_arrays(X, y)
    path = fit_path(plain, 1.5)
    np.testing.assert_allclose(path.predict(plain, len(path) - 1), fit_glm(plain, 1.5).fitted,
                               rtol=1e-3)


@pytest.mark.criterion(7)
def test_power_index_recovery():
    """Power-index recovery: p in {1.3, 1.5, 1.7} recovered within 0.10 at n = 10000"""
    for p in (1.3, 1.5, 1.7):
        rng = np.random.default_rng(int(p * 100))
        X = rng.standard_normal((10_000, 2))
        y = sample(np.exp(0.2 + 0.4 * X[:, 0] - 0.3 * X[:, 1]), TweedieParams(p, 1.2), rng)
        design = FeatureMatrix.from_arrays(X, y)
        estimate = estimate_power_index(y, design).params.p
        assert abs(estimate - p) <= 0.10, f"p={p}: estimated {estimate}"


@pytest.mark.criterion(8)
def test_log_rmse_ordering(demo_runs):
    """Log-RMSE ordering: every ML model <= GLM in >= 6 of 7 years, Boosting sd <= GLM sd"""
    pipe, _ = demo_runs[0]
    report = pipe.evaluation()
    table = report.log_rmse_table().set_index(["model", "year"])
    years = pipe.test_years()
    assert len(years) == 7 and len(report.records) == 4 * 7 * 10
    assert not report.failures
    print(table[["mean_log_rmse", "sd_log_rmse"]].unstack("model").round(3))
    for model in ("LASSO", "EN", "Boosting"):
        wins = sum(table.loc[(model, y), "mean_log_rmse"] <= table.loc[("GLM", y), "mean_log_rmse"]
                   for y in years)
        assert wins >= 6, f"{model} beats GLM in {wins} of 7 years"
    for y in years:
        assert table.loc[("Boosting", y), "sd_log_rmse"] <= table.loc[("GLM", y), "sd_log_rmse"]
    assert pipe.timings["evaluate"] < 600


@pytest.mark.criterion(9)
def test_selection_ordering(demo_runs):
    """Selection ordering: LASSO <= EN <= Boosting <= 60 and Boosting ranks every driver first"""
    pipe, _ = demo_runs[0]
    report = pipe.evaluation()
    counts = report.nvars_table().groupby("model")["mean_nvars"].mean()
    print(counts.round(2).to_dict())
    assert counts["LASSO"] <= counts["EN"] <= counts["Boosting"] <= 60
    assert counts["GLM"] == 60
    freq = report.selection_frequency("Boosting").set_index("variable")["frequency"]
    drivers = set(pipe.manifest()["true_drivers"])
    inert = set(pipe.full_design().group_names) - drivers
    assert len(drivers) == 5 and len(inert) == 55
    lowest_driver = min(freq.get(v, 0.0) for v in drivers)
    highest_inert = max(freq.get(v, 0.0) for v in inert)
    assert lowest_driver > highest_inert, (lowest_driver, highest_inert)


@pytest.mark.criterion(10)
def test_economics_exactness():
    """Economics exactness: balance sums, fairness sums, zero report, in-sample GLM balance"""
    rng = np.random.default_rng(10)
    n = 400
    frame = pd.DataFrame({
        "farm_id": [f"f{i % 80}" for i in range(n)],
        "year": 2012 + np.arange(n) // 80,
        "prediction": rng.gamma(0.5, 300.0, n),
        "indemnity": np.where(rng.random(n) < 0.7, 0.0, rng.gamma(1.0, 900.0, n)),
        "value_added_lag": rng.uniform(1e3, 1e5, n),
        "insure_lag": rng.uniform(0, 0.05, n),
    })
    frame["premium"] = frame["prediction"]
    table = PremiumTable(frame)
    series = balances(table)
    total = 0.0
    for b in series.annual:
        total += b
    assert series.multiannual == total
    fair = fairness(table)
    assert fair.total == fair.positive + fair.negative

    exact = PremiumTable(frame.assign(premium=frame["indemnity"], prediction=frame["indemnity"]))
    report = economic_report({"exact": exact}, restrict_to_participants=False)
    assert (report.balance_table().balance == 0).all()
    assert (report.fairness_table()[["pos", "neg", "total"]].to_numpy() == 0).all()

    # in-sample GLM premiums on the full synthetic cohort
    config = RunConfig.demo().with_overrides(output="unused")
    pipe = Pipeline(config)
    design, p = pipe.full_design(), pipe.power()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_glm(design, p, strict=False)
    rows = pipe.features()
    pred = pd.DataFrame({"farm_id": rows.farm_id, "year": rows.year, "mu": fit.fitted})
    premiums = build_premiums(pred, pipe.indemnities(), pipe.panel())
    relative = balances(premiums).multiannual / premiums.frame.premium.sum()
    assert abs(relative) <= 1e-6, f"in-sample GLM balance is {relative:.3%} of premiums"


@pytest.mark.criterion(11)
def test_end_to_end_determinism(demo_runs):
    """End-to-end determinism: two demo runs give byte-identical CSV and SVG outputs"""
    (first, _), (second, _) = demo_runs
    a, b = Path(first.out), Path(second.out)
    names = sorted(p.name for p in a.iterdir() if p.suffix in (".csv", ".svg"))
    assert len([n for n in names if n.endswith(".svg")]) == 6
    assert names == sorted(p.name for p in b.iterdir() if p.suffix in (".csv", ".svg"))
    differing = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
    assert not differing
