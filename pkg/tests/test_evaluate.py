import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

import istrate.evaluate as ev
from istrate.data import FeatureMatrix, GeneratorConfig, build_features, generate_synthetic_panel
from istrate.errors import DomainError, PlanError, SingularDesignError
from istrate.evaluate import (
    FitRecord,
    ModelConfig,
    log_rmse,
    make_split_plan,
    rmse,
    run_experiment,
    selection_frequency,
    vif,
)
from istrate.ist import simulate_panel

from conftest import make_panel


def window_rows(n_farms=100):
    panel = make_panel([(f"f{i:03d}", y, 100.0 + (i % 7) * (y % 3))
                        for i in range(n_farms) for y in range(2008, 2013)])
    return build_features(panel, simulate_panel(panel))


@pytest.fixture(scope="module")
def small_rows():
    config = GeneratorConfig(n_farms=160, n_years=7, n_active=3, n_noise=10,
                             n_categorical=2, n_currency=2)
    panel = generate_synthetic_panel(config, 5).panel
    return build_features(panel, simulate_panel(panel))


def test_plan_counts_and_determinism():
    rows = window_rows()
    plan = make_split_plan(rows, [2012], seed=3)
    assert len(plan.train[2012]) == 10
    assert all(len(t) == 75 for t in plan.train[2012])
    assert np.all(rows.year[plan.test[2012]] == 2012) and len(plan.test[2012]) == 100
    for train in plan.train[2012]:
        assert np.all(rows.year[train] == 2011)
        assert not set(train) & set(plan.test[2012])
    again = make_split_plan(rows, [2012], seed=3)
    for a, b in zip(plan.train[2012], again.train[2012]):
        np.testing.assert_array_equal(a, b)
    other = make_split_plan(rows, [2012], seed=4)
    assert any(not np.array_equal(a, b) for a, b in zip(plan.train[2012], other.train[2012]))


def test_plan_all_prior_window():
    rows = window_rows()
    plan = make_split_plan(rows, [2012], seed=0, train_window="all_prior", resamples=3)
    assert all(len(t) == 75 for t in plan.train[2012])   # 100 prior rows, all from 2011
    with pytest.raises(PlanError):
        make_split_plan(rows, [2012], seed=0, train_window="rolling")


def test_plan_errors_name_the_year():
    rows = window_rows()
    with pytest.raises(PlanError, match="2015"):
        make_split_plan(rows, [2015], seed=0)
    with pytest.raises(PlanError, match="2011"):
        make_split_plan(rows, [2011], seed=0)


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.5355339059327378, rel=1e-15)
    assert log_rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.log(np.sqrt(12.5)))
    with pytest.raises(DomainError):
        rmse([1.0], [1.0, 2.0])


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=50))
def test_constant_mean_predictor_gives_population_sd(values):
    y = np.array(values)
    assert rmse(np.full(y.size, y.mean()), y) == pytest.approx(y.std(), rel=1e-9, abs=1e-9)


def _record(selected):
    return FitRecord("LASSO", 2012, 0, 1.0, 0.0, tuple(selected), 0.1)


def test_selection_frequency():
    records = [_record(["a", "b"]), _record(["a"]), _record(["a", "c"]), _record([])]
    freq = selection_frequency(records)
    assert freq.variable.tolist() == ["a", "b", "c"]
    assert freq.frequency.tolist() == [1.0 * 3 / 4, 0.25, 0.25]
    full = selection_frequency([_record(["a"])] * 70)
    assert full.frequency.tolist() == [1.0]
    assert "z" not in set(full.variable)       # never selected: frequency 0 by omission


def test_vif_examples(rng):
    H = np.array([[1, 1, 1, 1, -1, -1, -1, -1],
                  [1, 1, -1, -1, 1, 1, -1, -1],
                  [1, -1, 1, -1, 1, -1, 1, -1]], float).T
    table = vif(FeatureMatrix.from_arrays(H, np.ones(8)))
    np.testing.assert_allclose(table.vif, 1.0, rtol=1e-12)

    x = rng.standard_normal(500)
    dup = vif(FeatureMatrix.from_arrays(np.column_stack([x, x, rng.standard_normal(500)]),
                                        np.ones(500)))
    assert np.isinf(dup.vif[0]) and np.isinf(dup.vif[1]) and np.isfinite(dup.vif[2])

    rho = 0.999
    x2 = rho * x + np.sqrt(1 - rho ** 2) * rng.standard_normal(500)
    X = np.column_stack([x, x2])
    table = vif(FeatureMatrix.from_arrays(X, np.ones(500)))
    r2 = np.corrcoef(x, x2)[0, 1] ** 2
    np.testing.assert_allclose(table.vif, 1 / (1 - r2), rtol=1e-8)
    assert 250 < table.vif[0] < 1000


def test_generalized_vif_for_groups(rng):
    n = 2000
    level = rng.integers(0, 3, n)
    D = (level[:, None] == np.array([1, 2])).astype(float)
    z = rng.standard_normal(n)
    design = FeatureMatrix.from_arrays(np.column_stack([z, D]), np.ones(n), groups=[0, 1, 1],
                                       group_names=["z", "cat"])
    table = vif(design)
    assert table.group.tolist() == ["z", "cat"]
    assert table.n_columns.tolist() == [1, 2]
    np.testing.assert_allclose(table.vif, 1.0, atol=0.01)
    # for a singleton group the generalized VIF is the classical one
    Xo = np.column_stack([np.ones(n), D])
    resid = z - Xo @ np.linalg.lstsq(Xo, z, rcond=None)[0]
    r2 = 1 - resid @ resid / np.sum((z - z.mean()) ** 2)
    assert table.vif[0] == pytest.approx(1 / (1 - r2), rel=1e-8)
    with pytest.raises(DomainError):
        vif(FeatureMatrix.from_arrays(z, np.ones(n)))


def test_model_config_validation():
    assert ModelConfig.from_dict({"models": ["GLM"]}).models == ("GLM",)
    with pytest.raises(DomainError):
        ModelConfig.from_dict({"models": ["SVM"]})
    with pytest.raises(DomainError):
        ModelConfig.from_dict({"learning": 1})


def test_two_models_two_years_make_forty_records(small_rows, tmp_path):
    years = sorted(set(small_rows.year))[-2:]
    plan = make_split_plan(small_rows, years, seed=1)
    config = ModelConfig(models=("GLM", "LASSO"))
    report = run_experiment(small_rows, plan, 1.5, config)
    assert len(report.records) == 40
    assert not report.failures
    per_model = pd.Series([r.model for r in report.records]).value_counts()
    assert per_model.to_dict() == {"GLM": 20, "LASSO": 20}
    t5 = report.log_rmse_table()
    assert list(zip(t5.model, t5.year)) == [(m, y) for m in ("GLM", "LASSO") for y in years]
    assert (t5.n_fits == 10).all()
    freq = report.selection_table()
    assert freq.frequency.between(0, 1).all()
    glm = report.selection_frequency("GLM")
    assert (glm.frequency == 1.0).all() and len(glm) == report.n_groups

    out_a, out_b = tmp_path / "a", tmp_path / "b"
    report.write(out_a)
    run_experiment(small_rows, plan, 1.5, config).write(out_b)
    for name in ("table5_logrmse.csv", "table6_nvars.csv", "selection_frequency.csv",
                 "fit_records.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_parallel_cells_match_serial(small_rows):
    years = sorted(set(small_rows.year))[-1:]
    plan = make_split_plan(small_rows, years, seed=2, resamples=3)
    config = ModelConfig(models=("LASSO",))
    serial = run_experiment(small_rows, plan, 1.5, config)
    parallel = run_experiment(small_rows, plan, 1.5, config, jobs=2)
    assert [(r.rmse, r.selected) for r in serial.records] == \
        [(r.rmse, r.selected) for r in parallel.records]


def test_failed_fits_are_recorded_not_fatal(small_rows, monkeypatch):
    def broken(*args, **kwargs):
        raise SingularDesignError("collinear", ["x"])

    monkeypatch.setattr(ev, "fit_glm", broken)
    years = sorted(set(small_rows.year))[-1:]
    plan = make_split_plan(small_rows, years, seed=1, resamples=2)
    with pytest.warns(UserWarning, match="GLM fit failed"):
        report = run_experiment(small_rows, plan, 1.5, ModelConfig(models=("GLM", "LASSO")))
    assert len(report.failures) == 2
    assert all("SingularDesignError" in r.error for r in report.failures)
    table = report.log_rmse_table().set_index("model")
    assert table.loc["GLM", "n_fits"] == 0 and np.isnan(table.loc["GLM", "mean_log_rmse"])
    assert table.loc["LASSO", "n_fits"] == 2


def test_no_leakage_guard(small_rows):
    years = sorted(set(small_rows.year))
    task = (small_rows, years[-2], 0, np.flatnonzero(small_rows.year == years[-1]),
            np.flatnonzero(small_rows.year == years[-2]), 1.5, ModelConfig(models=("GLM",)), 0)
    with pytest.raises(AssertionError, match="leak"):
        ev._run_cell(task)
