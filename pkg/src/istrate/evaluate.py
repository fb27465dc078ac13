"""Year-to-year out-of-sample experiment and econometric diagnostics.

For every test year the models are fitted on ten seeded 75% subsamples of
the earlier rows and scored on the whole test-year cohort.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import linalg

from .boost import BoostConfig, boost_selected_variables, fit_boost, predict_boost
from .data import FeatureMatrix, FeatureSet, standardize
from .errors import DomainError, IstrateError, PlanError
from .glm import fit_glm, predict_glm, remove_outliers
from .penalized import EN_ALPHAS, cross_validate

MODELS = ("GLM", "LASSO", "EN", "Boosting")
RESAMPLES = 10
TRAIN_SHARE = 0.75
TRAIN_WINDOWS = ("prior_year", "all_prior")


def cell_seed(seed: int, year: int, resample: int) -> int:
    """Seed for one (year, resample) cell, independent of execution order."""
    return int(np.random.SeedSequence([seed, year, resample]).generate_state(1)[0])


@dataclass(frozen=True)
class SplitPlan:
    """Row positions (into the FeatureSet) per test year and resample."""

    years: tuple
    train: dict
    test: dict
    seed: int
    train_window: str = "prior_year"

    def cells(self):
        for year in self.years:
            for r, train in enumerate(self.train[year]):
                yield year, r, train, self.test[year]


def make_split_plan(rows: FeatureSet, years, seed: int, resamples: int = RESAMPLES,
                    share: float = TRAIN_SHARE,
                    train_window: str = "prior_year") -> SplitPlan:
    if train_window not in TRAIN_WINDOWS:
        raise PlanError(f"train_window must be one of {TRAIN_WINDOWS}")
    target = np.asarray(rows.year)
    train, test = {}, {}
    for year in years:
        year = int(year)
        cohort = np.flatnonzero(target == year)
        if cohort.size == 0:
            raise PlanError(f"test year {year} has no rows")
        pool = target == year - 1 if train_window == "prior_year" else target < year
        pool = np.flatnonzero(pool)
        size = int(np.floor(share * pool.size))
        if size == 0:
            raise PlanError(f"test year {year} has no training rows before it")
        draws = []
        for r in range(resamples):
            rng = np.random.default_rng(cell_seed(seed, year, r))
            draws.append(np.sort(rng.choice(pool, size, replace=False)))
        train[year], test[year] = draws, cohort
    return SplitPlan(tuple(int(y) for y in years), train, test, seed, train_window)


def rmse(predictions, actuals) -> float:
    pred = np.asarray(predictions, float)
    act = np.asarray(actuals, float)
    if pred.shape != act.shape or pred.size == 0:
        raise DomainError("predictions and actuals must have the same nonzero length")
    return float(np.sqrt(np.mean((pred - act) ** 2)))


def log_rmse(predictions, actuals) -> float:
    """Natural log of the euro RMSE."""
    with np.errstate(divide="ignore"):
        return float(np.log(rmse(predictions, actuals)))


@dataclass(frozen=True)
class ModelConfig:
    models: tuple = MODELS
    folds: int = 5
    en_alphas: tuple = EN_ALPHAS
    boost: BoostConfig = BoostConfig()
    boost_threshold: float = 0.01
    remove_outliers: bool = True

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        raw = dict(raw)
        boost = BoostConfig(**raw.pop("boost", {}))
        for key in ("models", "en_alphas"):
            if key in raw:
                raw[key] = tuple(raw[key])
        unknown = set(raw) - {"models", "folds", "en_alphas", "boost_threshold",
                              "remove_outliers"}
        if unknown:
            raise DomainError(f"unknown model settings: {sorted(unknown)}")
        bad = set(raw.get("models", ())) - set(MODELS)
        if bad:
            raise DomainError(f"unknown models: {sorted(bad)}")
        return cls(boost=boost, **raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["models"] = list(self.models)
        out["en_alphas"] = list(self.en_alphas)
        return out


@dataclass(frozen=True)
class FitRecord:
    model: str
    year: int
    resample: int
    rmse: float | None
    log_rmse: float | None
    selected: tuple
    seconds: float
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class FittedModel:
    """Any of the four models behind one predict/selected interface."""

    name: str
    model: object
    groups: tuple

    def predict(self, rows: FeatureMatrix) -> np.ndarray:
        if self.name == "GLM":
            return predict_glm(self.model, rows)
        if self.name == "Boosting":
            return predict_boost(self.model, rows)
        return self.model.predict(rows)


def fit_model(name: str, train: FeatureMatrix, p: float, config: ModelConfig,
              seed: int) -> FittedModel:
    """Fit one model; ``groups`` is the selected set at group level."""
    if name == "GLM":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_glm(train, p, strict=False)
            if config.remove_outliers:
                kept, _ = remove_outliers(train, fit)
                fit = fit_glm(kept, p, strict=False)
        # the unpenalized model keeps every regressor
        groups = tuple(train.group_names)
        return FittedModel(name, fit, groups)
    if name in ("LASSO", "EN"):
        alphas = (1.0,) if name == "LASSO" else config.en_alphas
        choice = cross_validate(train, p, alphas, config.folds, seed)
        return FittedModel(name, choice, tuple(choice.selected_groups()))
    if name == "Boosting":
        boost = BoostConfig(**{**asdict(config.boost), "seed": seed})
        model = fit_boost(train, p, boost)
        return FittedModel(name, model, tuple(sorted(
            boost_selected_variables(model, config.boost_threshold))))
    raise DomainError(f"unknown model {name!r}")


def _run_cell(args):
    rows, year, resample, train_ids, test_ids, p, config, seed = args
    if rows.year[train_ids].max() >= year:
        raise AssertionError(f"training rows leak into test year {year}")
    seed = cell_seed(seed, year, resample)
    out = []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            full = standardize(rows, train_ids)
        train = full.take(train_ids)
        test = full.take(test_ids)
    except IstrateError as exc:
        return [FitRecord(m, year, resample, None, None, (), 0.0, f"{type(exc).__name__}: {exc}")
                for m in config.models]
    for name in config.models:
        start = time.perf_counter()
        try:
            fitted = fit_model(name, train, p, config, seed)
            mu = fitted.predict(test)
            err = rmse(mu, test.y)
            record = FitRecord(name, year, resample, err, log_rmse(mu, test.y),
                               tuple(sorted(fitted.groups)), time.perf_counter() - start)
        except (IstrateError, np.linalg.LinAlgError, linalg.LinAlgError) as exc:
            record = FitRecord(name, year, resample, None, None, (),
                               time.perf_counter() - start,
                               f"{type(exc).__name__}: {exc}")
        out.append(record)
    return out


@dataclass(frozen=True)
class EvaluationReport:
    records: tuple
    years: tuple
    models: tuple
    n_groups: int
    vif: pd.DataFrame | None = field(default=None, compare=False)

    def _ok(self):
        return [r for r in self.records if r.ok]

    @property
    def failures(self) -> list:
        return [r for r in self.records if not r.ok]

    def log_rmse_table(self) -> pd.DataFrame:
        """Mean and sd of log-RMSE per model and test year (sd over resamples)."""
        rows = []
        for model in self.models:
            for year in self.years:
                cell = [r for r in self._ok() if r.model == model and r.year == year]
                lr = np.array([r.log_rmse for r in cell])
                raw = np.array([r.rmse for r in cell])
                rows.append({
                    "model": model, "year": year, "n_fits": len(cell),
                    "mean_log_rmse": lr.mean() if cell else np.nan,
                    "sd_log_rmse": lr.std(ddof=1) if len(cell) > 1 else np.nan,
                    "mean_rmse": raw.mean() if cell else np.nan,
                })
        return pd.DataFrame(rows)

    def nvars_table(self) -> pd.DataFrame:
        rows = []
        for model in self.models:
            for year in self.years:
                cell = [len(r.selected) for r in self._ok()
                        if r.model == model and r.year == year]
                rows.append({"model": model, "year": year, "n_fits": len(cell),
                             "mean_nvars": np.mean(cell) if cell else np.nan,
                             "sd_nvars": np.std(cell, ddof=1) if len(cell) > 1 else np.nan})
        return pd.DataFrame(rows)

    def selection_frequency(self, model: str) -> pd.DataFrame:
        return selection_frequency([r for r in self._ok() if r.model == model])

    def selection_table(self) -> pd.DataFrame:
        parts = []
        for model in self.models:
            freq = self.selection_frequency(model)
            freq.insert(0, "model", model)
            parts.append(freq)
        return pd.concat(parts, ignore_index=True)

    def write(self, out_dir) -> list:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fmt = dict(index=False, float_format="%.10g", lineterminator="\n")
        written = []
        for name, table in (("table5_logrmse.csv", self.log_rmse_table()),
                            ("table6_nvars.csv", self.nvars_table()),
                            ("selection_frequency.csv", self.selection_table())):
            table.to_csv(out / name, **fmt)
            written.append(out / name)
        if self.vif is not None:
            self.vif.to_csv(out / "vif.csv", **fmt)
            written.append(out / "vif.csv")
        records = pd.DataFrame([{
            "model": r.model, "year": r.year, "resample": r.resample,
            "rmse": r.rmse, "log_rmse": r.log_rmse, "n_selected": len(r.selected),
            "selected": ";".join(r.selected), "error": r.error or ""} for r in self.records])
        records.to_csv(out / "fit_records.csv", **fmt)
        written.append(out / "fit_records.csv")
        return written


def selection_frequency(records) -> pd.DataFrame:
    """Share of fits selecting each variable, sorted by descending frequency."""
    records = list(records)
    if not records:
        return pd.DataFrame({"variable": [], "frequency": []})
    counts = {}
    for r in records:
        for v in r.selected:
            counts[v] = counts.get(v, 0) + 1
    table = pd.DataFrame({"variable": list(counts),
                          "frequency": [c / len(records) for c in counts.values()]})
    return table.sort_values(["frequency", "variable"], ascending=[False, True],
                             kind="mergesort").reset_index(drop=True)


def vif(design: FeatureMatrix) -> pd.DataFrame:
    """Variance inflation per group; multi-column groups get the generalized VIF.

    GVIF_g = det(R_gg) / det(S_g), with R the column correlation matrix and
    S_g the correlation-scale covariance of the group's columns after
    projecting out all other columns. For single columns this is
    1 / (1 - R^2). Exact collinearity is reported as ``inf``.
    """
    X = np.asarray(design.X, float)
    n, k = X.shape
    if k < 2 or n <= k:
        raise DomainError("VIF needs at least two columns and more rows than columns")
    Z = X - X.mean(axis=0)
    norms = np.sqrt((Z ** 2).sum(axis=0))
    if np.any(norms == 0):
        raise DomainError("VIF is undefined for a constant column")
    Z = Z / norms
    rows = []
    for g, name in enumerate(design.group_names):
        cols = np.flatnonzero(design.groups == g)
        others = np.flatnonzero(design.groups != g)
        Zg, Zo = Z[:, cols], Z[:, others]
        coef, *_ = linalg.lstsq(Zo, Zg, cond=1e-12)
        resid = Zg - Zo @ coef
        S = resid.T @ resid
        R = Zg.T @ Zg
        sign_s, logdet_s = np.linalg.slogdet(S)
        _, logdet_r = np.linalg.slogdet(R)
        smallest = np.linalg.eigvalsh(S).min() if S.size else 0.0
        if sign_s <= 0 or smallest <= 1e-10:
            value = np.inf
        else:
            value = float(np.exp(logdet_r - logdet_s))
        df = len(cols)
        rows.append({"group": name, "n_columns": df, "vif": value,
                     "vif_adjusted": value ** (1 / (2 * df))})
    return pd.DataFrame(rows)


def run_experiment(rows: FeatureSet, plan: SplitPlan, p: float,
                   config: ModelConfig = ModelConfig(), jobs: int = 1,
                   vif_design: FeatureMatrix | None = None) -> EvaluationReport:
    """Fit every model in every (year, resample) cell and aggregate.

    Fit errors are recorded per cell and excluded from the tables with a
    warning; the run itself never aborts on one failed cell.
    """
    tasks = [(rows, year, r, train, test, p, config, plan.seed)
             for year, r, train, test in plan.cells()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    records = tuple(r for cell in results for r in cell)
    for r in records:
        if not r.ok:
            warnings.warn(f"{r.model} fit failed for {r.year}/{r.resample}: {r.error}",
                          stacklevel=2)
    table = vif(vif_design) if vif_design is not None else None
    return EvaluationReport(records, plan.years, tuple(config.models),
                            len(rows.group_names), table)


def write_manifest(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
