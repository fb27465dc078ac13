"""End-to-end run: panel -> indemnities -> features -> power -> models -> reports."""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
import warnings
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .data import (
    FeatureSet,
    GeneratorConfig,
    Panel,
    PriceIndex,
    Schema,
    build_features,
    deflate,
    generate_synthetic_panel,
    load_panel,
    standardize,
    write_panel,
)
from .econ import PERCENTILES, build_premiums, economic_report
from .errors import ConfigError, IstrateError
from .evaluate import (
    TRAIN_WINDOWS,
    ModelConfig,
    cell_seed,
    fit_model,
    make_split_plan,
    run_experiment,
    vif,
)
from .glm import fit_glm, remove_outliers
from .ist import IstParams, indemnity_summary, simulate_panel, write_table
from .tweedie import POWER_GRID, estimate_power_index

log = logging.getLogger(__name__)

STAGES = ("synth", "simulate", "features", "power", "fit", "evaluate", "economics",
          "plots")
_TOP_KEYS = {"seed", "generator", "inputs", "ist", "models", "evaluation", "power",
             "economics", "output"}


@dataclass(frozen=True)
class EvaluationSettings:
    resamples: int = 10
    train_window: str = "prior_year"
    test_years: tuple | None = None

    def __post_init__(self):
        if self.train_window not in TRAIN_WINDOWS:
            raise ConfigError(f"train_window must be one of {TRAIN_WINDOWS}")
        if self.resamples < 1:
            raise ConfigError("resamples must be positive")


@dataclass(frozen=True)
class EconomicSettings:
    percentiles: tuple = PERCENTILES
    delta: float = 0.0
    fairness_percentile: float = 50
    fairness_scope: str = "participants"
    per_farm: bool = False

    def __post_init__(self):
        if self.fairness_scope not in ("participants", "all"):
            raise ConfigError("fairness_scope must be 'participants' or 'all'")
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative")


@dataclass(frozen=True)
class RunConfig:
    """Exactly one of ``generator`` (synthetic panel) or ``inputs`` (files)."""

    seed: int = 0
    generator: GeneratorConfig | None = None
    inputs: dict | None = None
    ist: IstParams = IstParams()
    models: ModelConfig = ModelConfig()
    evaluation: EvaluationSettings = EvaluationSettings()
    power: float | None = None
    economics: EconomicSettings = EconomicSettings()
    output: str = "out"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if (self.generator is None) == (self.inputs is None):
            raise ConfigError("give exactly one of a generator block or input paths")
        if self.inputs is not None:
            if "panel" not in self.inputs or "schema" not in self.inputs:
                raise ConfigError("inputs need at least 'panel' and 'schema' paths")
        if self.power is not None and not 1 < self.power < 2:
            raise ConfigError("fixed power must lie in (1, 2)")

    @classmethod
    def from_dict(cls, raw: dict, base: Path | None = None) -> "RunConfig":
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            generator = GeneratorConfig.from_dict(raw["generator"]) \
                if raw.get("generator") is not None else None
            inputs = None
            if raw.get("inputs") is not None:
                inputs = {k: str((base or Path(".")) / v) for k, v in raw["inputs"].items()}
            ev = dict(raw.get("evaluation", {}))
            if ev.get("test_years") is not None:
                ev["test_years"] = tuple(int(y) for y in ev["test_years"])
            econ = dict(raw.get("economics", {}))
            if "percentiles" in econ:
                econ["percentiles"] = tuple(econ["percentiles"])
            power = raw.get("power", {}) or {}
            return cls(
                seed=int(raw.get("seed", 0)), generator=generator, inputs=inputs,
                ist=IstParams(**raw.get("ist", {})),
                models=ModelConfig.from_dict(raw.get("models", {})),
                evaluation=EvaluationSettings(**ev),
                power=power.get("fixed"),
                economics=EconomicSettings(**econ),
                output=str(raw.get("output", "out")), raw=raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, path.parent)

    @classmethod
    def demo(cls) -> "RunConfig":
        text = resources.files("istrate").joinpath("configs/demo.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def with_overrides(self, seed=None, output=None) -> "RunConfig":
        kwargs = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if seed is not None:
            kwargs["seed"] = int(seed)
        if output is not None:
            kwargs["output"] = str(output)
        return RunConfig(**kwargs)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "generator": asdict(self.generator) if self.generator else None,
            "inputs": self.inputs,
            "ist": asdict(self.ist),
            "models": self.models.to_dict(),
            "evaluation": {**asdict(self.evaluation),
                           "test_years": list(self.evaluation.test_years)
                           if self.evaluation.test_years else None},
            "power": {"fixed": self.power},
            "economics": {**asdict(self.economics),
                          "percentiles": list(self.economics.percentiles)},
        }

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()


class StageError(IstrateError):
    """Wraps the error that stopped a stage; keeps its exit code."""

    def __init__(self, stage: str, error: Exception):
        self.stage = stage
        self.error = error
        self.exit_code = getattr(error, "exit_code", 5 if isinstance(error, OSError) else 1)
        super().__init__(f"stage '{stage}' failed: {type(error).__name__}: {error}")


_CSV = dict(index=False, float_format="%.10g", lineterminator="\n")


class Pipeline:
    """Runs stages lazily; each result is computed once and cached."""

    def __init__(self, config: RunConfig, jobs: int = 1):
        self.config = config
        self.jobs = jobs
        self.out = Path(config.output)
        self.timings = {}
        self.written = []
        self._cache = {}

    # -- helpers ---------------------------------------------------------
    def _stage(self, name, fn):
        if name in self._cache:
            return self._cache[name]
        start = time.perf_counter()
        try:
            result = fn()
        except StageError:
            raise
        except (IstrateError, OSError, ValueError) as exc:
            raise StageError(name, exc) from exc
        self.timings[name] = round(time.perf_counter() - start, 3)
        self._cache[name] = result
        return result

    def _write_csv(self, frame: pd.DataFrame, name: str) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        frame.to_csv(self.out / name, **_CSV)
        self.written.append(name)

    # -- stages ----------------------------------------------------------
    def panel(self):
        def run():
            cfg = self.config
            if cfg.generator is not None:
                synthetic = generate_synthetic_panel(cfg.generator, cfg.seed)
                self._cache["drivers"] = synthetic.driver_columns
                return synthetic.panel
            schema = Schema.load(cfg.inputs["schema"])
            panel = load_panel(cfg.inputs["panel"], schema)
            if cfg.inputs.get("price_index"):
                panel = deflate(panel, PriceIndex.load(cfg.inputs["price_index"]))
            return panel
        return self._stage("synth", run)

    def write_synthetic(self) -> None:
        panel = self.panel()
        self.out.mkdir(parents=True, exist_ok=True)
        write_panel(panel, self.out / "panel.csv")
        with open(self.out / "schema.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(panel.schema.to_dict(), fh, indent=2)
            fh.write("\n")
        self.written += ["panel.csv", "schema.json"]
        if "drivers" in self._cache:
            with open(self.out / "drivers.json", "w", encoding="utf-8", newline="\n") as fh:
                json.dump(list(self._cache["drivers"]), fh)
                fh.write("\n")
            self.written.append("drivers.json")

    def indemnities(self) -> pd.DataFrame:
        def run():
            table = simulate_panel(self.panel(), self.config.ist)
            self.out.mkdir(parents=True, exist_ok=True)
            write_table(table, self.out / "indemnities.csv")
            indemnity_summary(table).to_csv(self.out / "indemnity_summary.csv")
            self.written += ["indemnities.csv", "indemnity_summary.csv"]
            return table
        return self._stage("simulate", run)

    def features(self) -> FeatureSet:
        return self._stage("features",
                           lambda: build_features(self.panel(), self.indemnities()))

    def full_design(self):
        rows = self.features()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return standardize(rows, np.arange(len(rows)))

    def power(self) -> float:
        def run():
            if self.config.power is not None:
                return float(self.config.power)
            design = self.full_design()
            # influential rows are dropped before profiling the power
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit = fit_glm(design, 1.5, strict=False)
                kept, report = remove_outliers(design, fit)
                profile = estimate_power_index(kept.y, kept, POWER_GRID)
            profile.to_csv(self.out / "power_profile.csv")
            self.written.append("power_profile.csv")
            self._cache["outliers"] = report
            return profile.params.p
        return self._stage("power", run)

    def test_years(self) -> tuple:
        years = self.config.evaluation.test_years
        if years:
            return tuple(years)
        target = sorted(set(int(y) for y in self.features().year))
        return tuple(target[1:])

    def evaluation(self):
        def run():
            rows, p = self.features(), self.power()
            ev = self.config.evaluation
            plan = make_split_plan(rows, self.test_years(), self.config.seed,
                                   ev.resamples, train_window=ev.train_window)
            report = run_experiment(rows, plan, p, self.config.models, self.jobs,
                                    vif_design=self.full_design())
            for path in report.write(self.out):
                self.written.append(Path(path).name)
            return report
        return self._stage("evaluate", run)

    def fitted_models(self):
        """Every model fitted on all rows (exports coefficients and trees)."""
        def run():
            design, p = self.full_design(), self.power()
            seed = cell_seed(self.config.seed, 0, 0)
            fitted = {}
            for name in self.config.models.models:
                model = fit_model(name, design, p, self.config.models, seed)
                fitted[name] = model
                if name == "GLM":
                    model.model.to_csv(self.out / "glm_coefficients.csv")
                    self.written.append("glm_coefficients.csv")
                elif name == "Boosting":
                    (self.out / "boost_model.json").write_text(model.model.to_json() + "\n")
                    self.written.append("boost_model.json")
                else:
                    key = name.lower()
                    model.model.to_csv(self.out / f"{key}_cv.csv")
                    model.model.path.to_csv(self.out / f"{key}_path.csv")
                    self.written += [f"{key}_cv.csv", f"{key}_path.csv"]
            return fitted
        return self._stage("fit", run)

    def premium_tables(self) -> dict:
        """Premiums for each test year from models fitted on the full prior pool."""
        rows, p = self.features(), self.power()
        window = self.config.evaluation.train_window
        preds = {name: [] for name in self.config.models.models}
        failures = []
        for year in self.test_years():
            pool = rows.year == year - 1 if window == "prior_year" else rows.year < year
            train_ids = np.flatnonzero(pool)
            test_ids = np.flatnonzero(rows.year == year)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                full = standardize(rows, train_ids)
            train, test = full.take(train_ids), full.take(test_ids)
            seed = cell_seed(self.config.seed, year, 10_000)
            for name in self.config.models.models:
                try:
                    mu = fit_model(name, train, p, self.config.models, seed).predict(test)
                except IstrateError as exc:
                    failures.append(f"{name} {year}: {exc}")
                    continue
                preds[name].append(pd.DataFrame({
                    "farm_id": rows.farm_id[test_ids], "year": year, "mu": mu}))
        for msg in failures:
            warnings.warn(f"premium fit failed: {msg}", stacklevel=2)
        tables = {}
        for name, parts in preds.items():
            if parts:
                tables[name] = build_premiums(pd.concat(parts, ignore_index=True),
                                              self.indemnities(), self.panel(),
                                              self.config.economics.delta)
        return tables

    def economics(self):
        def run():
            tables = self.premium_tables()
            econ = self.config.economics
            report = economic_report(
                tables, econ.percentiles, econ.fairness_percentile,
                econ.fairness_scope == "participants", econ.per_farm)
            for path in report.write(self.out):
                self.written.append(Path(path).name)
            premiums = pd.concat([t.frame.assign(model=m) for m, t in tables.items()],
                                 ignore_index=True)
            self._write_csv(premiums, "premiums.csv")
            return report
        return self._stage("economics", run)

    def plots(self):
        from .plots import emit_plots

        def run():
            files = emit_plots(self.out)
            self.written += [Path(f).name for f in files]
            return files
        return self._stage("plots", run)

    # -- manifest --------------------------------------------------------
    def manifest(self, status: str = "complete", error: StageError | None = None) -> dict:
        import matplotlib
        import numba
        import scipy

        payload = {
            "status": status,
            "config": self.config.to_dict(),
            "config_sha256": self.config.digest(),
            "seed": self.config.seed,
            "versions": {"istrate": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__,
                         "pandas": pd.__version__, "numba": numba.__version__,
                         "matplotlib": matplotlib.__version__},
            "timings_seconds": self.timings,
            "outputs": sorted(set(self.written)),
        }
        if "power" in self._cache:
            payload["power_index"] = self._cache["power"]
        if "drivers" in self._cache:
            payload["true_drivers"] = list(self._cache["drivers"])
        if "evaluate" in self._cache:
            failures = self._cache["evaluate"].failures
            payload["failed_fits"] = [f"{r.model} {r.year}/{r.resample}: {r.error}"
                                      for r in failures]
        if error is not None:
            payload["failed_stage"] = error.stage
            payload["error"] = str(error)
        return payload

    def write_manifest(self, status="complete", error=None) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.manifest(status, error), fh, indent=2, sort_keys=True,
                      default=str)
            fh.write("\n")


def run_pipeline(config: RunConfig, stages=("run",), jobs: int = 1) -> Pipeline:
    """Run the requested stages; the manifest records success or the failing stage."""
    pipe = Pipeline(config, jobs)
    wanted = set(stages)
    everything = "run" in wanted
    try:
        if "synth" in wanted:
            pipe.write_synthetic()
        if everything or "simulate" in wanted:
            pipe.indemnities()
        if everything or "fit" in wanted:
            pipe.fitted_models()
        if everything or "evaluate" in wanted:
            pipe.evaluation()
        if everything or "economics" in wanted:
            pipe.economics()
        if everything or "plots" in wanted:
            pipe.plots()
    except StageError as exc:
        pipe.write_manifest("incomplete", exc)
        raise
    pipe.write_manifest()
    return pipe
