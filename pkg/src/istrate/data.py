"""Farm panel schema, ingestion, deflation, lagged features and synthetic panels.

A panel is a long table of farm-year observations: one row per
``(farm_id, year)`` with the farm's value added (income) and a set of
covariates declared in a JSON schema. Features for target year ``t`` only
ever look at years ``t-3 .. t-1``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    ConfigError,
    CoverageError,
    EmptyResultError,
    IntegrityError,
    ParseError,
    SchemaError,
)

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("farm_id", "year", "value_added")
KINDS = ("numeric", "categorical", "currency")
TRANSFORMS = ("L1", "AVG", "sd")
WINDOW = 3


@dataclass(frozen=True)
class ColumnSpec:
    kind: str
    transforms: tuple = ("L1",)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown column kind {self.kind!r}")
        bad = set(self.transforms) - set(TRANSFORMS)
        if bad:
            raise SchemaError(f"unknown transforms {sorted(bad)}")


@dataclass(frozen=True)
class Schema:
    """Declared covariates, in column order.

    ``value_added`` is always treated as currency. It only becomes a
    feature source when the schema lists it explicitly.
    """

    columns: Mapping[str, ColumnSpec]

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Schema":
        raw = raw.get("columns", raw)
        cols = {}
        for name, spec in raw.items():
            if isinstance(spec, str):
                spec = {"kind": spec}
            kind = spec.get("kind")
            default = () if kind == "categorical" else ("L1",)
            cols[name] = ColumnSpec(kind, tuple(spec.get("transforms", default)))
        if "value_added" in cols and cols["value_added"].kind != "currency":
            raise SchemaError("value_added must be declared as currency")
        for name in ("farm_id", "year"):
            if name in cols:
                raise SchemaError(f"{name} is a key column, not a covariate")
        return cls(cols)

    @classmethod
    def load(cls, path) -> "Schema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {}
        for name, spec in self.columns.items():
            entry = {"kind": spec.kind}
            if spec.kind != "categorical":
                entry["transforms"] = list(spec.transforms)
            out[name] = entry
        return out

    @property
    def covariates(self) -> list[str]:
        return [c for c in self.columns if c != "value_added"]

    def names(self, *kinds) -> list[str]:
        return [c for c in self.covariates if self.columns[c].kind in kinds]

    @property
    def currency(self) -> list[str]:
        return ["value_added"] + self.names("currency")


@dataclass(frozen=True)
class FarmYearRecord:
    farm_id: str
    year: int
    value_added: float
    numeric_covariates: Mapping[str, float] = field(default_factory=dict)
    categorical_covariates: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Panel:
    """Immutable farm-year panel backed by a DataFrame sorted by (farm_id, year)."""

    frame: pd.DataFrame
    schema: Schema

    def __post_init__(self):
        missing = [c for c in REQUIRED_COLUMNS + tuple(self.schema.covariates)
                   if c not in self.frame.columns]
        if missing:
            raise SchemaError(f"panel lacks columns {missing}")
        frame = self.frame[list(REQUIRED_COLUMNS) + self.schema.covariates]
        frame = frame.sort_values(["farm_id", "year"], kind="mergesort")
        frame = frame.reset_index(drop=True)
        dup = frame.duplicated(["farm_id", "year"])
        if dup.any():
            row = frame.loc[dup.idxmax()]
            raise IntegrityError(
                f"duplicate record farm_id={row.farm_id}, year={row.year}")
        if not np.isfinite(frame["value_added"].to_numpy(float)).all():
            raise IntegrityError("value_added must be finite")
        object.__setattr__(self, "frame", frame)

    def __len__(self):
        return len(self.frame)

    @property
    def years(self) -> list[int]:
        return sorted(int(y) for y in self.frame["year"].unique())

    def records(self) -> Iterator[FarmYearRecord]:
        num = self.schema.names("numeric", "currency")
        cat = self.schema.names("categorical")
        for row in self.frame.itertuples(index=False):
            d = row._asdict()
            yield FarmYearRecord(
                farm_id=d["farm_id"], year=int(d["year"]),
                value_added=float(d["value_added"]),
                numeric_covariates={c: float(d[c]) for c in num},
                categorical_covariates={c: str(d[c]) for c in cat},
            )

    def record(self, farm_id, year) -> FarmYearRecord:
        for rec in self.records():
            if rec.farm_id == farm_id and rec.year == year:
                return rec
        raise KeyError((farm_id, year))

    def replace(self, frame: pd.DataFrame) -> "Panel":
        return Panel(frame, self.schema)


def _parse_float(text, what, line):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"{what}={text!r} is not a number", line) from None
    if not math.isfinite(value):
        raise ParseError(f"{what}={text!r} is not finite", line)
    return value


def load_panel(path, schema: Schema) -> Panel:
    """Read a panel CSV. Errors carry the 1-based line number of the offending row."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"missing required columns {missing}")
        expected = set(REQUIRED_COLUMNS) | set(schema.covariates)
        unknown = [c for c in header if c not in expected]
        absent = [c for c in schema.covariates if c not in header]
        if unknown or absent:
            raise SchemaError(
                f"header does not match schema (undeclared {unknown}, absent {absent})")
        pos = {c: header.index(c) for c in expected}
        numeric = set(schema.names("numeric", "currency"))
        rows = []
        seen = {}
        for line, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(fields)}", line)
            row = {"farm_id": fields[pos["farm_id"]]}
            year = fields[pos["year"]]
            try:
                row["year"] = int(year)
            except ValueError:
                raise ParseError(f"year={year!r} is not an integer", line) from None
            row["value_added"] = _parse_float(
                fields[pos["value_added"]], "value_added", line)
            for c in schema.covariates:
                text = fields[pos[c]]
                row[c] = _parse_float(text, c, line) if c in numeric else text
            key = (row["farm_id"], row["year"])
            if key in seen:
                raise IntegrityError(
                    f"line {line}: duplicate record farm_id={key[0]}, year={key[1]}"
                    f" (first seen on line {seen[key]})")
            seen[key] = line
            rows.append(row)
    frame = pd.DataFrame(rows, columns=list(REQUIRED_COLUMNS) + schema.covariates)
    frame["year"] = frame["year"].astype(int)
    return Panel(frame, schema)


def write_panel(panel: Panel, path) -> None:
    panel.frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


@dataclass(frozen=True)
class PriceIndex:
    deflators: Mapping[int, float]

    def __post_init__(self):
        for year, value in self.deflators.items():
            if not (value > 0 and math.isfinite(value)):
                raise SchemaError(
                    f"deflator for {year} must be positive and finite, got {value}")

    @classmethod
    def load(cls, path) -> "PriceIndex":
        frame = pd.read_csv(path)
        if list(frame.columns) != ["year", "deflator"]:
            raise SchemaError("price index must have header year,deflator")
        return cls({int(y): float(d) for y, d in zip(frame.year, frame.deflator)})

    def __getitem__(self, year):
        return self.deflators[year]


def deflate(panel: Panel, index: PriceIndex, inverse: bool = False) -> Panel:
    """Divide every currency column by its year's deflator (multiply if ``inverse``)."""
    years = panel.years
    missing = [y for y in years if y not in index.deflators]
    if missing:
        raise CoverageError(f"price index does not cover years {missing}")
    factor = panel.frame["year"].map(index.deflators).to_numpy(float)
    frame = panel.frame.copy()
    for col in panel.schema.currency:
        values = frame[col].to_numpy(float)
        frame[col] = values * factor if inverse else values / factor
    return panel.replace(frame)


@dataclass(frozen=True)
class FeatureRow:
    farm_id: str
    target_year: int
    response: float
    features: np.ndarray
    group_map: Sequence[int]


@dataclass(frozen=True)
class FeatureSet:
    """Lagged regressors for every eligible (farm, target year), unstandardized.

    ``groups[j]`` is the group id of column ``j``; all dummy columns of one
    categorical share a group, every other column is its own group.
    """

    farm_id: np.ndarray
    year: np.ndarray
    response: np.ndarray
    X: np.ndarray
    columns: list
    groups: np.ndarray
    group_names: list
    is_dummy: np.ndarray
    source_year: np.ndarray
    reference_levels: Mapping[str, str]
    lagged_value_added: np.ndarray

    def __len__(self):
        return len(self.response)

    def rows(self) -> Iterator[FeatureRow]:
        for i in range(len(self)):
            yield FeatureRow(self.farm_id[i], int(self.year[i]),
                             float(self.response[i]), self.X[i], self.groups)

    def column_group(self, column) -> str:
        return self.group_names[self.groups[self.columns.index(column)]]


def build_features(panel: Panel, indemnities: pd.DataFrame) -> FeatureSet:
    """Lagged features ``X_{i,t-1}`` paired with indemnity ``Ind_{i,t}``.

    A row exists iff the indemnity is defined and years ``t-3, t-2, t-1``
    are all present for the farm. Numeric columns yield ``<name>_L1``,
    ``<name>_AVG`` and ``<name>_sd`` per their declared transforms;
    categoricals yield one dummy per non-reference level, taken at ``t-1``.
    """
    schema = panel.schema
    frame = panel.frame
    by_farm = frame.groupby("farm_id", sort=False)
    year = frame["year"].to_numpy()
    lags = {k: by_farm["year"].shift(k).to_numpy(float) for k in range(1, WINDOW + 1)}
    contiguous = np.ones(len(frame), bool)
    for k, lagged in lags.items():
        contiguous &= lagged == year - k

    columns, blocks, groups, group_names, is_dummy = [], [], [], [], []
    sources = (["value_added"] if "value_added" in schema.columns else []) \
        + schema.names("numeric", "currency")
    for name in sources:
        shifted = np.column_stack(
            [by_farm[name].shift(k).to_numpy(float) for k in range(1, WINDOW + 1)])
        label = "VA" if name == "value_added" else name
        for tr in schema.columns[name].transforms:
            if tr == "L1":
                col = shifted[:, 0]
            elif tr == "AVG":
                col = shifted.mean(axis=1)
            else:
                col = shifted.std(axis=1)
            columns.append(f"{label}_{tr}")
            blocks.append(col)
            groups.append(len(group_names))
            group_names.append(columns[-1])
            is_dummy.append(False)

    reference = {}
    for name in schema.names("categorical"):
        levels = sorted(frame[name].astype(str).unique())
        reference[name] = levels[0]
        prev = by_farm[name].shift(1).astype(object).to_numpy()
        gid = len(group_names)
        group_names.append(name)
        for level in levels[1:]:
            columns.append(f"{name}_{level}")
            blocks.append((prev == level).astype(float))
            groups.append(gid)
            is_dummy.append(True)

    keyed = indemnities.set_index(["farm_id", "year"])["indemnity"]
    key = pd.MultiIndex.from_arrays([frame["farm_id"], frame["year"]])
    response = keyed.reindex(key).to_numpy(float)
    keep = contiguous & np.isfinite(response)
    if not keep.any():
        raise EmptyResultError(
            "no farm has an indemnity with three contiguous prior years")
    X = np.column_stack(blocks)[keep] if blocks else np.empty((keep.sum(), 0))
    return FeatureSet(
        farm_id=frame["farm_id"].to_numpy()[keep],
        year=year[keep].astype(int),
        response=response[keep],
        X=X,
        columns=columns,
        groups=np.asarray(groups, dtype=int),
        group_names=group_names,
        is_dummy=np.asarray(is_dummy, dtype=bool),
        source_year=lags[1][keep].astype(int),
        reference_levels=reference,
        lagged_value_added=by_farm["value_added"].shift(1).to_numpy(float)[keep],
    )


@dataclass(frozen=True)
class FeatureMatrix:
    """Standardized design (intercept implicit) with its response and groups.

    ``X`` excludes the intercept; :attr:`design` prepends it. Numeric
    columns are scaled with training-row mean and population sd; dummy
    columns pass through with mean 0 and scale 1.
    """

    X: np.ndarray
    y: np.ndarray
    columns: list
    groups: np.ndarray
    group_names: list
    means: np.ndarray
    scales: np.ndarray
    is_dummy: np.ndarray
    dropped: tuple = ()
    degenerate: bool = False
    row_ids: np.ndarray | None = None

    @classmethod
    def from_arrays(cls, X, y, columns=None, groups=None, group_names=None,
                    is_dummy=None) -> "FeatureMatrix":
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        k = X.shape[1]
        columns = list(columns) if columns is not None else [f"x{j}" for j in range(k)]
        if groups is None:
            groups = np.arange(k)
        groups = np.asarray(groups, dtype=int)
        if group_names is None:
            group_names = []
            for g in range(groups.max() + 1 if k else 0):
                members = [columns[j] for j in np.flatnonzero(groups == g)]
                group_names.append(members[0] if len(members) == 1 else f"g{g}")
        return cls(X=X, y=np.asarray(y, dtype=float), columns=columns, groups=groups,
                   group_names=list(group_names), means=np.zeros(k),
                   scales=np.ones(k),
                   is_dummy=np.zeros(k, bool) if is_dummy is None
                   else np.asarray(is_dummy, bool),
                   row_ids=np.arange(len(X)))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def design(self) -> np.ndarray:
        return np.column_stack([np.ones(self.n), self.X])

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    def group_members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.groups == g) for g in range(self.n_groups)]

    def take(self, index) -> "FeatureMatrix":
        index = np.asarray(index)
        return FeatureMatrix(
            X=self.X[index], y=self.y[index], columns=self.columns,
            groups=self.groups, group_names=self.group_names, means=self.means,
            scales=self.scales, is_dummy=self.is_dummy, dropped=self.dropped,
            degenerate=self.degenerate,
            row_ids=None if self.row_ids is None else self.row_ids[index])

    def with_response(self, y) -> "FeatureMatrix":
        return FeatureMatrix(
            X=self.X, y=np.asarray(y, float), columns=self.columns,
            groups=self.groups, group_names=self.group_names, means=self.means,
            scales=self.scales, is_dummy=self.is_dummy, dropped=self.dropped,
            degenerate=self.degenerate, row_ids=self.row_ids)

    def check_compatible(self, columns) -> None:
        if list(columns) != list(self.columns):
            raise SchemaError("feature columns differ from the fitted model's columns")


def standardize(features: FeatureSet, train_index) -> FeatureMatrix:
    """Scale numeric columns by training mean/sd; apply the same map to every row.

    Columns constant on the training rows are dropped (and listed in
    ``dropped``); a dummy family that loses columns keeps its group id.
    """
    train_index = np.asarray(train_index)
    if train_index.size == 0:
        raise EmptyResultError("empty training index")
    X = features.X
    train = X[train_index]
    mean = train.mean(axis=0)
    scale = train.std(axis=0)
    constant = ~(scale > 1e-12 * np.maximum(1.0, np.abs(mean)))
    dropped = tuple(c for c, bad in zip(features.columns, constant) if bad)
    if dropped:
        warnings.warn(f"dropping constant training columns {list(dropped)}",
                      stacklevel=2)
    keep = ~constant
    mean = np.where(features.is_dummy, 0.0, mean)[keep]
    scale = np.where(features.is_dummy, 1.0, scale)[keep]
    Z = (X[:, keep] - mean) / scale

    old_groups = features.groups[keep]
    used = sorted(set(old_groups.tolist()))
    remap = {g: i for i, g in enumerate(used)}
    y_train = features.response[train_index]
    degenerate = bool(np.all(y_train == y_train[0]))
    if degenerate:
        warnings.warn("training response is constant; fits are degenerate",
                      stacklevel=2)
    return FeatureMatrix(
        X=Z, y=features.response.copy(),
        columns=[c for c, k in zip(features.columns, keep) if k],
        groups=np.array([remap[g] for g in old_groups], dtype=int),
        group_names=[features.group_names[g] for g in used],
        means=mean, scales=scale, is_dummy=features.is_dummy[keep],
        dropped=dropped, degenerate=degenerate,
        row_ids=np.arange(len(features)),
    )


# ---------------------------------------------------------------------------
# synthetic panels
# ---------------------------------------------------------------------------

_CATEGORICAL_LEVELS = [
    ("REGION", ["CENTRE", "ISLANDS", "NORTHEAST", "NORTHWEST", "SOUTH"]),
    ("ZONE", ["HILL", "MOUNT", "PLAIN"]),
    ("MALE", ["0", "1"]),
    ("ORGAN", ["0", "1"]),
    ("INDIV", ["0", "1"]),
    ("YOUNG", ["0", "1"]),
]


@dataclass(frozen=True)
class GeneratorConfig:
    """Synthetic farm panel.

    Log income follows a per-farm AR(1) whose drift depends on the
    ``level`` drivers and whose volatility depends on the ``volatility``
    drivers (both read at ``t-1``). Every other covariate is noise,
    correlated with the other noise covariates through a common factor but
    independent of income.
    """

    n_farms: int = 1000
    first_year: int = 2008
    n_years: int = 11
    n_active: int = 5
    n_noise: int = 55
    n_categorical: int = 4
    n_currency: int = 4
    n_level_drivers: int = 2
    base_log_income: float = 10.5
    ar: float = 0.5
    volatility: float = 0.28
    level_effect: float = 0.5
    volatility_effect: float = 0.35
    covariate_noise: float = 0.25
    noise_correlation: float = 0.6
    negative_income_rate: float = 0.005
    insure_column: bool = True
    volatility_shape: str = "hinge"

    def __post_init__(self):
        if self.n_farms <= 0 or self.n_years <= 0:
            raise ConfigError("n_farms and n_years must be positive")
        if self.n_active < 0 or self.n_noise < 0:
            raise ConfigError("covariate counts must be nonnegative")
        if self.volatility_shape not in ("linear", "hinge"):
            raise ConfigError("volatility_shape must be 'linear' or 'hinge'")
        if self.n_level_drivers > self.n_active:
            raise ConfigError("n_level_drivers exceeds n_active")
        cat = min(self.n_categorical, len(_CATEGORICAL_LEVELS))
        if cat + self.n_currency + int(self.insure_column) > self.n_noise and self.n_noise:
            raise ConfigError("noise covariates cannot hold the requested kinds")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "GeneratorConfig":
        known = cls.__dataclass_fields__
        unknown = set(raw) - set(known)
        if unknown:
            raise ConfigError(f"unknown generator keys {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class SyntheticPanel:
    panel: Panel
    drivers: tuple
    level_drivers: tuple
    volatility_drivers: tuple

    @property
    def driver_columns(self) -> tuple:
        return tuple(f"{d}_L1" for d in self.drivers)


def generate_synthetic_panel(config: GeneratorConfig, seed: int) -> SyntheticPanel:
    """Deterministic synthetic panel; the true drivers are returned alongside."""
    rng = np.random.default_rng(seed)
    n, T = config.n_farms, config.n_years
    n_cov = config.n_active + config.n_noise

    noise_cat = [] if config.n_noise == 0 else \
        _CATEGORICAL_LEVELS[:min(config.n_categorical, len(_CATEGORICAL_LEVELS))]
    n_cat = len(noise_cat)
    n_numeric_noise = config.n_noise - n_cat
    numeric_names = [f"C{j + 1:02d}" for j in range(config.n_active + n_numeric_noise)]
    driver_pos = np.sort(rng.choice(len(numeric_names), config.n_active, replace=False))
    drivers = [numeric_names[j] for j in driver_pos]
    noise_names = [c for c in numeric_names if c not in drivers]
    level = drivers[:config.n_level_drivers]
    vol = drivers[config.n_level_drivers:]

    schema_cols = {}
    insure = None
    if config.insure_column and noise_names:
        insure = noise_names[0]
    currency = set(noise_names[1:1 + config.n_currency]) if noise_names else set()
    for c in numeric_names:
        schema_cols[c] = {"kind": "currency" if c in currency else "numeric",
                          "transforms": ["L1"]}
    for name, _ in noise_cat:
        schema_cols[name] = {"kind": "categorical"}
    if insure:
        schema_cols["INSURE"] = schema_cols.pop(insure)
        noise_names = ["INSURE" if c == insure else c for c in noise_names]
        numeric_names = ["INSURE" if c == insure else c for c in numeric_names]
    assert len(schema_cols) == n_cov
    schema = Schema.from_dict(schema_cols)

    # covariates: farm effect + persistent yearly wiggle; noise shares a factor
    years = config.first_year + np.arange(T)
    base = rng.standard_normal((n, len(numeric_names)))
    factor = rng.standard_normal((n, 1))
    is_noise = np.array([c in noise_names for c in numeric_names])
    rho = config.noise_correlation
    base[:, is_noise] = np.sqrt(rho) * factor + np.sqrt(1 - rho) * base[:, is_noise]
    wiggle = np.zeros((n, T, len(numeric_names)))
    e = rng.standard_normal((n, T, len(numeric_names))) * config.covariate_noise
    wiggle[:, 0] = e[:, 0]
    for t in range(1, T):
        wiggle[:, t] = 0.7 * wiggle[:, t - 1] + e[:, t]
    latent = base[:, None, :] + wiggle

    idx = {c: j for j, c in enumerate(numeric_names)}
    drift = config.base_log_income + config.level_effect * sum(
        latent[:, :, idx[c]] for c in level) if level else \
        np.full((n, T), config.base_log_income)
    if config.volatility_shape == "hinge":
        # risk only rises above a driver's median; centred so the mean
        # volatility stays comparable with the linear shape
        shape = lambda x: np.maximum(x, 0.0) - 0.4
    else:
        shape = lambda x: x
    logvol = np.log(config.volatility) + config.volatility_effect * sum(
        shape(latent[:, :, idx[c]]) for c in vol) if vol else \
        np.full((n, T), np.log(config.volatility))

    u = np.zeros((n, T))
    shocks = rng.standard_normal((n, T))
    u[:, 0] = shocks[:, 0] * config.volatility / np.sqrt(1 - config.ar ** 2)
    for t in range(1, T):
        # drift and volatility are driven by the covariates observed at t-1
        u[:, t] = config.ar * u[:, t - 1] + np.exp(logvol[:, t - 1]) * shocks[:, t]
    mean_level = np.concatenate([drift[:, :1], drift[:, :-1]], axis=1)
    income = np.exp(mean_level + u)
    negative = rng.random((n, T)) < config.negative_income_rate
    income = np.where(negative, -2.5 * income, income)

    cat_draws = {}
    for name, levels in noise_cat:
        probs = rng.dirichlet(np.full(len(levels), 3.0))
        farm_level = rng.choice(len(levels), size=n, p=probs)
        switch = rng.random((n, T)) < 0.02
        other = rng.choice(len(levels), size=(n, T), p=probs)
        codes = np.where(switch, other, farm_level[:, None])
        cat_draws[name] = np.asarray(levels, dtype=object)[codes]

    data = {
        "farm_id": np.repeat([f"F{i + 1:05d}" for i in range(n)], T),
        "year": np.tile(years, n),
        "value_added": np.round(income, 2).ravel(),
    }
    for c in schema.covariates:
        if c in cat_draws:
            data[c] = cat_draws[c].ravel()
            continue
        x = latent[:, :, idx[c]]
        if c == "INSURE":
            x = np.exp(np.log(0.02) + 0.6 * x)
        elif c in currency:
            x = np.exp(9.0 + 0.8 * x)
        data[c] = np.round(x, 6).ravel()
    frame = pd.DataFrame(data)
    return SyntheticPanel(Panel(frame, schema), tuple(drivers), tuple(level),
                          tuple(vol))
