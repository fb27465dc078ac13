"""Income Stabilization Tool indemnities simulated from a farm income panel.

The indemnity at year ``t`` compares realised income with the mean of the
three previous years:

    Ind = 0                  if I >= a * E(I)
    Ind = b * (E(I) - I)     otherwise

Note that the regulation's prose describes the cap as "70% of the trigger
level and the current income difference"; the formula above (difference
to the expected income, not to the trigger) is what is implemented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .data import WINDOW, Panel
from .errors import EligibilityError, EmptyResultError, WindowError

TABLE_COLUMNS = ["farm_id", "year", "income", "expected_income", "trigger", "indemnity"]


@dataclass(frozen=True)
class IstParams:
    a: float = 0.7
    b: float = 0.7
    window: int = WINDOW

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ValueError(f"trigger share must lie in (0, 1), got {self.a}")
        if not 0 < self.b <= 1:
            raise ValueError(f"compensation share must lie in (0, 1], got {self.b}")
        if self.window != WINDOW:
            raise ValueError("the reference window is fixed at three years")


@dataclass(frozen=True)
class IndemnityRecord:
    farm_id: str
    year: int
    income: float
    expected_income: float
    trigger: float
    indemnity: float


def expected_income(history) -> float:
    history = np.asarray(history, dtype=float)
    if history.shape != (WINDOW,) or not np.all(np.isfinite(history)):
        raise WindowError(f"expected income needs exactly {WINDOW} finite incomes")
    return float(history.mean())


def indemnity(income, expected, params: IstParams = IstParams()):
    """Vectorised over ``income``/``expected``; ties at the trigger pay nothing."""
    income = np.asarray(income, dtype=float)
    expected = np.asarray(expected, dtype=float)
    if np.any(~(expected > 0)):
        raise EligibilityError("expected income must be positive")
    pay = income < params.a * expected
    out = np.where(pay, params.b * (expected - income), 0.0)
    return out if out.ndim else float(out)


def simulate_panel(panel: Panel, params: IstParams = IstParams()) -> pd.DataFrame:
    """IndemnityTable: one row per eligible (farm, year), sorted by farm then year.

    Eligible means the three previous years are all present and their mean
    income is strictly positive.
    """
    frame = panel.frame[["farm_id", "year", "value_added"]]
    by_farm = frame.groupby("farm_id", sort=False)
    year = frame["year"].to_numpy()
    ok = np.ones(len(frame), bool)
    lagged = []
    for k in range(1, WINDOW + 1):
        ok &= by_farm["year"].shift(k).to_numpy(float) == year - k
        lagged.append(by_farm["value_added"].shift(k).to_numpy(float))
    expected = np.mean(lagged, axis=0)
    ok &= np.where(np.isfinite(expected), expected, 0) > 0
    if not ok.any():
        raise EmptyResultError("no farm-year is eligible for an IST indemnity")
    income = frame["value_added"].to_numpy(float)[ok]
    expected = expected[ok]
    table = pd.DataFrame({
        "farm_id": frame["farm_id"].to_numpy()[ok],
        "year": year[ok].astype(int),
        "income": income,
        "expected_income": expected,
        "trigger": params.a * expected,
        "indemnity": indemnity(income, expected, params),
    })
    return table.sort_values(["farm_id", "year"], kind="mergesort").reset_index(drop=True)


def records(table: pd.DataFrame):
    for row in table[TABLE_COLUMNS].itertuples(index=False):
        yield IndemnityRecord(*row)


def write_table(table: pd.DataFrame, path) -> None:
    table[TABLE_COLUMNS].to_csv(path, index=False, float_format="%.10g",
                                lineterminator="\n")


@dataclass(frozen=True)
class Moments:
    n: int
    mean: float | None
    sd: float | None
    median: float | None
    min: float | None
    max: float | None
    skewness: float | None
    kurtosis: float | None

    @classmethod
    def of(cls, values) -> "Moments":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls(0, None, None, None, None, None, None, None)
        sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
        spread = v.std() > 0
        return cls(
            n=int(v.size), mean=float(v.mean()), sd=sd, median=float(np.median(v)),
            min=float(v.min()), max=float(v.max()),
            skewness=float(stats.skew(v)) if spread else None,
            kurtosis=float(stats.kurtosis(v, fisher=False)) if spread else None,
        )


@dataclass(frozen=True)
class IndemnitySummary:
    """Descriptive statistics of all indemnities and of the positive ones.

    Kurtosis is the plain (non-excess) standardized fourth moment.
    """

    full: Moments
    positive: Moments

    @property
    def min_positive(self) -> float | None:
        return self.positive.min

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for label, m in (("Sample", self.full), ("Only with indemnity >0", self.positive)):
            rows.append({"subset": label, "n_obs": m.n, "mean": m.mean,
                         "standard_deviation": m.sd, "median": m.median,
                         "min": m.min, "max": m.max, "skewness": m.skewness,
                         "kurtosis": m.kurtosis})
        return pd.DataFrame(rows)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.6f",
                               lineterminator="\n")


def indemnity_summary(table: pd.DataFrame) -> IndemnitySummary:
    ind = table["indemnity"].to_numpy(float)
    return IndemnitySummary(Moments.of(ind), Moments.of(ind[ind > 0]))
