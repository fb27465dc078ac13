"""Premiums, affordability, fairness and mutual-fund balances.

A premium is the predicted expected indemnity times ``1 + delta``. The
fund's balance in a year is the sum of premiums minus indemnities over the
participating farms.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .data import Panel
from .errors import DataError, DomainError, JoinError

PERCENTILES = (50, 90, 95, 99)
PREMIUM_COLUMNS = ["farm_id", "year", "prediction", "premium", "indemnity",
                   "value_added_lag", "insure_lag"]


@dataclass(frozen=True)
class PremiumTable:
    frame: pd.DataFrame
    delta: float = 0.0

    def __len__(self):
        return len(self.frame)

    def keys(self) -> list:
        return list(zip(self.frame["farm_id"], self.frame["year"]))

    def restrict(self, participants) -> pd.DataFrame:
        if participants is None:
            return self.frame
        keys = pd.MultiIndex.from_frame(self.frame[["farm_id", "year"]])
        wanted = pd.MultiIndex.from_tuples(list(participants), names=["farm_id", "year"]) \
            if len(participants) else keys[:0]
        return self.frame[keys.isin(wanted)]


def build_premiums(predictions: pd.DataFrame, realized: pd.DataFrame, panel: Panel,
                   delta: float = 0.0, insure_column: str = "INSURE") -> PremiumTable:
    """Join predicted means (columns farm_id, year, mu) with realized
    indemnities and the farm's value added and insurance-cost ratio at t-1."""
    if not delta >= 0:
        raise DomainError(f"loading must be nonnegative, got {delta}")
    pred = predictions[["farm_id", "year", "mu"]].copy()
    if np.any(~(pred["mu"].to_numpy(float) >= 0)):
        raise DomainError("predicted means must be nonnegative")
    pred["year"] = pred["year"].astype(int)
    ind = realized[["farm_id", "year", "indemnity"]]
    lag = panel.frame[["farm_id", "year", "value_added"]].copy()
    lag["insure_lag"] = panel.frame[insure_column].to_numpy(float) \
        if insure_column in panel.frame else np.nan
    lag["year"] = lag["year"] + 1
    lag = lag.rename(columns={"value_added": "value_added_lag"})
    table = pred.merge(ind, on=["farm_id", "year"], how="left", validate="one_to_one")
    table = table.merge(lag, on=["farm_id", "year"], how="left", validate="one_to_one")
    missing = table["indemnity"].isna() | table["value_added_lag"].isna()
    if missing.any():
        keys = list(zip(table.loc[missing, "farm_id"], table.loc[missing, "year"]))
        raise JoinError(f"no realized indemnity or lagged record for {keys[:10]}"
                        f"{' ...' if len(keys) > 10 else ''}", keys)
    table["prediction"] = table.pop("mu")
    table["premium"] = (1 + delta) * table["prediction"]
    table = table[PREMIUM_COLUMNS].sort_values(["farm_id", "year"], kind="mergesort")
    return PremiumTable(table.reset_index(drop=True), float(delta))


@dataclass(frozen=True)
class ParticipationResult:
    percentile: float
    threshold: float
    participants: frozenset
    share: dict
    cohort: dict
    excluded: int

    @property
    def overall_share(self) -> float:
        total = sum(self.cohort.values())
        return len(self.participants) / total if total else float("nan")


def affordability(table: PremiumTable, percentile: float,
                  reference=None) -> ParticipationResult:
    """Farms join when premium / lagged value added is at most the given
    percentile of the observed insurance-cost ratio.

    ``reference`` is the ratio distribution the percentile is taken from;
    by default the lagged ratios of every row in ``table``. Rows with
    nonpositive lagged value added are left out of the cohort and counted
    in ``excluded``.
    """
    if len(table) == 0:
        raise DataError("premium table is empty")
    frame = table.frame
    ref = frame["insure_lag"].to_numpy(float) if reference is None \
        else np.asarray(reference, float)
    ref = ref[np.isfinite(ref)]
    if ref.size == 0:
        raise DataError("no observed insurance-cost ratios to set the threshold")
    threshold = float(np.percentile(ref, percentile))
    va = frame["value_added_lag"].to_numpy(float)
    eligible = va > 0
    ratio = np.full(len(frame), np.inf)
    ratio[eligible] = frame["premium"].to_numpy(float)[eligible] / va[eligible]
    joins = eligible & (ratio <= threshold)
    years = frame["year"].to_numpy()
    share, cohort = {}, {}
    for y in sorted(set(years.tolist())):
        in_year = years == y
        cohort[y] = int(np.sum(eligible & in_year))
        share[y] = float(np.sum(joins & in_year) / cohort[y]) if cohort[y] else float("nan")
    participants = frozenset(zip(frame["farm_id"][joins], frame["year"][joins].astype(int)))
    return ParticipationResult(float(percentile), threshold, participants, share, cohort,
                               int(np.sum(~eligible)))


@dataclass(frozen=True)
class FairnessReport:
    positive: float
    negative: float
    total: float


def fairness(table: PremiumTable, participants=None, per_farm: bool = False) -> FairnessReport:
    """Sums of positive and of negative net premiums (premium - indemnity).

    Signs are split per farm-year, or per farm after summing its years when
    ``per_farm`` is set. ``participants=None`` uses every row.
    """
    frame = table.restrict(participants)
    net = frame["premium"].to_numpy(float) - frame["indemnity"].to_numpy(float)
    if per_farm and len(frame):
        net = pd.Series(net).groupby(frame["farm_id"].to_numpy(), sort=True).sum().to_numpy()
    positive = float(np.sum(net[net > 0]))
    negative = float(np.sum(net[net < 0]))
    return FairnessReport(positive, negative, positive + negative)


@dataclass(frozen=True)
class BalanceSeries:
    years: tuple
    annual: tuple
    multiannual: float
    max_drawdown: float


def balances(table: PremiumTable, participants=None, years=None) -> BalanceSeries:
    """Annual fund balances and their sum (summed in year order)."""
    frame = table.restrict(participants)
    years = tuple(sorted(set(table.frame["year"].astype(int)))) if years is None \
        else tuple(int(y) for y in years)
    net = (frame["premium"] - frame["indemnity"]).groupby(frame["year"].astype(int)).sum()
    annual = tuple(float(net.get(y, 0.0)) for y in years)
    multiannual = 0.0
    for b in annual:
        multiannual += b
    drawdown = min(annual) if annual else 0.0
    return BalanceSeries(years, annual, multiannual, drawdown)


@dataclass(frozen=True)
class EconomicReport:
    """Per model: participation by percentile, fairness and balances."""

    participation: dict
    fairness: dict
    balances: dict

    def participation_table(self) -> pd.DataFrame:
        rows = []
        for model, results in self.participation.items():
            for res in results:
                for year, share in res.share.items():
                    rows.append({"model": model, "year": year,
                                 "percentile": res.percentile, "share": share})
        return pd.DataFrame(rows, columns=["model", "year", "percentile", "share"])

    def fairness_table(self) -> pd.DataFrame:
        return pd.DataFrame([{"model": m, "pos": f.positive, "neg": f.negative,
                              "total": f.total} for m, f in self.fairness.items()],
                            columns=["model", "pos", "neg", "total"])

    def balance_table(self) -> pd.DataFrame:
        rows = [{"model": m, "year": y, "balance": b}
                for m, series in self.balances.items()
                for y, b in zip(series.years, series.annual)]
        return pd.DataFrame(rows, columns=["model", "year", "balance"])

    def write(self, out_dir) -> list:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fmt = dict(index=False, float_format="%.10g", lineterminator="\n")
        written = []
        for name, table in (("participation.csv", self.participation_table()),
                            ("fairness.csv", self.fairness_table()),
                            ("balances.csv", self.balance_table())):
            table.to_csv(out / name, **fmt)
            written.append(out / name)
        return written


def economic_report(tables: dict, percentiles=PERCENTILES, fairness_percentile=50,
                    restrict_to_participants: bool = True, per_farm: bool = False,
                    reference=None) -> EconomicReport:
    """Participation for every percentile; fairness and balances over the
    participants at ``fairness_percentile`` (or everyone)."""
    participation, fair, bal = {}, {}, {}
    for model, table in tables.items():
        results = [affordability(table, q, reference) for q in percentiles]
        participation[model] = results
        chosen = None
        if restrict_to_participants:
            chosen = next(r.participants for r in results
                          if r.percentile == fairness_percentile) \
                if fairness_percentile in percentiles \
                else affordability(table, fairness_percentile, reference).participants
        fair[model] = fairness(table, chosen, per_farm)
        bal[model] = balances(table, chosen)
    return EconomicReport(participation, fair, bal)
