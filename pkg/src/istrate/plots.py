"""Static SVG figures drawn from a finished report directory.

Figures are byte-reproducible: the SVG id salt is fixed and no creation
date is written.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from scipy import stats  # noqa: E402

from .errors import PlotError  # noqa: E402

PLOT_FILES = ("indemnity_density.svg", "nvars_boxplot.svg", "rmse_vs_nvars.svg",
              "participation.svg", "multiannual_balance.svg", "annual_balance.svg")
_STYLE = {"svg.hashsalt": "istrate", "svg.fonttype": "none", "font.size": 9,
          "axes.spines.top": False, "axes.spines.right": False}


def _read(out: Path, name: str) -> pd.DataFrame:
    path = out / name
    if not path.exists():
        raise PlotError(f"missing report table {name} in {out}")
    return pd.read_csv(path)


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def indemnity_density(indemnities: pd.DataFrame, path: Path) -> Path:
    """Kernel density of log positive indemnities, with the zero share noted."""
    ind = indemnities["indemnity"].to_numpy(float) if len(indemnities) else np.array([])
    pos = ind[ind > 0]
    if ind.size == 0 or pos.size < 2:
        raise PlotError("indemnity table has too few positive indemnities to plot")
    logs = np.log10(pos)
    grid = np.linspace(logs.min() - 0.5, logs.max() + 0.5, 400)
    dens = stats.gaussian_kde(logs)(grid)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.fill_between(grid, dens, alpha=0.35)
    ax.plot(grid, dens)
    ax.set_xlabel("log10 indemnity (EUR), positive only")
    ax.set_ylabel("density")
    ax.set_title(f"Indemnity density ({np.mean(ind == 0):.0%} of farm-years pay zero)")
    return _save(fig, path)


def nvars_boxplot(records: pd.DataFrame, path: Path) -> Path:
    ok = records[records["error"].isna()] if "error" in records else records
    models = list(dict.fromkeys(ok["model"]))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.boxplot([ok.loc[ok.model == m, "n_selected"].to_numpy() for m in models])
    ax.set_xticks(range(1, len(models) + 1), models)
    ax.set_ylabel("selected variables per fit")
    return _save(fig, path)


def rmse_vs_nvars(records: pd.DataFrame, path: Path) -> Path:
    ok = records[records["error"].isna()] if "error" in records else records
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for model, part in ok.groupby("model", sort=False):
        ax.scatter(part["n_selected"], part["log_rmse"], s=10, label=model, alpha=0.7)
    ax.set_xlabel("selected variables")
    ax.set_ylabel("log RMSE")
    ax.legend(frameon=False)
    return _save(fig, path)


def participation_bars(participation: pd.DataFrame, path: Path) -> Path:
    share = participation.groupby(["percentile", "model"], sort=False)["share"].mean()
    table = share.unstack("model")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.8 / max(1, table.shape[1])
    x = np.arange(len(table.index))
    for j, model in enumerate(table.columns):
        ax.bar(x + j * width, table[model].to_numpy(), width, label=model)
    ax.set_xticks(x + width * (table.shape[1] - 1) / 2,
                  [f"{p:g}th" for p in table.index])
    ax.set_xlabel("insurance-cost percentile threshold")
    ax.set_ylabel("share of participants")
    ax.legend(frameon=False)
    return _save(fig, path)


def multiannual_bars(balances: pd.DataFrame, path: Path) -> Path:
    totals = balances.groupby("model", sort=False)["balance"].sum()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(totals.index, totals.to_numpy())
    ax.axhline(0, color="black", linewidth=0.8)
    ax.set_ylabel("multiannual balance (EUR)")
    return _save(fig, path)


def annual_lines(balances: pd.DataFrame, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for model, part in balances.groupby("model", sort=False):
        ax.plot(part["year"], part["balance"], marker="o", label=model)
    ax.axhline(0, color="black", linewidth=0.8)
    ax.set_xlabel("year")
    ax.set_ylabel("annual balance (EUR)")
    ax.legend(frameon=False)
    return _save(fig, path)


def emit_plots(report_dir) -> list:
    """Write the six figures next to the report tables they are drawn from."""
    out = Path(report_dir)
    tables = {name: _read(out, name) for name in
              ("indemnities.csv", "fit_records.csv", "participation.csv", "balances.csv")}
    with plt.rc_context(_STYLE):
        return [
            indemnity_density(tables["indemnities.csv"], out / PLOT_FILES[0]),
            nvars_boxplot(tables["fit_records.csv"], out / PLOT_FILES[1]),
            rmse_vs_nvars(tables["fit_records.csv"], out / PLOT_FILES[2]),
            participation_bars(tables["participation.csv"], out / PLOT_FILES[3]),
            multiannual_bars(tables["balances.csv"], out / PLOT_FILES[4]),
            annual_lines(tables["balances.csv"], out / PLOT_FILES[5]),
        ]
