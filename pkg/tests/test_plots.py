import pandas as pd
import pytest

from istrate.errors import PlotError
from istrate.plots import PLOT_FILES, emit_plots


def write_tables(out):
    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"farm_id": list("ABCDEF"), "year": [2012] * 6,
                  "indemnity": [0.0, 0.0, 120.0, 3400.0, 560.0, 78.0]}
                 ).to_csv(out / "indemnities.csv", index=False)
    pd.DataFrame({"model": ["GLM", "GLM", "LASSO", "LASSO"], "year": [2012] * 4,
                  "resample": [0, 1, 0, 1], "n_selected": [20, 20, 4, 6],
                  "log_rmse": [7.1, 7.3, 6.9, 7.0], "error": [None] * 4}
                 ).to_csv(out / "fit_records.csv", index=False)
    pd.DataFrame({"model": ["GLM", "LASSO"] * 2, "year": [2012] * 4,
                  "percentile": [50, 50, 90, 90], "share": [0.4, 0.5, 0.8, 0.9]}
                 ).to_csv(out / "participation.csv", index=False)
    pd.DataFrame({"model": ["GLM", "GLM", "LASSO", "LASSO"], "year": [2012, 2013] * 2,
                  "balance": [-10.0, 5.0, 2.0, -1.0]}).to_csv(out / "balances.csv", index=False)


def test_six_figures_with_stable_bytes(tmp_path):
    runs = []
    for name in ("a", "b"):
        write_tables(tmp_path / name)
        files = emit_plots(tmp_path / name)
        assert [f.name for f in files] == list(PLOT_FILES)
        runs.append({f.name: f.read_bytes() for f in files})
    assert runs[0] == runs[1]
    assert all(b.lstrip().startswith(b"<?xml") for b in runs[0].values())


def test_missing_table_is_a_plot_error(tmp_path):
    write_tables(tmp_path)
    (tmp_path / "balances.csv").unlink()
    with pytest.raises(PlotError, match="balances.csv"):
        emit_plots(tmp_path)


def test_too_few_indemnities(tmp_path):
    write_tables(tmp_path)
    pd.DataFrame({"farm_id": ["A"], "year": [2012], "indemnity": [0.0]}
                 ).to_csv(tmp_path / "indemnities.csv", index=False)
    with pytest.raises(PlotError):
        emit_plots(tmp_path)
