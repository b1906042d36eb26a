"""CSV/JSON input and output for the command-line front end.

The CSV contract: UTF-8 with a header row, long format with one row per
(unit, period), decimal point '.', no thousands separators; the treatment
time column holds the calendar period of treatment or is empty for
never-treated units.  Output files are written with full float repr and
sorted JSON keys so identical runs are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import pandas as pd

from .errors import ConfigError
from .panel import Panel, panel_from_long, panel_to_long


def read_panel_csv(path, unit_col, time_col, outcome_col, treatment_col=None,
                   covariate_cols=()) -> Panel:
    try:
        df = pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"input file not found: {path}") from exc
    return panel_from_long(
        df, unit_col, time_col, outcome_col,
        treatment_col=treatment_col, covariate_cols=covariate_cols,
    )


def write_panel_csv(panel: Panel, path, **kwargs) -> None:
    panel_to_long(panel, **kwargs).to_csv(path, index=False)


def write_csv(frame: pd.DataFrame, path) -> None:
    frame.to_csv(path, index=False)


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
