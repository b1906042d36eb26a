"""Balanced-panel container, treatment-timing encoding, and validation.

A panel holds N units observed over T+1 consecutive integer periods, an
outcome matrix, an optional covariate tensor, and a per-unit treatment
timing.  Never-treated units carry no timing at all (``treated`` mask is
False); they are not encoded with a magic large integer.

Periods are re-indexed internally so that the earliest treatment event
maps to 0: after :func:`reindex_times` the time axis runs from -T0-1 to
T1-1, where T0+1 periods are fully pre-treatment and T1 periods have at
least one treated unit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .errors import ConfigError


@dataclass(frozen=True)
class Panel:
    """Balanced long panel in matrix form.

    Attributes
    ----------
    units : tuple of str
        Unit identifiers, length N.
    times : ndarray of int
        Consecutive integer periods, length T+1.
    outcome : ndarray, shape (N, T+1)
    covariates : ndarray, shape (N, T+1, p)
        p may be zero.
    event_time : ndarray of int, shape (N,)
        Treatment timing on the ``times`` axis; only meaningful where
        ``treated`` is True.
    treated : ndarray of bool, shape (N,)
        False marks never-treated units.
    """

    units: tuple
    times: np.ndarray
    outcome: np.ndarray
    covariates: np.ndarray
    event_time: np.ndarray
    treated: np.ndarray

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return len(self.times)

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[2]

    @property
    def is_reindexed(self) -> bool:
        """True once the earliest treatment event sits at time 0."""
        return bool(self.treated.any()) and int(self.event_time[self.treated].min()) == 0

    @property
    def t0(self) -> int:
        """Number of strictly pre-treatment periods minus one (reindexed panels)."""
        return int(np.sum(self.times < 0)) - 1

    @property
    def t1(self) -> int:
        """Number of periods at or after the first treatment event (reindexed panels)."""
        return int(np.sum(self.times >= 0))

    def unit_index(self) -> dict:
        return {u: i for i, u in enumerate(self.units)}


def make_panel(units, times, outcome, covariates=None, event_time=None, treated=None) -> Panel:
    """Assemble a :class:`Panel`, coercing shapes but not validating content."""
    units = tuple(str(u) for u in units)
    times = np.asarray(times, dtype=int)
    outcome = np.asarray(outcome, dtype=float)
    n, tp1 = len(units), len(times)
    if covariates is None:
        covariates = np.zeros((n, tp1, 0))
    covariates = np.asarray(covariates, dtype=float)
    if covariates.ndim == 2:
        covariates = covariates[:, :, None]
    if event_time is None:
        event_time = np.zeros(n, dtype=int)
        treated = np.zeros(n, dtype=bool)
    else:
        if treated is None:
            treated = np.ones(n, dtype=bool)
        ev = np.zeros(n, dtype=int)
        treated = np.asarray(treated, dtype=bool)
        ev[treated] = np.asarray(event_time)[treated]
        event_time = ev
    if outcome.shape != (n, tp1):
        raise ConfigError(f"outcome shape {outcome.shape} does not match ({n}, {tp1})")
    if covariates.shape[:2] != (n, tp1):
        raise ConfigError(f"covariates shape {covariates.shape} does not match panel")
    return Panel(units, times, outcome, covariates, event_time, treated)


def validate(panel: Panel) -> list:
    """Check panel invariants; returns a list of violation messages.

    An empty list means the panel is valid.  Violations are diagnostics,
    not exceptions, so callers can report all problems at once.
    """
    report = []
    n, tp1 = panel.n_units, panel.n_periods
    if len(set(panel.units)) != n:
        report.append("duplicate unit identifiers")
    if tp1 >= 2 and not np.array_equal(np.diff(panel.times), np.ones(tp1 - 1, dtype=int)):
        report.append("times are not consecutive integers")
    bad = ~np.isfinite(panel.outcome)
    if bad.any():
        for i, t in zip(*np.nonzero(bad)):
            report.append(f"missing or non-finite outcome cell (unit={panel.units[i]}, time={panel.times[t]})")
    badx = ~np.isfinite(panel.covariates)
    if badx.any():
        for i, t, p in zip(*np.nonzero(badx)):
            report.append(
                f"missing or non-finite covariate cell (unit={panel.units[i]}, time={panel.times[t]}, p={p})"
            )
    lo, hi = int(panel.times[0]), int(panel.times[-1])
    for i in np.nonzero(panel.treated)[0]:
        e = int(panel.event_time[i])
        if not lo <= e <= hi:
            report.append(f"treatment timing {e} outside observed periods (unit={panel.units[i]})")
    if not panel.treated.any():
        report.append("no treatment variation: all units are never-treated")
    return report


def check_panel(panel: Panel) -> Panel:
    """Raise :class:`ConfigError` listing all violations, if any."""
    problems = validate(panel)
    if problems:
        raise ConfigError("invalid panel: " + "; ".join(problems))
    return panel


def reindex_times(panel: Panel) -> Panel:
    """Shift the period axis so the earliest treatment event maps to 0.

    Idempotent.  Fails if no treated unit exists or if the earliest event
    falls in the first period (no pre-treatment period would remain).
    """
    check_panel(panel)
    earliest = int(panel.event_time[panel.treated].min())
    if earliest == int(panel.times[0]):
        raise ConfigError("earliest treatment occurs in the first period: no pre-treatment period")
    new_times = panel.times - earliest
    ev = panel.event_time.copy()
    ev[panel.treated] -= earliest
    ev[~panel.treated] = 0
    return replace(panel, times=new_times, event_time=ev)


@dataclass(frozen=True)
class TypeAssignment:
    """Per-unit type labels in {1..n_types}; every label must be used."""

    labels: np.ndarray
    n_types: int

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))

    def is_valid(self) -> bool:
        used = np.unique(self.labels)
        return (
            used.size > 0
            and used[0] >= 1
            and used[-1] <= self.n_types
            and used.size == self.n_types
        )

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_types + 1)[1:]


def panel_from_long(df: pd.DataFrame, unit_col, time_col, outcome_col,
                    treatment_col=None, covariate_cols=()) -> Panel:
    """Build a panel from a long-format frame (one row per unit-period).

    Missing (unit, period) combinations become NaN cells, which
    :func:`validate` reports; an empty/NaN treatment-time entry marks a
    never-treated unit.  The treatment time must be constant within unit.
    """
    for col in [unit_col, time_col, outcome_col, *covariate_cols] + (
        [treatment_col] if treatment_col else []
    ):
        if col not in df.columns:
            raise ConfigError(f"column '{col}' not found in input data")
    work = df.copy()
    work[unit_col] = work[unit_col].astype(str)
    units = tuple(sorted(work[unit_col].unique()))
    times = np.sort(work[time_col].unique()).astype(int)
    if work.duplicated([unit_col, time_col]).any():
        raise ConfigError("duplicate (unit, time) rows in input data")

    shaped = work.set_index([unit_col, time_col])
    full = pd.MultiIndex.from_product([units, times], names=[unit_col, time_col])
    shaped = shaped.reindex(full)
    n, tp1 = len(units), len(times)
    outcome = shaped[outcome_col].to_numpy(dtype=float).reshape(n, tp1)
    if covariate_cols:
        covariates = np.stack(
            [shaped[c].to_numpy(dtype=float).reshape(n, tp1) for c in covariate_cols], axis=2
        )
    else:
        covariates = np.zeros((n, tp1, 0))

    event_time = np.zeros(n, dtype=int)
    treated = np.zeros(n, dtype=bool)
    if treatment_col is not None:
        def _timings(s):
            s = s.dropna()
            if s.dtype == object:
                s = s[s.astype(str).str.strip() != ""]
            return s.unique()

        raw = work[[unit_col, treatment_col]].drop_duplicates()
        per_unit = raw.groupby(unit_col)[treatment_col].apply(_timings)
        for i, u in enumerate(units):
            vals = per_unit.get(u, np.array([]))
            if len(vals) > 1:
                raise ConfigError(f"treatment time varies within unit {u}")
            if len(vals) == 1:
                treated[i] = True
                event_time[i] = int(float(vals[0]))
    return Panel(units, times, outcome, covariates, event_time, treated)


def panel_to_long(panel: Panel, unit_col="unit", time_col="time", outcome_col="outcome",
                  treatment_col="treat_time", covariate_prefix="x") -> pd.DataFrame:
    """Export a panel to the long-format CSV contract (empty = never treated)."""
    n, tp1 = panel.n_units, panel.n_periods
    rows = {
        unit_col: np.repeat(panel.units, tp1),
        time_col: np.tile(panel.times, n),
        outcome_col: panel.outcome.reshape(-1),
    }
    for p in range(panel.n_covariates):
        rows[f"{covariate_prefix}{p}"] = panel.covariates[:, :, p].reshape(-1)
    treat = np.repeat(
        [str(int(e)) if tr else "" for e, tr in zip(panel.event_time, panel.treated)], tp1
    )
    rows[treatment_col] = treat
    return pd.DataFrame(rows)
