"""Regression design for a given type assignment.

Columns come in three blocks, in a deterministic order so coefficient
vectors are comparable across runs:

1. time fixed-effect indicators, one per (type, period);
2. treatment indicators, one per relative time r = t - E_i with r = -1
   permanently omitted, leads below the lead window constrained to zero,
   and lags beyond the binning threshold pooled into one column;
3. covariates, pooled or per type.

Indicators whose cell is empty under the current assignment are not
built; they are recorded in ``dropped`` so the surviving columns plus the
drop list always partition the notional column set.  Under mean
differencing every regressor is demeaned within unit and one time
fixed-effect per type is removed as the normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .panel import TypeAssignment
from .transform import MEAN_DIFF, MODES, DifferencedPanel

SHARED = 0  # type_label used for lead columns shared across types


@dataclass(frozen=True)
class DesignSpec:
    """Configuration of the regression design.

    lead_window : int
        Number of pre-treatment leads l with free coefficients
        (r = -l .. -2; r = -1 is the omitted reference). Earlier leads
        are constrained to zero. Must satisfy 0 <= l <= T0.
    lag_bin : int or None
        Highest individually-estimated lag; relative times beyond it are
        pooled into a single ``r >= lag_bin+1`` indicator.
    shared_leads : bool
        Estimate one lead coefficient per r, common across types.
    type_specific_slopes : bool
        One covariate slope vector per type instead of a pooled one.
    """

    n_types: int
    lead_window: int = 0
    lag_bin: int | None = None
    shared_leads: bool = False
    type_specific_slopes: bool = False
    mode: str = "first-diff"

    def __post_init__(self):
        if self.n_types < 1:
            raise ConfigError("n_types must be >= 1")
        if self.lead_window < 0:
            raise ConfigError("lead_window must be >= 0")
        if self.lag_bin is not None and self.lag_bin < 0:
            raise ConfigError("lag_bin must be >= 0")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")


@dataclass(frozen=True)
class Column:
    """Descriptor of one design column; serializes to a stable name."""

    kind: str                  # "timefe" | "treat" | "x"
    type_label: int | None = None  # SHARED (=0) marks shared treat columns
    period: int | None = None
    rel_time: int | None = None
    binned: bool = False
    covariate: int | None = None

    @property
    def name(self) -> str:
        if self.kind == "timefe":
            return f"timefe[k={self.type_label}][t={self.period}]"
        if self.kind == "treat":
            who = "shared" if self.type_label == SHARED else f"k={self.type_label}"
            what = f"r>={self.rel_time}" if self.binned else f"r={self.rel_time}"
            return f"treat[{who}][{what}]"
        if self.type_label is None:
            return f"x[p={self.covariate}]"
        return f"x[k={self.type_label}][p={self.covariate}]"


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray                 # (n_rows, n_cols) dense
    columns: list
    dropped: list                      # (Column, reason) pairs
    row_units: np.ndarray              # unit index per row
    row_periods: np.ndarray            # period value per row
    populations: np.ndarray            # raw indicator/nonzero count per column
    spec: DesignSpec = field(repr=False, default=None)

    @property
    def names(self) -> list:
        return [c.name for c in self.columns]


def _rel_times(dpanel: DifferencedPanel):
    """Relative time r = t - E_i per (unit, period); never-treated rows get None mask."""
    src = dpanel.source
    rel = dpanel.periods[None, :] - src.event_time[:, None]
    return rel, src.treated


def max_individual_lag(dpanel: DifferencedPanel, spec: DesignSpec) -> int:
    t1 = dpanel.source.t1
    if spec.lag_bin is not None:
        if spec.lag_bin > t1 - 1:
            raise ConfigError(f"lag_bin {spec.lag_bin} exceeds T1-1 = {t1 - 1}")
        return spec.lag_bin
    return t1 - 1


def build_design(dpanel: DifferencedPanel, assignment: TypeAssignment,
                 spec: DesignSpec) -> DesignMatrix:
    """Assemble the dense design for ``assignment`` under ``spec``.

    Rows are unit-major: all periods of unit 0, then unit 1, and so on.
    Raises if the assignment leaves a type empty or the lead window
    exceeds the available pre-treatment periods.
    """
    src = dpanel.source
    n, n_periods = dpanel.n_units, dpanel.n_periods
    k_count = spec.n_types
    if len(assignment.labels) != n:
        raise ConfigError("assignment does not cover all units")
    if assignment.n_types != k_count:
        raise ConfigError("assignment n_types does not match design spec")
    if not assignment.is_valid():
        raise ConfigError("every type must be assigned at least one unit")
    t0 = src.t0
    if spec.lead_window > t0:
        raise ConfigError(f"lead_window {spec.lead_window} exceeds T0 = {t0}")

    labels = assignment.labels
    periods = dpanel.periods
    rel, treated = _rel_times(dpanel)
    lag_max = max_individual_lag(dpanel, spec)
    lead_lo, lead_hi = -spec.lead_window, -2

    rows = n * n_periods
    row_units = np.repeat(np.arange(n), n_periods)
    row_periods = np.tile(periods, n)
    row_labels = labels[row_units]
    row_rel = rel.reshape(-1)
    row_treated = treated[row_units]
    period_idx = np.tile(np.arange(n_periods), n)

    lead_mask = row_treated & (row_rel >= lead_lo) & (row_rel <= lead_hi)
    lag_mask = row_treated & (row_rel >= 0) & (row_rel <= lag_max)
    bin_mask = (
        row_treated & (row_rel >= lag_max + 1)
        if spec.lag_bin is not None
        else np.zeros(rows, dtype=bool)
    )

    # realized (type, relative-time) cells under this assignment
    n_leads = max(lead_hi - lead_lo + 1, 0)
    lead_seen = np.zeros((k_count + 1, n_leads), dtype=bool)
    if n_leads:
        owner = np.where(spec.shared_leads, SHARED, row_labels[lead_mask])
        np.logical_or.at(lead_seen, (owner, row_rel[lead_mask] - lead_lo), True)
    lag_seen = np.zeros((k_count + 1, lag_max + 1), dtype=bool)
    np.logical_or.at(lag_seen, (row_labels[lag_mask], row_rel[lag_mask]), True)
    bin_seen = np.zeros(k_count + 1, dtype=bool)
    np.logical_or.at(bin_seen, row_labels[bin_mask], True)

    columns, dropped = [], []
    col_timefe = np.full((k_count + 1, n_periods), -1, dtype=int)
    col_lead = np.full((k_count + 1, max(n_leads, 1)), -1, dtype=int)
    col_lag = np.full((k_count + 1, lag_max + 1), -1, dtype=int)
    col_bin = np.full(k_count + 1, -1, dtype=int)

    def register(col) -> int:
        columns.append(col)
        return len(columns) - 1

    md_norm_period = periods[0]
    for k in range(1, k_count + 1):
        for j, t in enumerate(periods):
            col = Column("timefe", type_label=k, period=int(t))
            if spec.mode == MEAN_DIFF and t == md_norm_period:
                dropped.append((col, "normalization"))
                continue
            col_timefe[k, j] = register(col)

    def register_leads(k):
        for j, r in enumerate(range(lead_lo, lead_hi + 1)):
            col = Column("treat", type_label=k, rel_time=r)
            if lead_seen[k, j]:
                col_lead[k, j] = register(col)
            else:
                dropped.append((col, "empty"))

    if spec.shared_leads:
        register_leads(SHARED)
    for k in range(1, k_count + 1):
        if not spec.shared_leads:
            register_leads(k)
        for r in range(0, lag_max + 1):
            col = Column("treat", type_label=k, rel_time=r)
            if lag_seen[k, r]:
                col_lag[k, r] = register(col)
            else:
                dropped.append((col, "empty"))
        if spec.lag_bin is not None:
            col = Column("treat", type_label=k, rel_time=lag_max + 1, binned=True)
            if bin_seen[k]:
                col_bin[k] = register(col)
            else:
                dropped.append((col, "empty"))

    p = dpanel.covariates.shape[2]
    flat_x = dpanel.covariates.reshape(rows, p)
    cov_cols = []  # (column position, covariate j, type or None)
    for k in ([None] if not spec.type_specific_slopes else range(1, k_count + 1)):
        for j in range(p):
            vals_exist = (
                np.any(flat_x[:, j] != 0.0)
                if k is None
                else np.any(flat_x[row_labels == k, j] != 0.0)
            )
            col = Column("x", type_label=k, covariate=j)
            if vals_exist:
                cov_cols.append((register(col), j, k))
            else:
                dropped.append((col, "empty"))

    values = np.zeros((rows, len(columns)))
    target = col_timefe[row_labels, period_idx]
    ok = target >= 0  # the mean-diff normalization column is absent
    values[np.nonzero(ok)[0], target[ok]] = 1.0
    if n_leads:
        rsel = np.nonzero(lead_mask)[0]
        owner = np.full(rsel.size, SHARED) if spec.shared_leads else row_labels[rsel]
        tcol = col_lead[owner, row_rel[rsel] - lead_lo]
        values[rsel, tcol] = 1.0
    rsel = np.nonzero(lag_mask)[0]
    if rsel.size:
        values[rsel, col_lag[row_labels[rsel], row_rel[rsel]]] = 1.0
    rsel = np.nonzero(bin_mask)[0]
    if rsel.size:
        values[rsel, col_bin[row_labels[rsel]]] = 1.0
    for pos, j, k in cov_cols:
        if k is None:
            values[:, pos] = flat_x[:, j]
        else:
            mask = row_labels == k
            values[mask, pos] = flat_x[mask, j]

    populations = np.count_nonzero(values, axis=0).astype(int)

    if spec.mode == MEAN_DIFF:
        # demean every regressor within unit, matching the demeaned outcome
        shaped = values.reshape(n, n_periods, -1)
        shaped = shaped - shaped.mean(axis=1, keepdims=True)
        values = shaped.reshape(rows, -1)
        scale = np.abs(values).max() if values.size else 0.0
        norms = np.abs(values).max(axis=0) if values.size else np.zeros(0)
        keep = norms > 1e-12 * max(scale, 1.0)
        if not keep.all():
            for j in np.nonzero(~keep)[0]:
                dropped.append((columns[j], "empty"))
            columns = [c for j, c in enumerate(columns) if keep[j]]
            values = values[:, keep]
            populations = populations[keep]

    return DesignMatrix(values, columns, dropped, row_units, row_periods, populations, spec)


def column_population(design: DesignMatrix) -> list:
    """Per-column raw nonzero row counts, for diagnostics."""
    return list(zip(design.names, design.populations.tolist()))


def timing_diagnostics(dpanel: DifferencedPanel, assignment: TypeAssignment) -> dict:
    """Distinct treatment timings per type (never-treated counts as one).

    Types with fewer than two timings cannot separate their time effects
    from their treatment effects; callers surface this as a warning.
    """
    src = dpanel.source
    out = {}
    for k in range(1, assignment.n_types + 1):
        members = assignment.labels == k
        timings = set(src.event_time[members & src.treated].tolist())
        if np.any(members & ~src.treated):
            timings.add(None)
        out[k] = len(timings)
    return out
