"""Removal of unit fixed-effects by first- or mean-differencing.

First-differencing is the default and drops the first period; it turns a
unit intercept into an exact zero.  Mean-differencing subtracts each
unit's time-mean instead and keeps all T+1 periods: it preserves level
contrasts between type profiles that first differences would flatten
(e.g. a one-time structural break in otherwise constant time effects),
at the price of requiring strict exogeneity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .panel import Panel, check_panel

FIRST_DIFF = "first-diff"
MEAN_DIFF = "mean-diff"
MODES = (FIRST_DIFF, MEAN_DIFF)


@dataclass(frozen=True)
class DifferencedPanel:
    """Outcome/covariates with unit fixed-effects removed.

    ``periods`` is the surviving time axis: times[1:] under first
    differencing, all times under mean differencing.  ``source`` keeps the
    originating panel for treatment timings and unit ids.
    """

    mode: str
    outcome: np.ndarray      # (N, P)
    covariates: np.ndarray   # (N, P, p)
    periods: np.ndarray
    source: Panel

    @property
    def n_units(self) -> int:
        return self.outcome.shape[0]

    @property
    def n_periods(self) -> int:
        return self.outcome.shape[1]


def first_difference(panel: Panel) -> DifferencedPanel:
    """Y?[i][t] = Y[i][t] - Y[i][t-1]; covariates transformed identically."""
    check_panel(panel)
    if panel.n_periods < 2:
        raise ConfigError("first differencing needs at least two periods")
    dy = np.diff(panel.outcome, axis=1)
    dx = np.diff(panel.covariates, axis=1)
    return DifferencedPanel(FIRST_DIFF, dy, dx, panel.times[1:].copy(), panel)


def mean_difference(panel: Panel) -> DifferencedPanel:
    """Subtract each unit's time-mean from the outcome and every covariate."""
    check_panel(panel)
    dy = panel.outcome - panel.outcome.mean(axis=1, keepdims=True)
    dx = panel.covariates - panel.covariates.mean(axis=1, keepdims=True)
    return DifferencedPanel(MEAN_DIFF, dy, dx, panel.times.copy(), panel)


def difference(panel: Panel, mode: str) -> DifferencedPanel:
    if mode == FIRST_DIFF:
        return first_difference(panel)
    if mode == MEAN_DIFF:
        return mean_difference(panel)
    raise ConfigError(f"unknown differencing mode '{mode}' (expected one of {MODES})")
