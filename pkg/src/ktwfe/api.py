"""scikit-learn style front door for the typed event-study estimator.

``TypedEventStudy`` accepts either a :class:`~ktwfe.panel.Panel` or a
long-format DataFrame (column roles declared in the constructor), and
follows the usual conventions: all configuration lives in ``__init__``,
``fit`` returns ``self``, fitted state ends in a trailing underscore, and
``get_params``/``set_params`` come from ``BaseEstimator`` so the object
clones and composes with the wider ecosystem.
"""

from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import inference
from .design import DesignSpec, build_design, timing_diagnostics
from .errors import ConfigError
from .estimator import FitConfig, assign_types, fit
from .lsq import solve
from .panel import Panel, check_panel, panel_from_long, reindex_times
from .transform import FIRST_DIFF, difference


class TypedEventStudy(BaseEstimator):
    """Event-study regression with latent unit types found by K-means.

    Parameters
    ----------
    n_types : int
        Number of latent types K.
    lead_window : int
        Pre-treatment leads with free coefficients (r = -lead_window..-2).
    lag_bin : int or None
        Highest individually-estimated lag; later lags pool into one bin.
    shared_leads : bool
        Share lead coefficients across types.
    type_specific_slopes : bool
        One covariate slope vector per type.
    mode : {"first-diff", "mean-diff"}
        Unit fixed-effect removal.  Mean differencing needs strict
        exogeneity of the errors; prefer it when type profiles differ in
        level but hardly in first differences.
    restarts, max_iterations, tolerance, random_state
        Multi-restart search controls; results are deterministic given
        ``random_state``.
    unit_col, time_col, outcome_col, treatment_col, covariate_cols
        Column roles used when ``fit`` receives a long-format DataFrame.
        An empty treatment cell marks a never-treated unit.

    Attributes (after ``fit``)
    ----------
    labels_ : ndarray of int
        Canonical type label per unit, in panel unit order.
    objective_ : float
        Mean squared residual of the winning restart.
    effects_ : EffectReport
        Cumulative treatment effects and time-effect paths with
        cluster-robust standard errors.
    """

    def __init__(self, n_types=2, lead_window=0, lag_bin=None, shared_leads=False,
                 type_specific_slopes=False, mode=FIRST_DIFF, restarts=50,
                 max_iterations=100, tolerance=0.0, random_state=0,
                 unit_col="unit", time_col="time", outcome_col="outcome",
                 treatment_col="treat_time", covariate_cols=()):
        self.n_types = n_types
        self.lead_window = lead_window
        self.lag_bin = lag_bin
        self.shared_leads = shared_leads
        self.type_specific_slopes = type_specific_slopes
        self.mode = mode
        self.restarts = restarts
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.random_state = random_state
        self.unit_col = unit_col
        self.time_col = time_col
        self.outcome_col = outcome_col
        self.treatment_col = treatment_col
        self.covariate_cols = covariate_cols

    # -- input handling ----------------------------------------------------

    def _as_panel(self, X) -> Panel:
        if isinstance(X, Panel):
            panel = X
        elif isinstance(X, pd.DataFrame):
            panel = panel_from_long(
                X, self.unit_col, self.time_col, self.outcome_col,
                treatment_col=self.treatment_col,
                covariate_cols=tuple(self.covariate_cols),
            )
        else:
            raise ConfigError("X must be a Panel or a long-format DataFrame")
        check_panel(panel)
        return panel

    def _prepare(self, X):
        panel = self._as_panel(X)
        origin = int(panel.event_time[panel.treated].min())
        panel = reindex_times(panel) if not panel.is_reindexed else panel
        return panel, origin, difference(panel, self.mode)

    def _spec(self) -> DesignSpec:
        return DesignSpec(
            n_types=self.n_types,
            lead_window=self.lead_window,
            lag_bin=self.lag_bin,
            shared_leads=self.shared_leads,
            type_specific_slopes=self.type_specific_slopes,
            mode=self.mode,
        )

    def _check_fitted(self):
        if not hasattr(self, "labels_"):
            raise NotFittedError("this TypedEventStudy instance is not fitted yet")

    # -- estimation --------------------------------------------------------

    def fit(self, X, y=None):
        """Run the multi-restart search and post-fit inference."""
        panel, origin, dpanel = self._prepare(X)
        config = FitConfig(
            spec=self._spec(),
            restarts=self.restarts,
            max_iterations=self.max_iterations,
            rng_seed=self.random_state,
            tolerance=self.tolerance,
        )
        result = fit(dpanel, config)

        design = build_design(dpanel, result.assignment, config.spec)
        solution = solve(design, dpanel.outcome.reshape(-1))
        vcov = inference.cluster_robust_vcov(design, solution.residuals, kept=solution.kept)

        self.panel_ = panel
        self.calendar_origin_ = origin
        self.dpanel_ = dpanel
        self.result_ = result
        self.assignment_ = result.assignment
        self.labels_ = result.assignment.labels.copy()
        self.objective_ = result.objective
        self.estimates_ = result.estimates
        self.trace_ = result.trace
        self.n_iter_ = result.n_iterations
        self.restart_summaries_ = result.restart_summaries
        self.design_ = design
        self.solution_ = solution
        self.vcov_ = vcov
        self.effects_ = inference.cumulative_effects(result.estimates, vcov)
        self.dropped_columns_ = [(c.name, reason) for c, reason in design.dropped] + [
            (design.columns[j].name, "rank") for j in solution.rank_dropped
        ]
        timings = timing_diagnostics(dpanel, result.assignment)
        self.timing_counts_ = timings
        self.warnings_ = [
            f"type {k} has a single treatment timing: its treatment effects are "
            "not separable from its time effects"
            for k, c in timings.items() if c < 2
        ]
        sizes = result.assignment.counts()
        self.min_type_size_ = int(sizes.min())
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_

    def predict(self, X):
        """Assign each unit of ``X`` to its minimum-residual fitted type."""
        self._check_fitted()
        panel = self._as_panel(X)
        shifted = panel if panel.times[0] == self.panel_.times[0] else Panel(
            panel.units, panel.times - self.calendar_origin_, panel.outcome,
            panel.covariates, np.where(panel.treated, panel.event_time - self.calendar_origin_, 0),
            panel.treated,
        )
        if not np.array_equal(shifted.times, self.panel_.times):
            raise ConfigError("panel periods do not match the fitted panel")
        dpanel = difference(shifted, self.mode)
        return assign_types(dpanel, self.estimates_).labels

    def score(self, X, y=None):
        """Negative mean squared residual under minimum-RSS assignment."""
        self._check_fitted()
        from .estimator import _unit_rss_by_type

        panel = self._as_panel(X)
        dpanel = difference(panel if panel.is_reindexed else reindex_times(panel), self.mode)
        rss = _unit_rss_by_type(dpanel, self.estimates_)
        best = rss.min(axis=1).sum()
        return -float(best / (dpanel.n_units * dpanel.n_periods))

    # -- post-fit analyses ---------------------------------------------------

    def het_effect(self, type_label: int, include_never_treated: bool = True):
        """Heterogeneity-robust effect at relative time 0 for one type."""
        self._check_fitted()
        return inference.het_effect_r0(
            self.panel_, self.assignment_, type_label,
            include_never_treated=include_never_treated,
        )

    def balance(self, variables: dict | None = None):
        """Covariate balance across estimated types (pre-treatment means by default)."""
        self._check_fitted()
        if variables is None:
            variables = inference.default_balance_variables(self.panel_)
        return inference.balancedness_test(self.panel_, self.assignment_, variables)
