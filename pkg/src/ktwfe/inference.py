"""Inference on a finished fit.

Covariances are unit-clustered sandwiches over the surviving design
columns, which allows the serial correlation that differencing induces
in the errors.  Cumulative treatment effects under first differencing
are partial sums of the differenced coefficients; their standard errors
are the corresponding 1' V 1 quadratic forms of the clustered covariance
sub-block (equivalent, by Frisch-Waugh-Lovell, to residualizing the
treatment indicators explicitly).  Classification uncertainty is ignored
throughout: types are treated as known once estimated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from .design import SHARED, Column, DesignMatrix
from .errors import ConfigError
from .estimator import EstimateSet
from .panel import Panel, TypeAssignment
from .transform import MEAN_DIFF


@dataclass(frozen=True)
class CovarianceEstimate:
    vcov: np.ndarray
    columns: list                     # surviving Column descriptors
    bread: np.ndarray
    meat: np.ndarray
    n_clusters: int
    cluster_dimension: str = "unit"

    def index_of(self) -> dict:
        return {c.name: j for j, c in enumerate(self.columns)}

    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov))


def cluster_robust_vcov(design: DesignMatrix, residuals, clusters=None,
                        kept=None) -> CovarianceEstimate:
    """Sandwich (X'X)^-1 (sum_g X_g'u_g u_g'X_g) (X'X)^-1, clustered by unit.

    ``kept`` restricts to the least-squares survivors; ``clusters``
    defaults to the design's unit index per row.
    """
    u = np.asarray(residuals, dtype=float)
    if clusters is None:
        clusters = design.row_units
    clusters = np.asarray(clusters)
    if kept is None:
        kept = np.arange(len(design.columns))
    x = design.values[:, kept]
    columns = [design.columns[j] for j in kept]

    uniq, inv = np.unique(clusters, return_inverse=True)
    if uniq.size < 2:
        raise ConfigError("need at least two clusters for a clustered covariance")
    scores = x * u[:, None]
    sums = np.zeros((uniq.size, x.shape[1]))
    np.add.at(sums, inv, scores)
    meat = sums.T @ sums
    bread = np.linalg.inv(x.T @ x)
    vcov = bread @ meat @ bread
    vcov = (vcov + vcov.T) / 2
    return CovarianceEstimate(vcov, columns, bread, meat, int(uniq.size))


@dataclass(frozen=True)
class EffectReport:
    """Treatment-effect and time-effect tables ready for CSV emission.

    ``effects`` rows: type ('shared' for shared leads), rel_time (int, or
    '>=b' for the pooled lag bin), the per-period coefficient, cumulative
    effect, and its standard error.  ``timefe`` rows: the type-specific
    time-effect path; a level path cumulated from zero at the first
    period under first differencing, demeaned levels otherwise.
    """

    effects: pd.DataFrame
    timefe: pd.DataFrame
    notes: list = field(default_factory=list)


def _quad_se(vcov: np.ndarray, positions: list) -> float:
    sub = vcov[np.ix_(positions, positions)]
    return float(np.sqrt(max(sub.sum(), 0.0)))


def cumulative_effects(estimates: EstimateSet, vcov: CovarianceEstimate) -> EffectReport:
    """Reconstruct cumulative effects and time-effect level paths.

    Under first differencing lag coefficients are summed from r = 0
    onward; a hole in the estimated lag sequence truncates the summation
    there (noted).  Mean differencing reports level coefficients as-is.
    """
    spec = estimates.spec
    first_diff = spec.mode != MEAN_DIFF
    pos = vcov.index_of()
    notes = []
    rows = []
    lag_max = estimates.lag_effects.shape[1] - 1

    def treat_name(k, r, binned=False):
        return Column("treat", type_label=k, rel_time=r, binned=binned).name

    def lead_row(owner, k_index, j, r):
        name = treat_name(SHARED if owner == "shared" else owner, int(r))
        if name not in pos:
            return
        coef = estimates.lead_effects[k_index, j]
        se = float(np.sqrt(vcov.vcov[pos[name], pos[name]]))
        if first_diff:
            rows.append((owner, int(r), coef, np.nan, se))
        else:
            rows.append((owner, int(r), np.nan, coef, se))

    if spec.shared_leads:
        for j, r in enumerate(estimates.lead_rel_times):
            lead_row("shared", 0, j, r)

    for k in range(1, estimates.n_types + 1):
        if not spec.shared_leads:
            for j, r in enumerate(estimates.lead_rel_times):
                lead_row(k, k - 1, j, r)
        rows.append((k, -1, 0.0, 0.0, 0.0))  # omitted reference anchor
        running, positions = 0.0, []
        for r in range(lag_max + 1):
            name = treat_name(k, r)
            if name not in pos:
                later = [rr for rr in range(r + 1, lag_max + 1) if treat_name(k, rr) in pos]
                if later:
                    notes.append(
                        f"type {k}: lag r={r} not estimated; cumulative path truncated there"
                    )
                break
            coef = estimates.lag_effects[k - 1, r]
            if first_diff:
                running += coef
                positions.append(pos[name])
                rows.append((k, r, coef, running, _quad_se(vcov.vcov, positions)))
            else:
                se = float(np.sqrt(vcov.vcov[pos[name], pos[name]]))
                rows.append((k, r, np.nan, coef, se))
        if spec.lag_bin is not None:
            name = treat_name(k, lag_max + 1, binned=True)
            if name in pos:
                coef = estimates.bin_effects[k - 1]
                se = float(np.sqrt(vcov.vcov[pos[name], pos[name]]))
                rows.append(
                    (k, f">={lag_max + 1}", coef if first_diff else np.nan,
                     np.nan if first_diff else coef, se)
                )

    effects = pd.DataFrame(rows, columns=["type", "rel_time", "coef_diff", "coef_cum", "se"])

    fe_rows = []
    for k in range(1, estimates.n_types + 1):
        if first_diff:
            anchor = int(estimates.periods[0]) - 1
            fe_rows.append((k, anchor, 0.0))
            level = 0.0
            for j, t in enumerate(estimates.periods):
                level += estimates.time_effects[k - 1, j]
                fe_rows.append((k, int(t), level))
        else:
            path = estimates.time_effects[k - 1]
            path = path - path.mean()
            for j, t in enumerate(estimates.periods):
                fe_rows.append((k, int(t), float(path[j])))
    timefe = pd.DataFrame(fe_rows, columns=["type", "period", "level"])
    return EffectReport(effects, timefe, notes)


def het_effect_r0(panel: Panel, assignment: TypeAssignment, type_label: int,
                  include_never_treated: bool = True):
    """Difference in mean outcome change over t=0..1 between units treated at
    t=0 and units not yet treated, within one type.

    Robust to unit-level treatment-effect heterogeneity, unlike the pooled
    within-type regression coefficient.  Returns (estimate, standard error)
    with an unequal-variance two-sample standard error.
    """
    times = panel.times
    where0 = np.nonzero(times == 0)[0]
    where1 = np.nonzero(times == 1)[0]
    if where0.size == 0 or where1.size == 0:
        raise ConfigError("panel must contain periods 0 and 1 (reindexed)")
    change = panel.outcome[:, where1[0]] - panel.outcome[:, where0[0]]

    members = assignment.labels == type_label
    treated_now = members & panel.treated & (panel.event_time == 0)
    later = members & panel.treated & (panel.event_time > 0)
    if include_never_treated:
        later = later | (members & ~panel.treated)
    n1, n2 = int(treated_now.sum()), int(later.sum())
    if n1 == 0 or n2 == 0:
        raise ConfigError(
            f"type {type_label}: need units treated at 0 and a not-yet-treated comparison group"
        )
    a, b = change[treated_now], change[later]
    estimate = float(a.mean() - b.mean())
    var = (a.var(ddof=1) / n1 if n1 > 1 else np.nan) + (b.var(ddof=1) / n2 if n2 > 1 else np.nan)
    return estimate, float(np.sqrt(var))


@dataclass(frozen=True)
class BalanceResult:
    table: pd.DataFrame
    joint: pd.DataFrame
    notes: list = field(default_factory=list)


def default_balance_variables(panel: Panel) -> dict:
    """Pre-treatment unit means of the outcome and each covariate."""
    pre = panel.times < 0
    out = {"outcome_pre_mean": panel.outcome[:, pre].mean(axis=1)}
    for p in range(panel.n_covariates):
        out[f"x{p}_pre_mean"] = panel.covariates[:, pre, p].mean(axis=1)
    return out


def balancedness_test(panel: Panel, assignment: TypeAssignment, variables: dict) -> BalanceResult:
    """Compare unit-level variable means across estimated types.

    Produces per-variable means, SDs, and mean-difference standard errors
    per type pair, plus a joint Wald chi-square that the whole
    mean-difference vector is zero.  Zero-variance variables are dropped
    from the joint statistic (noted), keeping the table row.
    """
    if not variables:
        raise ConfigError("no balance variables supplied")
    names = list(variables)
    mat = np.column_stack([np.asarray(variables[v], dtype=float) for v in names])
    if mat.shape[0] != panel.n_units:
        raise ConfigError("balance variables must have one value per unit")

    pairs = [
        (a, b)
        for a in range(1, assignment.n_types + 1)
        for b in range(a + 1, assignment.n_types + 1)
    ]
    rows, joint_rows, notes = [], [], []
    for a, b in pairs:
        ga, gb = assignment.labels == a, assignment.labels == b
        na, nb = int(ga.sum()), int(gb.sum())
        usable = []
        for j, v in enumerate(names):
            xa, xb = mat[ga, j], mat[gb, j]
            va = xa.var(ddof=1) if na > 1 else 0.0
            vb = xb.var(ddof=1) if nb > 1 else 0.0
            se = np.sqrt(va / na + vb / nb)
            rows.append((v, f"{a}-{b}", xa.mean(), xb.mean(),
                         np.sqrt(va), np.sqrt(vb), xa.mean() - xb.mean(), se))
            if va + vb > 0:
                usable.append(j)
            else:
                notes.append(f"pair {a}-{b}: '{v}' has zero variance, dropped from joint test")
        if usable and na > 1 and nb > 1:
            sub_a, sub_b = mat[np.ix_(ga, usable)], mat[np.ix_(gb, usable)]
            diff = sub_a.mean(axis=0) - sub_b.mean(axis=0)
            cov = np.cov(sub_a, rowvar=False, ddof=1) / na + np.cov(sub_b, rowvar=False, ddof=1) / nb
            cov = np.atleast_2d(cov)
            stat = float(diff @ np.linalg.pinv(cov) @ diff)
            df = len(usable)
            pval = float(stats.chi2.sf(stat, df))
        else:
            stat, df, pval = np.nan, 0, np.nan
            notes.append(f"pair {a}-{b}: joint test skipped (too few units or no usable variables)")
        joint_rows.append((f"{a}-{b}", na, nb, stat, df, pval))

    table = pd.DataFrame(
        rows, columns=["variable", "pair", "mean_a", "mean_b", "sd_a", "sd_b", "diff", "se_diff"]
    )
    joint = pd.DataFrame(
        joint_rows, columns=["pair", "n_a", "n_b", "wald", "df", "p_value"]
    )
    return BalanceResult(table, joint, notes)
