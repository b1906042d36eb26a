"""Iterative K-means classification of units into latent types.

Each restart alternates two exact steps from a random type assignment:

1. OLS of the transformed outcome on type-by-period dummies, truncated
   lead / binned lag treatment indicators, and covariates;
2. per-unit reassignment to the type whose fitted profile leaves the
   smallest residual sum of squares.

Both steps weakly reduce the objective (mean squared residual over all
cells), so every iteration trace is non-increasing; the loop stops when
the assignment no longer changes.  Coefficients a reassignment needs but
the current regression could not estimate (a type missing some relative
time) are carried forward from the previous iteration, starting at zero.

Local minima are escaped by independent seeded restarts; the winner is
the minimum-objective non-degenerate restart, relabeled into canonical
order so results are comparable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .design import DesignMatrix, DesignSpec, build_design, max_individual_lag
from .errors import ConfigError, EstimationError
from .lsq import LsqSolution, solve
from .panel import TypeAssignment
from .transform import MEAN_DIFF, DifferencedPanel


@dataclass(frozen=True)
class FitConfig:
    spec: DesignSpec
    restarts: int = 50
    max_iterations: int = 100
    rng_seed: int = 0
    tolerance: float = 0.0

    def __post_init__(self):
        if self.restarts < 1 or self.max_iterations < 1:
            raise ConfigError("restarts and max_iterations must be >= 1")


@dataclass(frozen=True)
class EstimateSet:
    """Coefficient arrays addressed by (type, period) and (type, relative time).

    Values are exactly the final regression's coefficients; entries whose
    column was not estimated (empty cell or rank-dropped) hold zero with
    ``*_estimated`` False, so re-evaluating the objective from this set
    reproduces the regression's fitted values.  Shared-lead coefficients
    are replicated across type rows.
    """

    spec: DesignSpec
    periods: np.ndarray                 # design period axis
    time_effects: np.ndarray            # (K, P)
    time_estimated: np.ndarray
    lead_rel_times: np.ndarray          # r values -l..-2 (possibly empty)
    lead_effects: np.ndarray            # (K, L)
    lead_estimated: np.ndarray
    lag_effects: np.ndarray             # (K, lag_max+1), r = 0..lag_max
    lag_estimated: np.ndarray
    bin_effects: np.ndarray             # (K,)
    bin_estimated: np.ndarray
    covariate_coefs: np.ndarray         # (K, p); rows equal when slopes are pooled
    covariate_estimated: np.ndarray

    @property
    def n_types(self) -> int:
        return self.time_effects.shape[0]

    def theta(self) -> np.ndarray:
        """Pooled covariate slope vector (first row when not type-specific)."""
        return self.covariate_coefs[0]


def _empty_estimates(dpanel: DifferencedPanel, spec: DesignSpec) -> EstimateSet:
    k, p_count = spec.n_types, dpanel.covariates.shape[2]
    periods = dpanel.periods
    lead_rs = np.arange(-spec.lead_window, -1) if spec.lead_window >= 2 else np.arange(0)
    lag_max = max_individual_lag(dpanel, spec)
    shape = lambda *s: (np.zeros(s), np.zeros(s, dtype=bool))
    te, tm = shape(k, len(periods))
    le, lm = shape(k, len(lead_rs))
    ge, gm = shape(k, lag_max + 1)
    be, bm = shape(k)
    ce, cm = shape(k, p_count)
    return EstimateSet(spec, periods, te, tm, lead_rs, le, lm, ge, gm, be, bm, ce, cm)


def estimates_from_solution(dpanel: DifferencedPanel, design: DesignMatrix,
                            solution: LsqSolution, spec: DesignSpec) -> EstimateSet:
    est = _empty_estimates(dpanel, spec)
    values = solution.coefficients
    kept = set(solution.kept.tolist())
    period_pos = {int(t): j for j, t in enumerate(est.periods)}
    lead_pos = {int(r): j for j, r in enumerate(est.lead_rel_times)}
    coef_iter = iter(values)
    for idx, col in enumerate(design.columns):
        if idx not in kept:
            continue
        v = float(next(coef_iter))
        ks = range(est.n_types) if col.type_label in (0, None) else [col.type_label - 1]
        if col.kind == "timefe":
            j = period_pos[col.period]
            est.time_effects[col.type_label - 1, j] = v
            est.time_estimated[col.type_label - 1, j] = True
        elif col.kind == "treat":
            if col.binned:
                for kk in ks:
                    est.bin_effects[kk] = v
                    est.bin_estimated[kk] = True
            elif col.rel_time < 0:
                j = lead_pos[col.rel_time]
                for kk in ks:
                    est.lead_effects[kk, j] = v
                    est.lead_estimated[kk, j] = True
            else:
                for kk in ks:
                    est.lag_effects[kk, col.rel_time] = v
                    est.lag_estimated[kk, col.rel_time] = True
        else:
            for kk in ks:
                est.covariate_coefs[kk, col.covariate] = v
                est.covariate_estimated[kk, col.covariate] = True
    return est


def _merge_carry(carry: EstimateSet, new: EstimateSet) -> EstimateSet:
    """Keep previous values wherever the new solve did not estimate a column."""
    pick = lambda old, val, mask: np.where(mask, val, old)
    return replace(
        new,
        time_effects=pick(carry.time_effects, new.time_effects, new.time_estimated),
        lead_effects=pick(carry.lead_effects, new.lead_effects, new.lead_estimated),
        lag_effects=pick(carry.lag_effects, new.lag_effects, new.lag_estimated),
        bin_effects=pick(carry.bin_effects, new.bin_effects, new.bin_estimated),
        covariate_coefs=pick(carry.covariate_coefs, new.covariate_coefs, new.covariate_estimated),
    )


def type_profiles(estimates: EstimateSet, timing) -> np.ndarray:
    """Fitted (type, period) profile for one treatment timing (None = never).

    Covers the time-effect and treatment-effect parts; covariates are
    handled separately.  Under mean differencing the profile is demeaned
    over periods, mirroring the within-unit demeaning of the regressors.
    """
    periods = estimates.periods
    prof = estimates.time_effects.copy()
    if timing is not None:
        rel = periods - timing
        for j, r in enumerate(estimates.lead_rel_times):
            hit = rel == r
            if hit.any():
                prof[:, hit] += estimates.lead_effects[:, [j]]
        lag_max = estimates.lag_effects.shape[1] - 1
        for r in range(lag_max + 1):
            hit = rel == r
            if hit.any():
                prof[:, hit] += estimates.lag_effects[:, [r]]
        if estimates.spec.lag_bin is not None:
            hit = rel >= lag_max + 1
            if hit.any():
                prof[:, hit] += estimates.bin_effects[:, None]
    if estimates.spec.mode == MEAN_DIFF:
        prof = prof - prof.mean(axis=1, keepdims=True)
    return prof


def _unit_rss_by_type(dpanel: DifferencedPanel, estimates: EstimateSet) -> np.ndarray:
    """(N, K) residual sum of squares of each unit against each type's profile."""
    src = dpanel.source
    n, k_count = dpanel.n_units, estimates.n_types
    timings = [None] + sorted(set(src.event_time[src.treated].tolist()))
    key_of_unit = np.zeros(n, dtype=int)
    for i in range(n):
        key_of_unit[i] = (
            timings.index(int(src.event_time[i])) if src.treated[i] else 0
        )
    profiles = np.stack([type_profiles(estimates, e) for e in timings])  # (keys, K, P)

    rss = np.empty((n, k_count))
    for k in range(k_count):
        resid = dpanel.outcome - dpanel.covariates @ estimates.covariate_coefs[k]
        resid = resid - profiles[key_of_unit, k, :]
        rss[:, k] = np.einsum("ij,ij->i", resid, resid)
    return rss


def objective(dpanel: DifferencedPanel, assignment: TypeAssignment,
              estimates: EstimateSet) -> float:
    """Mean squared residual over all (unit, period) cells."""
    if len(assignment.labels) != dpanel.n_units:
        raise ConfigError("assignment does not match panel")
    rss = _unit_rss_by_type(dpanel, estimates)
    per_unit = rss[np.arange(dpanel.n_units), assignment.labels - 1]
    return float(per_unit.sum() / (dpanel.n_units * dpanel.n_periods))


def assign_types(dpanel: DifferencedPanel, estimates: EstimateSet) -> TypeAssignment:
    """Reassign every unit to its minimum-RSS type; ties go to the lowest label."""
    rss = _unit_rss_by_type(dpanel, estimates)
    return TypeAssignment(np.argmin(rss, axis=1) + 1, estimates.n_types)


@dataclass(frozen=True)
class FitResult:
    assignment: TypeAssignment
    estimates: EstimateSet
    objective: float
    trace: list                       # per-iteration (objective, n_changed)
    stopped: str                      # converged | max_iterations | cycle | numerical | degenerate
    n_iterations: int
    degenerate: bool = False
    restart_summaries: list = field(default_factory=list)


def fit_once(dpanel: DifferencedPanel, init: TypeAssignment, config: FitConfig) -> FitResult:
    """Run the alternation from one initial assignment until it stabilizes."""
    if not init.is_valid():
        raise ConfigError("initial assignment leaves a type empty")
    spec = config.spec
    y = dpanel.outcome.reshape(-1)
    labels = init.labels.copy()
    carry = _empty_estimates(dpanel, spec)
    n_rows = dpanel.n_units * dpanel.n_periods

    trace = []
    state = None  # (assignment, estimates, objective)
    n_changed = 0
    stopped = "max_iterations"
    seen = {labels.tobytes()}

    for _ in range(config.max_iterations):
        assignment = TypeAssignment(labels, spec.n_types)
        design = build_design(dpanel, assignment, spec)
        solution = solve(design, y)
        est = estimates_from_solution(dpanel, design, solution, spec)
        obj = solution.rss / n_rows

        if state is not None and obj > state[2]:
            # floating-point uptick: keep the best state seen so far
            stopped = "numerical"
            break
        if state is not None and config.tolerance > 0 and state[2] - obj < config.tolerance:
            state = (assignment, est, obj)
            trace.append((obj, n_changed))
            stopped = "tolerance"
            break
        state = (assignment, est, obj)
        trace.append((obj, n_changed))

        carry = _merge_carry(carry, est)
        new_labels = assign_types(dpanel, carry).labels
        n_changed = int(np.sum(new_labels != labels))
        if n_changed == 0:
            stopped = "converged"
            break
        if not TypeAssignment(new_labels, spec.n_types).is_valid():
            stopped = "degenerate"
            break
        key = new_labels.tobytes()
        if key in seen:
            stopped = "cycle"
            break
        seen.add(key)
        labels = new_labels

    assignment, est, obj = state
    return FitResult(
        assignment, est, obj, trace, stopped, len(trace),
        degenerate=(stopped == "degenerate"),
    )


def random_assignment(unit_ids, n_types: int, rng: np.random.Generator) -> TypeAssignment:
    """Stratified uniform draw with every type used at least once.

    The draw is made in unit-id order, so a permutation of the panel's
    rows yields the same id -> type mapping.
    """
    n = len(unit_ids)
    if n < n_types:
        raise ConfigError("fewer units than types")
    order = np.argsort(np.asarray(unit_ids, dtype=object))
    labels_sorted = np.empty(n, dtype=int)
    perm = rng.permutation(n)
    labels_sorted[perm[:n_types]] = np.arange(1, n_types + 1)
    labels_sorted[perm[n_types:]] = rng.integers(1, n_types + 1, size=n - n_types)
    labels = np.empty(n, dtype=int)
    labels[order] = labels_sorted
    return TypeAssignment(labels, n_types)


def fit(dpanel: DifferencedPanel, config: FitConfig) -> FitResult:
    """Multi-restart search: best local minimum, canonically relabeled.

    Deterministic given ``config.rng_seed``: each restart derives its own
    seed, and ties in the final objective resolve to the earliest restart.
    """
    seeds = np.random.SeedSequence(config.rng_seed).spawn(config.restarts)
    results, summaries = [], []
    units = dpanel.source.units
    for j in range(config.restarts):
        rng = np.random.default_rng(seeds[j])
        init = random_assignment(units, config.spec.n_types, rng)
        res = fit_once(dpanel, init, config)
        results.append(res)
        summaries.append({
            "restart": j,
            "objective": res.objective,
            "iterations": res.n_iterations,
            "stopped": res.stopped,
            "degenerate": res.degenerate,
            "trace": [obj for obj, _ in res.trace],
        })
    objectives = np.array(
        [r.objective if not r.degenerate else np.inf for r in results]
    )
    if not np.isfinite(objectives).any():
        raise EstimationError("all restarts degenerate: every run emptied a type")
    best = results[int(np.argmin(objectives))]
    best = replace(best, restart_summaries=summaries)
    return canonicalize(best)


def canonicalize(result: FitResult) -> FitResult:
    """Relabel types in increasing order of mean pre-treatment time effect.

    Ties fall back to the smallest original label.  The objective and all
    fitted values are invariant to this permutation.
    """
    est = result.estimates
    k_count = est.n_types
    pre = est.periods < 0
    keys = (
        est.time_effects[:, pre].mean(axis=1) if pre.any()
        else np.zeros(k_count)
    )
    order = np.lexsort((np.arange(k_count), keys))  # old index per new label
    if np.array_equal(order, np.arange(k_count)):
        return result
    relabel = np.empty(k_count, dtype=int)
    relabel[order] = np.arange(1, k_count + 1)      # old index -> new label

    new_labels = relabel[result.assignment.labels - 1]
    new_est = replace(
        est,
        time_effects=est.time_effects[order],
        time_estimated=est.time_estimated[order],
        lead_effects=est.lead_effects[order],
        lead_estimated=est.lead_estimated[order],
        lag_effects=est.lag_effects[order],
        lag_estimated=est.lag_estimated[order],
        bin_effects=est.bin_effects[order],
        bin_estimated=est.bin_estimated[order],
        covariate_coefs=est.covariate_coefs[order],
        covariate_estimated=est.covariate_estimated[order],
    )
    return replace(
        result,
        assignment=TypeAssignment(new_labels, k_count),
        estimates=new_est,
    )
