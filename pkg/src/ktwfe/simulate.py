"""Data-generating processes for Monte Carlo validation.

Outcomes are assembled additively from a unit intercept, a type-specific
time-effect path, type-specific dynamic treatment effects (levels, zero
before treatment), covariates, and an error process.  Treatment timing is
drawn conditional on the latent type only, so timing is unconfounded
given the type by construction.  Errors may be drawn iid, MA(1), or
AR(1) in levels; first differencing then induces the usual short-memory
serial correlation on its own.

Five named presets cover the acceptance scenarios: well-separated linear
trends, a structural break in otherwise constant time effects, weak
separation, selection-on-type (timing correlated with trend type), and
unit-level treatment-effect heterogeneity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError
from .panel import Panel, TypeAssignment

ERROR_PROCESSES = ("iid", "ma1", "ar1")


@dataclass(frozen=True)
class DgpSpec:
    """Parameters of one simulated panel.

    ``delta_profiles`` holds time-effect levels per (type, period) over
    the T0+T1+1 internal periods; ``beta_profiles`` holds treatment-effect
    levels per (type, relative time 0..T1-1).  ``timing_probs`` maps each
    type to a list of (timing, probability) pairs where timing ``None``
    means never treated.  ``unit_beta_sd`` adds a mean-zero per-unit shift
    to every post-treatment effect level; ``late_beta_scale`` rescales the
    effect profile for units treated at or after ``late_timing_threshold``
    (cohort-correlated heterogeneity).
    """

    n_units: int
    t0: int
    t1: int
    n_types: int
    type_probs: tuple
    delta_profiles: np.ndarray
    beta_profiles: np.ndarray
    timing_probs: dict
    n_covariates: int = 0
    theta: np.ndarray = None
    alpha_sd: float = 1.0
    noise_sd: float = 0.5
    unit_beta_sd: float = 0.0
    late_beta_scale: float = 1.0
    late_timing_threshold: int | None = None
    error_process: str = "iid"
    error_coef: float = 0.0
    seed: int = 0

    def __post_init__(self):
        probs = np.asarray(self.type_probs, dtype=float)
        if len(probs) != self.n_types or not np.all(probs > 0) or abs(probs.sum() - 1) > 1e-9:
            raise ConfigError("type_probs must be positive and sum to 1")
        if self.error_process not in ERROR_PROCESSES:
            raise ConfigError(f"error_process must be one of {ERROR_PROCESSES}")
        dp = np.asarray(self.delta_profiles, dtype=float)
        bp = np.asarray(self.beta_profiles, dtype=float)
        if dp.shape != (self.n_types, self.t0 + self.t1 + 1):
            raise ConfigError("delta_profiles must be (n_types, T0+T1+1)")
        if bp.shape != (self.n_types, self.t1):
            raise ConfigError("beta_profiles must be (n_types, T1)")
        object.__setattr__(self, "delta_profiles", dp)
        object.__setattr__(self, "beta_profiles", bp)
        for k in range(1, self.n_types + 1):
            entries = self.timing_probs[k]
            total = sum(p for _, p in entries)
            if abs(total - 1) > 1e-9:
                raise ConfigError(f"timing probabilities for type {k} must sum to 1")
            for e, _ in entries:
                if e is not None and not 0 <= e <= self.t1 - 1:
                    raise ConfigError(f"timing {e} outside 0..T1-1")

    @property
    def periods(self) -> np.ndarray:
        return np.arange(-self.t0 - 1, self.t1)

    def mean_beta0(self, type_label: int, timing: int) -> float:
        """Population mean of the unit-level effect at relative time 0."""
        scale = (
            self.late_beta_scale
            if self.late_timing_threshold is not None and timing >= self.late_timing_threshold
            else 1.0
        )
        return float(scale * self.beta_profiles[type_label - 1, 0])


@dataclass(frozen=True)
class TrueParams:
    labels: np.ndarray
    event_time: np.ndarray
    treated: np.ndarray
    alphas: np.ndarray
    unit_beta_shift: np.ndarray
    delta_profiles: np.ndarray
    beta_profiles: np.ndarray
    theta: np.ndarray


def _draw_errors(rng, n, tp1, spec: DgpSpec) -> np.ndarray:
    eps = rng.normal(0.0, spec.noise_sd, size=(n, tp1))
    if spec.error_process == "iid":
        return eps
    if spec.error_process == "ma1":
        u = eps.copy()
        u[:, 1:] += spec.error_coef * eps[:, :-1]
        return u
    rho = spec.error_coef
    u = np.empty_like(eps)
    u[:, 0] = eps[:, 0] / np.sqrt(max(1 - rho ** 2, 1e-12))
    for t in range(1, tp1):
        u[:, t] = rho * u[:, t - 1] + eps[:, t]
    return u


def generate(spec: DgpSpec):
    """Draw one panel from the model; returns (panel, true labels, parameters)."""
    rng = np.random.default_rng(spec.seed)
    n, tp1 = spec.n_units, spec.t0 + spec.t1 + 1
    periods = spec.periods

    labels = rng.choice(spec.n_types, size=n, p=np.asarray(spec.type_probs)) + 1
    event_time = np.zeros(n, dtype=int)
    treated = np.zeros(n, dtype=bool)
    for k in range(1, spec.n_types + 1):
        members = np.nonzero(labels == k)[0]
        if members.size == 0:
            continue
        entries = spec.timing_probs[k]
        idx = rng.choice(len(entries), size=members.size, p=[p for _, p in entries])
        for j, i in enumerate(members):
            e = entries[idx[j]][0]
            if e is not None:
                treated[i] = True
                event_time[i] = e

    alphas = rng.normal(0.0, spec.alpha_sd, size=n)
    shifts = (
        rng.normal(0.0, spec.unit_beta_sd, size=n)
        if spec.unit_beta_sd > 0
        else np.zeros(n)
    )
    errors = _draw_errors(rng, n, tp1, spec)

    outcome = alphas[:, None] + spec.delta_profiles[labels - 1] + errors
    for i in np.nonzero(treated)[0]:
        rel = periods - event_time[i]
        post = rel >= 0
        scale = 1.0
        if spec.late_timing_threshold is not None and event_time[i] >= spec.late_timing_threshold:
            scale = spec.late_beta_scale
        outcome[i, post] += scale * spec.beta_profiles[labels[i] - 1, rel[post]] + shifts[i]

    p = spec.n_covariates
    covariates = rng.normal(0.0, 1.0, size=(n, tp1, p)) if p else np.zeros((n, tp1, 0))
    theta = np.zeros((spec.n_types, p))
    if p and spec.theta is not None:
        th = np.asarray(spec.theta, dtype=float)
        theta = np.broadcast_to(th if th.ndim == 2 else th[None, :], (spec.n_types, p)).copy()
        for k in range(1, spec.n_types + 1):
            members = labels == k
            outcome[members] += covariates[members] @ theta[k - 1]

    units = [f"u{i:04d}" for i in range(n)]
    panel = Panel(tuple(units), periods, outcome, covariates, event_time, treated)
    params = TrueParams(labels, event_time, treated, alphas, shifts,
                        spec.delta_profiles, spec.beta_profiles, theta)
    return panel, labels, params


def _agreement(estimated, truth):
    est = estimated.labels if isinstance(estimated, TypeAssignment) else np.asarray(estimated)
    tru = np.asarray(truth)
    if est.shape != tru.shape:
        raise ConfigError("label vectors differ in length")
    k = int(max(est.max(), tru.max()))
    agree = np.zeros((k, k))
    np.add.at(agree, (est - 1, tru - 1), 1.0)
    return est, tru, agree


def misclassification_rate(estimated, truth) -> float:
    """Permutation-minimized fraction of units with a wrong type label."""
    est, _, agree = _agreement(estimated, truth)
    rows, cols = linear_sum_assignment(-agree)
    matched = agree[rows, cols].sum()
    return float(1.0 - matched / est.size)


def match_types(estimated, truth) -> dict:
    """Best estimated-label -> true-label mapping (maximum agreement)."""
    _, _, agree = _agreement(estimated, truth)
    rows, cols = linear_sum_assignment(-agree)
    return {int(r + 1): int(c + 1) for r, c in zip(rows, cols)}


# ---------------------------------------------------------------------------
# named presets

PRESET_NAMES = (
    "separated-trends",
    "step-change",
    "weak-separation",
    "selection-on-type",
    "heterogeneous-beta",
)


def _linear_deltas(periods, slopes):
    return np.stack([s * periods.astype(float) for s in slopes])


def _step_deltas(periods, low_high, break_at):
    out = []
    for lo, hi in low_high:
        prof = np.where(periods < break_at, lo, hi).astype(float)
        out.append(prof)
    return np.stack(out)


def _ramp_betas(t1, bases):
    r = np.arange(t1, dtype=float)
    return np.stack([b * (r + 1.0) for b in bases])


def _two_timings(t1: int, early: int, late: int) -> tuple:
    """Two distinct timings clipped into 0..T1-1."""
    if t1 < 2:
        raise ConfigError("presets need at least two treated periods")
    b = min(late, t1 - 1)
    a = min(early, b - 1)
    return max(a, 0), b


def make_preset(name: str, n_units: int = 200, t0: int = 10, t1: int = 10,
                noise_sd: float = None, seed: int = 0, **overrides) -> DgpSpec:
    """Build one of the named DGPs, optionally overriding any field."""
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset '{name}' (expected one of {PRESET_NAMES})")
    periods = np.arange(-t0 - 1, t1)
    e0, e1 = _two_timings(t1, 0, 3)
    shared_support = [(e0, 0.3), (e1, 0.3), (None, 0.4)]
    both = {1: list(shared_support), 2: list(shared_support)}
    if name == "separated-trends":
        spec = DgpSpec(
            n_units, t0, t1, 2, (0.5, 0.5),
            _linear_deltas(periods, (0.5, -0.5)),
            np.stack([1.0 + 0.25 * np.arange(t1), 0.5 + 0.1 * np.arange(t1)]),
            both, noise_sd=0.5 if noise_sd is None else noise_sd,
            alpha_sd=1.0, seed=seed,
        )
    elif name == "weak-separation":
        spec = DgpSpec(
            n_units, t0, t1, 2, (0.5, 0.5),
            _linear_deltas(periods, (0.05, -0.05)),
            np.stack([1.0 + 0.25 * np.arange(t1), 0.5 + 0.1 * np.arange(t1)]),
            both, noise_sd=0.5 if noise_sd is None else noise_sd,
            alpha_sd=1.0, seed=seed,
        )
    elif name == "step-change":
        # constant profiles with one mirrored break: almost no between-type
        # distance in first differences, a clear one in demeaned levels
        s0, s1 = _two_timings(t1, 2, 5)
        support = [(s0, 0.3), (s1, 0.3), (None, 0.4)]
        amp = 0.15
        spec = DgpSpec(
            n_units, t0, t1, 2, (0.5, 0.5),
            _step_deltas(periods, [(-amp, amp), (amp, -amp)], break_at=-2),
            np.stack([np.full(t1, 1.0), np.full(t1, 1.0)]),
            {1: list(support), 2: list(support)},
            noise_sd=0.3 if noise_sd is None else noise_sd,
            alpha_sd=1.0, seed=seed,
        )
    elif name == "selection-on-type":
        # rising-trend units treat early, flat/declining units late or never;
        # pooling the types loads the trend difference onto the lags
        a0, a1 = _two_timings(t1, 0, 2)
        late = min(6, t1 - 1)
        spec = DgpSpec(
            n_units, t0, t1, 2, (0.5, 0.5),
            _linear_deltas(periods, (1.5, -0.5)),
            np.stack([1.0 + 0.2 * np.arange(t1), 1.0 + 0.2 * np.arange(t1)]),
            {1: [(a0, 0.5), (a1, 0.3), (None, 0.2)], 2: [(late, 0.2), (None, 0.8)]},
            noise_sd=0.5 if noise_sd is None else noise_sd,
            alpha_sd=1.0, seed=seed,
        )
    else:  # heterogeneous-beta
        spec = DgpSpec(
            n_units, t0, t1, 2, (0.5, 0.5),
            _linear_deltas(periods, (0.5, -0.5)),
            _ramp_betas(t1, (1.0, 0.5)),
            both, noise_sd=0.5 if noise_sd is None else noise_sd,
            alpha_sd=1.0, unit_beta_sd=0.3,
            late_beta_scale=1.5, late_timing_threshold=3, seed=seed,
        )
    if overrides:
        spec = replace(spec, **overrides)
    return spec
