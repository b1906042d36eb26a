"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Monte Carlo batches are shared across criteria (the N=200, T=20
well-separated batch feeds the classification, consistency, and coverage
checks) and parallelized over two workers with per-replication seeds, so
results are deterministic.  Full suite runtime is roughly ten minutes;
run with ``pytest tests/test_acceptance.py -v -s`` to watch the lines.
"""

import json
import time

import numpy as np
import pytest
from joblib import Parallel, delayed

from conftest import random_panel
from ktwfe.api import TypedEventStudy
from ktwfe.cli import main as cli_main
from ktwfe.design import DesignSpec
from ktwfe.estimator import FitConfig, fit
from ktwfe.inference import het_effect_r0
from ktwfe.io import write_panel_csv
from ktwfe.oracle import exhaustive_fit
from ktwfe.panel import make_panel
from ktwfe.segregation import segregation_index
from ktwfe.simulate import generate, make_preset, match_types, misclassification_rate
from ktwfe.transform import difference, first_difference

N_JOBS = 2


def _check(num, description, ok, detail=""):
    print(f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {description} {detail}".rstrip())
    assert ok, f"criterion {num} failed: {description} {detail}"


def _seeds(entropy, count):
    return [int(s) for s in np.random.SeedSequence(entropy).generate_state(count)]


def _monotone(trace):
    return all(b <= a for a, b in zip(trace, trace[1:]))


# ---------------------------------------------------------------------------
# shared separated-trends batches (criteria 3, 4, 5, 6)

def _sep_rep(seed, n, t0, t1, restarts=6, lead=3):
    spec = make_preset("separated-trends", n_units=n, t0=t0, t1=t1, seed=seed)
    panel, truth, params = generate(spec)
    est = TypedEventStudy(n_types=2, lead_window=lead, restarts=restarts,
                          random_state=seed).fit(panel)
    errs, cover = [], []
    eff = est.effects_.effects
    for est_k, true_k in match_types(est.labels_, truth).items():
        sel = eff[eff.type == est_k]
        for r in range(t1):
            row = sel[sel.rel_time == r]
            if row.empty:
                continue
            err = float(row.coef_cum.iloc[0]) - params.beta_profiles[true_k - 1, r]
            errs.append(err)
            if r == 0:
                cover.append(bool(abs(err) <= 1.96 * float(row.se.iloc[0])))
    return {
        "mis": misclassification_rate(est.assignment_, truth),
        "errs": errs,
        "cover": cover,
        "mono": all(_monotone(s["trace"]) for s in est.restart_summaries_),
    }


def _sep_batch(n, t0, t1, seeds):
    return Parallel(n_jobs=N_JOBS)(delayed(_sep_rep)(s, n, t0, t1) for s in seeds)


@pytest.fixture(scope="module")
def sep_batches():
    seeds = _seeds(42, 500)
    return {
        "n200_t20": _sep_batch(200, 10, 10, seeds),
        "n100_t20": _sep_batch(100, 10, 10, seeds[:200]),
        "n200_t10": _sep_batch(200, 5, 5, seeds[:200]),
        "n200_t40": _sep_batch(200, 20, 20, seeds[:200]),
    }


def _mis_stats(batch):
    mis = np.array([r["mis"] for r in batch])
    return mis.mean(), mis.std(ddof=1) / np.sqrt(len(mis))


# ---------------------------------------------------------------------------

def test_criterion_01_oracle_equivalence():
    start = time.time()
    hits = 0
    for i in range(20):
        rng = np.random.default_rng(1000 + i)
        panel = random_panel(rng, n=6, t0=3, t1=3, p=(i % 2), timings=(0, 2),
                             never_share=0.3)
        dp = first_difference(panel)
        spec = DesignSpec(2, lead_window=2)
        oracle = exhaustive_fit(dp, 2, spec)
        searched = fit(dp, FitConfig(spec, restarts=200, rng_seed=i))
        rel = abs(searched.objective - oracle.best_objective) / max(oracle.best_objective, 1e-300)
        hits += rel <= 1e-10
    elapsed = time.time() - start
    _check(1, "multi-restart search attains the exhaustive optimum on >=19/20 tiny instances",
           hits >= 19 and elapsed < 60.0, f"(hits={hits}/20, {elapsed:.1f}s)")


def _independent_first_diff_event_study(panel, lead_window):
    """Textbook first-differenced event-study OLS, assembled from scratch."""
    dy = np.diff(panel.outcome, axis=1)
    dx = np.diff(panel.covariates, axis=1)
    periods = panel.times[1:]
    t1 = int(np.sum(panel.times >= 0))
    names, cols = [], []
    for t in periods:
        names.append(("timefe", int(t)))
        cols.append([1.0 * (t == s) for i in range(panel.n_units) for s in periods])
    rel_grid = list(range(-lead_window, -1)) + list(range(0, t1))
    for r in rel_grid:
        names.append(("treat", r))
        col = []
        for i in range(panel.n_units):
            for s in periods:
                hit = panel.treated[i] and (s - panel.event_time[i]) == r
                col.append(1.0 if hit else 0.0)
        cols.append(col)
    for p in range(panel.n_covariates):
        names.append(("x", p))
        cols.append([dx[i, j, p] for i in range(panel.n_units) for j in range(len(periods))])
    x = np.array(cols).T
    keep = [j for j in range(x.shape[1]) if np.any(x[:, j] != 0.0)]
    x = x[:, keep]
    names = [names[j] for j in keep]
    beta, _, rank, _ = np.linalg.lstsq(x, dy.reshape(-1), rcond=None)
    assert rank == x.shape[1], "independent design unexpectedly rank deficient"
    return dict(zip(names, beta))


def test_criterion_02_twfe_collapse():
    worst = 0.0
    for i in range(5):
        rng = np.random.default_rng(3000 + i)
        panel = random_panel(rng, n=50, t0=6, t1=6, p=(i % 2), timings=(0, 3),
                             never_share=0.3)
        lead = 2
        est = TypedEventStudy(n_types=1, lead_window=lead, restarts=1,
                              random_state=i).fit(panel)
        reference = _independent_first_diff_event_study(est.panel_, lead)
        mine = est.solution_.full_coefficients()
        assert len(mine) == len(reference)
        for coef, col in zip(mine, est.design_.columns):
            key = {
                "timefe": ("timefe", col.period),
                "treat": ("treat", col.rel_time),
                "x": ("x", col.covariate),
            }[col.kind]
            worst = max(worst, abs(coef - reference[key]))
    _check(2, "K=1 estimates match an independently coded event-study OLS",
           worst <= 1e-8, f"(max coefficient gap {worst:.2e})")


def test_criterion_03_monotone_objective(sep_batches):
    shared_ok = all(r["mono"] for batch in sep_batches.values() for r in batch)
    violations = 0
    for i in range(50):
        rng = np.random.default_rng(5000 + i)
        panel = random_panel(rng, n=15, t0=3, t1=4)
        res = fit(first_difference(panel),
                  FitConfig(DesignSpec(2, lead_window=1), restarts=5, rng_seed=i))
        for s in res.restart_summaries:
            if not _monotone(s["trace"]):
                violations += 1
    _check(3, "every iteration trace is non-increasing in every restart",
           shared_ok and violations == 0,
           f"(violations={violations}, shared batches ok={shared_ok})")


def test_criterion_04_classification_consistency(sep_batches):
    m20, se20 = _mis_stats(sep_batches["n200_t20"][:200])
    m10, se10 = _mis_stats(sep_batches["n200_t10"])
    m40, se40 = _mis_stats(sep_batches["n200_t40"])
    step1 = m20 <= m10 + 2 * np.hypot(se10, se20)
    step2 = m40 <= m20 + 2 * np.hypot(se20, se40)
    _check(4, "mean misclassification <=1% at N=200,T=20 and non-increasing in T",
           m20 <= 0.01 and step1 and step2,
           f"(T=10: {m10:.4f}, T=20: {m20:.4f}, T=40: {m40:.4f})")


def test_criterion_05_effect_consistency(sep_batches):
    e100 = np.array([e for r in sep_batches["n100_t20"] for e in r["errs"]])
    e200 = np.array([e for r in sep_batches["n200_t20"][:200] for e in r["errs"]])
    bias100, bias200 = e100.mean(), e200.mean()
    rmse100 = float(np.sqrt((e100 ** 2).mean()))
    rmse200 = float(np.sqrt((e200 ** 2).mean()))
    shrink = 1.0 - rmse200 / rmse100
    _check(5, "cumulative-effect mean bias <=0.02 and RMSE shrinks >=30% when N doubles",
           max(abs(bias100), abs(bias200)) <= 0.02 and shrink >= 0.30,
           f"(bias {bias100:+.4f}/{bias200:+.4f}, RMSE {rmse100:.4f}->{rmse200:.4f}, "
           f"shrink {shrink * 100:.2f}%)")


def test_criterion_06_coverage(sep_batches):
    cover = np.array([c for r in sep_batches["n200_t20"] for c in r["cover"]])
    rate = cover.mean()
    _check(6, "cluster-robust 95% CIs cover the instantaneous effect at rate in [0.92, 0.98]",
           0.92 <= rate <= 0.98, f"(coverage {rate:.4f} over {len(cover)} intervals)")


# ---------------------------------------------------------------------------

def _selection_rep(seed, n=100, t0=5, t1=7):
    spec = make_preset("selection-on-type", n_units=n, t0=t0, t1=t1, seed=seed)
    panel, truth, _ = generate(spec)
    truth0 = float(spec.beta_profiles[0, 0])

    pooled = TypedEventStudy(n_types=1, lead_window=2, restarts=1,
                             random_state=seed).fit(panel)
    typed = TypedEventStudy(n_types=2, lead_window=2, restarts=6,
                            random_state=seed).fit(panel)

    def beta0(est, k):
        eff = est.effects_.effects
        row = eff[(eff.type == k) & (eff.rel_time == 0)]
        return float(row.coef_cum.iloc[0]) if len(row) else np.nan

    typed_errs = [beta0(typed, est_k) - truth0
                  for est_k in match_types(typed.labels_, truth)]
    return beta0(pooled, 1) - truth0, float(np.nanmean(typed_errs))


def test_criterion_07_selection_bias_demonstration():
    seeds = _seeds(77, 500)
    rows = Parallel(n_jobs=N_JOBS)(delayed(_selection_rep)(s) for s in seeds)
    pooled = np.array([r[0] for r in rows])
    typed = np.array([r[1] for r in rows])
    se_pooled = pooled.std(ddof=1) / np.sqrt(len(pooled))
    se_typed = typed.std(ddof=1) / np.sqrt(len(typed))
    pooled_ratio = abs(pooled.mean()) / se_pooled
    typed_ratio = abs(typed.mean()) / se_typed
    _check(7, "pooled estimator bias exceeds 5x its SE while the typed one is within 2 SE of zero",
           pooled_ratio > 5.0 and typed_ratio <= 2.0,
           f"(pooled {pooled.mean():+.4f} = {pooled_ratio:.1f} SE, "
           f"typed {typed.mean():+.4f} = {typed_ratio:.1f} SE)")


# ---------------------------------------------------------------------------

def _het_rep(seed, n=150, t0=6, t1=6):
    spec = make_preset("heterogeneous-beta", n_units=n, t0=t0, t1=t1, seed=seed)
    panel, truth, _ = generate(spec)
    est = TypedEventStudy(n_types=2, lead_window=2, restarts=6,
                          random_state=seed).fit(panel)
    eff = est.effects_.effects
    out = {}
    for est_k, true_k in match_types(est.labels_, truth).items():
        base = float(spec.beta_profiles[true_k - 1, 0])
        robust, _ = het_effect_r0(est.panel_, est.assignment_, est_k)
        row = eff[(eff.type == est_k) & (eff.rel_time == 0)]
        pooled_within = float(row.coef_cum.iloc[0]) if len(row) else np.nan
        out[true_k] = (robust - base, pooled_within - base)
    return out


def _het_direction_oracle():
    """Noise-free large-N run: sign of the within-type regression's deviation."""
    from dataclasses import replace

    spec = make_preset("heterogeneous-beta", n_units=4000, t0=6, t1=6,
                       noise_sd=0.0, seed=0)
    spec = replace(spec, alpha_sd=0.0, unit_beta_sd=0.0)
    panel, truth, _ = generate(spec)
    est = TypedEventStudy(n_types=2, lead_window=2, restarts=4, random_state=0).fit(panel)
    eff = est.effects_.effects
    signs = {}
    for est_k, true_k in match_types(est.labels_, truth).items():
        row = eff[(eff.type == est_k) & (eff.rel_time == 0)]
        signs[true_k] = np.sign(float(row.coef_cum.iloc[0]) - spec.beta_profiles[true_k - 1, 0])
    return signs


def test_criterion_08_heterogeneous_effect_extension():
    seeds = _seeds(88, 200)
    rows = Parallel(n_jobs=N_JOBS)(delayed(_het_rep)(s) for s in seeds)
    oracle_sign = _het_direction_oracle()
    ok, details = True, []
    for k in (1, 2):
        robust = np.array([r[k][0] for r in rows])
        pooled = np.array([r[k][1] for r in rows])
        se = np.nanstd(robust, ddof=1) / np.sqrt(len(robust))
        recovers = abs(np.nanmean(robust)) <= 3 * se
        direction = np.sign(np.nanmean(pooled)) == oracle_sign[k] != 0
        ok = ok and recovers and direction
        details.append(
            f"type {k}: robust err {np.nanmean(robust):+.4f} ({abs(np.nanmean(robust)) / se:.1f} SE), "
            f"regression dev {np.nanmean(pooled):+.4f} (oracle sign {oracle_sign[k]:+.0f})"
        )
    _check(8, "group-difference estimator recovers the cohort-mean effect; "
              "the within-type regression deviates in the oracle direction",
           ok, "(" + "; ".join(details) + ")")


# ---------------------------------------------------------------------------

def _step_rep(seed, mode, n=200, t0=10, t1=10, restarts=8, lead=3):
    spec = make_preset("step-change", n_units=n, t0=t0, t1=t1, seed=seed)
    panel, truth, _ = generate(spec)
    dp = difference(panel, mode)
    res = fit(dp, FitConfig(DesignSpec(2, lead_window=lead, mode=mode),
                            restarts=restarts, rng_seed=seed))
    return misclassification_rate(res.assignment, truth)


def test_criterion_09_mean_vs_first_differencing():
    seeds = _seeds(99, 200)
    fd = np.array(Parallel(n_jobs=N_JOBS)(
        delayed(_step_rep)(s, "first-diff") for s in seeds))
    md = np.array(Parallel(n_jobs=N_JOBS)(
        delayed(_step_rep)(s, "mean-diff") for s in seeds))
    _check(9, "structural-break types: first differencing misclassifies >25%, "
              "mean differencing <=5%",
           fd.mean() > 0.25 and md.mean() <= 0.05,
           f"(first-diff {fd.mean():.3f}, mean-diff {md.mean():.3f})")


def test_criterion_10_segregation_index():
    vals = (
        segregation_index([(10, 0), (0, 10)]),
        segregation_index([(5, 5), (5, 5)]),
        segregation_index([(30, 10), (10, 30)]),
    )
    ok = (abs(vals[0] - 100.0) <= 1e-12 and abs(vals[1]) <= 1e-12
          and abs(vals[2] - 50.0) <= 1e-12)
    _check(10, "segregation index worked examples exact to 1e-12",
           ok, f"(values {vals})")


def test_criterion_11_cli_determinism(tmp_path):
    spec = make_preset("separated-trends", n_units=40, t0=5, t1=5, seed=6)
    panel, _, _ = generate(spec)
    csv_path = tmp_path / "panel.csv"
    write_panel_csv(panel, csv_path)
    outdir = tmp_path / "out"
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "input": str(csv_path),
        "columns": {"unit": "unit", "time": "time", "outcome": "outcome",
                    "treatment_time": "treat_time"},
        "k": 2, "lead_window": 2, "restarts": 5, "seed": 0,
        "outputs": str(outdir),
    }))
    names = ("assignments.csv", "effects.csv", "timefe.csv", "fit.json")
    assert cli_main(["fit", str(config)]) == 0
    first = {n: (outdir / n).read_bytes() for n in names}
    assert cli_main(["fit", str(config)]) == 0
    second = {n: (outdir / n).read_bytes() for n in names}
    identical = all(first[n] == second[n] for n in names)
    _check(11, "two cmd_fit runs with identical config and seed are byte-identical",
           identical)
