import numpy as np
import pytest

from ktwfe.panel import make_panel


@pytest.fixture
def tiny_panel():
    """3 units x 4 periods, one treated at the third period."""
    times = [0, 1, 2, 3]
    outcome = np.array([
        [1.0, 2.0, 3.0, 4.0],
        [0.5, 1.5, 2.5, 3.5],
        [2.0, 2.0, 2.0, 2.0],
    ])
    return make_panel(
        ["a", "b", "c"], times, outcome,
        event_time=[2, 0, 0], treated=[True, False, False],
    )


def random_panel(rng, n=20, t0=4, t1=5, p=0, timings=(0, 2), never_share=0.3,
                 noise=1.0):
    """Unstructured panel helper used across tests (already reindexed)."""
    times = np.arange(-t0 - 1, t1)
    tp1 = len(times)
    treated = rng.random(n) > never_share
    treated[0] = True
    event = np.zeros(n, dtype=int)
    event[treated] = rng.choice(timings, size=int(treated.sum()))
    event[np.nonzero(treated)[0][0]] = min(timings)
    outcome = rng.normal(0, noise, size=(n, tp1)) + rng.normal(0, 1, size=(n, 1))
    cov = rng.normal(size=(n, tp1, p)) if p else None
    units = [f"u{i:03d}" for i in range(n)]
    return make_panel(units, times, outcome, covariates=cov,
                      event_time=event, treated=treated)
