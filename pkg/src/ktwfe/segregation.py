"""Dissimilarity-style segregation index over schools in a district."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def segregation_index(school_counts) -> float:
    """100 * 1/2 * sum_j |b_j/B - w_j/W| over (black, white) school counts.

    0 means every school mirrors the district's composition; 100 means
    complete separation.  Requires nonnegative counts with B > 0, W > 0.
    """
    counts = np.asarray(list(school_counts), dtype=float)
    if counts.ndim != 2 or counts.shape[1] != 2:
        raise ConfigError("expected a sequence of (b, w) count pairs")
    if (counts < 0).any():
        raise ConfigError("counts must be nonnegative")
    b, w = counts[:, 0], counts[:, 1]
    total_b, total_w = b.sum(), w.sum()
    if total_b <= 0 or total_w <= 0:
        raise ConfigError("need at least one student of each group")
    return float(100.0 * 0.5 * np.abs(b / total_b - w / total_w).sum())
