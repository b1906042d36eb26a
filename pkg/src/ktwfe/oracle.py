"""Brute-force global minimizer over all valid type assignments.

Only feasible on tiny instances; serves as the correctness oracle for
the iterative search.  Every surjective labeling of N units onto K types
is evaluated with the same design/least-squares path, in lexicographic
label order, so ties resolve deterministically to the first labeling.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .design import DesignSpec, build_design
from .errors import ConfigError
from .lsq import solve
from .panel import TypeAssignment
from .transform import DifferencedPanel

ENUMERATION_GUARD = 10 ** 6


@dataclass(frozen=True)
class OracleResult:
    best_assignment: TypeAssignment
    best_objective: float
    enumerated: int


def exhaustive_fit(dpanel: DifferencedPanel, n_types: int, spec: DesignSpec) -> OracleResult:
    """Evaluate the objective for every surjective labeling; return the argmin."""
    n = dpanel.n_units
    if n_types ** n > ENUMERATION_GUARD:
        raise ConfigError(
            f"{n_types}^{n} labelings exceed the enumeration guard of {ENUMERATION_GUARD}"
        )
    y = dpanel.outcome.reshape(-1)
    n_rows = dpanel.n_units * dpanel.n_periods
    best_obj, best_labels, count = np.inf, None, 0
    for labels in itertools.product(range(1, n_types + 1), repeat=n):
        if len(set(labels)) != n_types:
            continue
        count += 1
        assignment = TypeAssignment(np.array(labels), n_types)
        design = build_design(dpanel, assignment, spec)
        obj = solve(design, y).rss / n_rows
        if obj < best_obj:
            best_obj, best_labels = obj, np.array(labels)
    return OracleResult(TypeAssignment(best_labels, n_types), float(best_obj), count)
