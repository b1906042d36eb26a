import numpy as np
import pandas as pd
import pytest

from ktwfe.errors import ConfigError
from ktwfe.panel import (
    TypeAssignment,
    make_panel,
    panel_from_long,
    panel_to_long,
    reindex_times,
    validate,
)


def test_valid_panel_has_empty_report(tiny_panel):
    assert validate(tiny_panel) == []


def test_missing_cell_is_named(tiny_panel):
    bad = tiny_panel.outcome.copy()
    bad[1, 2] = np.nan
    panel = make_panel(
        tiny_panel.units, tiny_panel.times, bad,
        event_time=tiny_panel.event_time, treated=tiny_panel.treated,
    )
    report = validate(panel)
    assert len(report) == 1
    assert "unit=b" in report[0] and "time=2" in report[0]


def test_all_never_treated_flagged(tiny_panel):
    panel = make_panel(tiny_panel.units, tiny_panel.times, tiny_panel.outcome)
    report = validate(panel)
    assert any("no treatment variation" in r for r in report)


def test_gappy_times_flagged(tiny_panel):
    panel = make_panel(
        tiny_panel.units, [0, 1, 3, 4], tiny_panel.outcome,
        event_time=tiny_panel.event_time, treated=tiny_panel.treated,
    )
    assert any("consecutive" in r for r in validate(panel))


def test_timing_outside_range_flagged(tiny_panel):
    panel = make_panel(
        tiny_panel.units, tiny_panel.times, tiny_panel.outcome,
        event_time=[9, 0, 0], treated=[True, False, False],
    )
    assert any("outside observed periods" in r for r in validate(panel))


def test_reindex_calendar_years():
    # calendar years 1989..2007 with earliest event 1992 -> t in -3..15
    years = np.arange(1989, 2008)
    n = 4
    outcome = np.zeros((n, len(years)))
    panel = make_panel(
        [f"u{i}" for i in range(n)], years, outcome,
        event_time=[1992, 1995, 0, 0], treated=[True, True, False, False],
    )
    out = reindex_times(panel)
    assert out.times[0] == -3 and out.times[-1] == 15
    assert out.t0 == 2 and out.t1 == 16
    assert list(out.event_time[:2]) == [0, 3]


def test_reindex_rejects_treatment_in_first_period():
    outcome = np.zeros((2, 4))
    panel = make_panel(["a", "b"], [5, 6, 7, 8], outcome,
                       event_time=[5, 0], treated=[True, False])
    with pytest.raises(ConfigError, match="first period"):
        reindex_times(panel)


def test_reindex_last_period_treatment():
    outcome = np.zeros((2, 4))
    panel = make_panel(["a", "b"], [5, 6, 7, 8], outcome,
                       event_time=[8, 0], treated=[True, False])
    out = reindex_times(panel)
    assert out.t1 == 1 and out.times[-1] == 0


def test_reindex_idempotent(tiny_panel):
    once = reindex_times(tiny_panel)
    twice = reindex_times(once)
    assert np.array_equal(once.times, twice.times)
    assert np.array_equal(once.event_time, twice.event_time)
    assert validate(once) == []


def test_type_assignment_validity():
    assert TypeAssignment(np.array([1, 2, 1]), 2).is_valid()
    assert not TypeAssignment(np.array([1, 1, 1]), 2).is_valid()
    assert not TypeAssignment(np.array([0, 1, 2]), 2).is_valid()
    assert TypeAssignment(np.array([2, 1]), 2).counts().tolist() == [1, 1]


def test_long_round_trip(tiny_panel):
    df = panel_to_long(tiny_panel)
    back = panel_from_long(df, "unit", "time", "outcome", treatment_col="treat_time")
    assert back.units == tiny_panel.units
    np.testing.assert_array_equal(back.outcome, tiny_panel.outcome)
    np.testing.assert_array_equal(back.treated, tiny_panel.treated)
    np.testing.assert_array_equal(
        back.event_time[back.treated], tiny_panel.event_time[tiny_panel.treated]
    )


def test_from_long_missing_row_reports_cell(tiny_panel):
    df = panel_to_long(tiny_panel)
    df = df.drop(index=df[(df.unit == "b") & (df.time == 1)].index)
    panel = panel_from_long(df, "unit", "time", "outcome", treatment_col="treat_time")
    assert any("unit=b" in r and "time=1" in r for r in validate(panel))


def test_from_long_rejects_missing_column(tiny_panel):
    df = panel_to_long(tiny_panel)
    with pytest.raises(ConfigError, match="nope"):
        panel_from_long(df, "unit", "time", "nope")


def test_from_long_rejects_varying_treatment_time():
    df = pd.DataFrame({
        "unit": ["a", "a", "b", "b"],
        "time": [0, 1, 0, 1],
        "outcome": [1.0, 2.0, 3.0, 4.0],
        "treat_time": ["0", "1", "", ""],
    })
    with pytest.raises(ConfigError, match="varies"):
        panel_from_long(df, "unit", "time", "outcome", treatment_col="treat_time")
