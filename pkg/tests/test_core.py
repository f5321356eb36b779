import json

import numpy as np
import pandas as pd
import pytest

from conftest import make_record, random_counts
from stepleak.core import (
    PERIODS_PER_DAY,
    WEEK_LENGTH,
    Cohort,
    StepSeries,
    attribute_correlation,
    derive_labels,
    load_cohort,
    pearson_matrix,
    steps_frame,
    attributes_frame,
    write_cohort,
    write_exclusion_report,
)
from stepleak.errors import CohortError


def test_step_series_is_read_only_int32():
    series = StepSeries("u1", np.arange(WEEK_LENGTH, dtype=np.int64) % 7)
    assert series.counts.dtype == np.int32
    assert not series.counts.flags.writeable
    with pytest.raises(ValueError):
        series.counts[0] = 3


def test_step_series_day_views():
    counts = np.repeat(np.arange(7), PERIODS_PER_DAY)
    series = StepSeries("u1", counts)
    assert series.days().shape == (7, PERIODS_PER_DAY)
    assert set(series.day(4).tolist()) == {4}
    with pytest.raises(IndexError):
        series.day(7)


@pytest.mark.parametrize(
    "counts",
    [
        np.zeros(WEEK_LENGTH - 1, dtype=np.int32),
        np.full(WEEK_LENGTH, -1),
        np.full(WEEK_LENGTH, 0.5),
    ],
)
def test_step_series_rejects_invalid_counts(counts):
    with pytest.raises(CohortError):
        StepSeries("bad", counts)


def test_attributes_reject_out_of_range_age():
    with pytest.raises(CohortError, match="age"):
        make_record("u1", age=12)


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("age,expected", [(55, "old"), (54, "young"), (80, "old"), (18, "young")])
def test_age_threshold_boundary(age, expected):
    record = derive_labels(make_record("u1", age=age), age_threshold=55)
    assert record.labels.age_bin == expected


def test_derive_labels_is_idempotent():
    once = derive_labels(make_record("u1", age=60, gender="female", education="high"))
    assert derive_labels(once) == once
    assert once.label("gender") == 1
    assert once.label("age") == 1
    assert once.label("education") == 1


def test_low_education_leaves_education_task(small_cohort):
    pool = small_cohort.task_pool("education")
    low = [r.user_id for r in small_cohort if r.attrs.education.value == "low"]
    assert low
    assert not {r.user_id for r in pool} & set(low)
    user_ids, y = small_cohort.labels("education")
    assert len(user_ids) == len(small_cohort) - len(low)
    assert set(y.tolist()) <= {0, 1}


def test_cohort_rejects_duplicate_users():
    with pytest.raises(CohortError, match="duplicate"):
        Cohort.from_records([make_record("u1"), make_record("u1")])


def test_max_steps_invariant_under_reordering(small_cohort):
    reordered = Cohort.from_records(list(reversed(small_cohort.records)))
    assert reordered.stats.max_steps == small_cohort.stats.max_steps
    assert reordered.user_ids == small_cohort.user_ids


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _write(tmp_path, records, steps=None, attrs=None):
    steps_file, attrs_file = tmp_path / "steps.csv", tmp_path / "attributes.csv"
    (steps if steps is not None else steps_frame(records)).to_csv(steps_file, index=False)
    (attrs if attrs is not None else attributes_frame(records)).to_csv(attrs_file, index=False)
    return steps_file, attrs_file


def test_round_trip(tmp_path, small_cohort):
    steps_file, attrs_file = tmp_path / "steps.csv", tmp_path / "attributes.csv"
    write_cohort(small_cohort, steps_file, attrs_file)
    loaded = load_cohort(steps_file, attrs_file)

    assert loaded.user_ids == small_cohort.user_ids
    for original, reloaded in zip(small_cohort, loaded):
        np.testing.assert_array_equal(original.series.counts, reloaded.series.counts)
        assert original.attrs == reloaded.attrs
    assert loaded.stats == small_cohort.stats
    assert loaded.exclusions == ()


def test_incomplete_grids_are_excluded(tmp_path):
    rng = np.random.default_rng(1)
    records = [make_record(f"u{i}", random_counts(rng)) for i in range(6)]
    steps = steps_frame(records)
    # drop one period of u1 and a whole day of u4
    drop = (steps["user_id"] == "u1") & (steps["period"] == 17) & (steps["day"] == 2)
    drop |= (steps["user_id"] == "u4") & (steps["day"] == 6)
    steps_file, attrs_file = _write(tmp_path, records, steps=steps[~drop])

    cohort = load_cohort(steps_file, attrs_file)

    assert len(cohort) == 4
    assert cohort.stats.n_users == 4
    excluded = {e.user_id: e.reason for e in cohort.exclusions}
    assert set(excluded) == {"u1", "u4"}
    assert "incomplete" in excluded["u1"]


def test_user_without_attributes_is_excluded_and_reported(tmp_path):
    records = [make_record("a"), make_record("b"), make_record("c")]
    attrs = attributes_frame(records)
    steps_file, attrs_file = _write(tmp_path, records, attrs=attrs[attrs["user_id"] != "b"])

    cohort = load_cohort(steps_file, attrs_file)
    assert cohort.user_ids == ["a", "c"]

    report_file = tmp_path / "exclusions.json"
    write_exclusion_report(cohort, report_file)
    report = json.loads(report_file.read_text())
    assert report == [{"user_id": "b", "reason": "missing attributes"}]


def test_attributes_without_steps_are_reported(tmp_path):
    records = [make_record("a"), make_record("b")]
    steps = steps_frame(records[:1])
    steps_file, attrs_file = _write(tmp_path, records, steps=steps)
    cohort = load_cohort(steps_file, attrs_file)
    assert cohort.user_ids == ["a"]
    assert [(e.user_id, e.reason) for e in cohort.exclusions] == [("b", "missing step data")]


@pytest.mark.parametrize("content", ["", "user_id,day,period,steps\n"])
def test_empty_steps_file_gives_empty_cohort(tmp_path, content):
    steps_file, attrs_file = tmp_path / "steps.csv", tmp_path / "attributes.csv"
    steps_file.write_text(content)
    attrs_file.write_text("user_id,gender,age,education\n")
    cohort = load_cohort(steps_file, attrs_file)
    assert len(cohort) == 0
    assert cohort.stats.n_users == 0


def test_malformed_row_reports_line_number(tmp_path):
    records = [make_record("a")]
    steps = steps_frame(records)
    steps.loc[2, "steps"] = -1
    steps_file, attrs_file = _write(tmp_path, records, steps=steps)
    with pytest.raises(CohortError) as info:
        load_cohort(steps_file, attrs_file)
    assert info.value.line == 4
    assert "non-negative" in str(info.value)


def test_step_count_overflow_has_its_own_message(tmp_path):
    records = [make_record("a")]
    steps = steps_frame(records)
    steps["steps"] = steps["steps"].astype("int64")
    steps.loc[3, "steps"] = 2**31
    steps_file, attrs_file = _write(tmp_path, records, steps=steps)
    with pytest.raises(CohortError, match="int32 maximum") as info:
        load_cohort(steps_file, attrs_file)
    assert info.value.line == 5
    assert "non-negative" not in str(info.value)


def test_duplicate_step_row_is_an_error(tmp_path):
    records = [make_record("a")]
    steps = steps_frame(records)
    steps = pd.concat([steps, steps.iloc[[5]]], ignore_index=True)
    steps_file, attrs_file = _write(tmp_path, records, steps=steps)
    with pytest.raises(CohortError, match="duplicate"):
        load_cohort(steps_file, attrs_file)


def test_duplicate_attribute_row_is_an_error(tmp_path):
    records = [make_record("a")]
    attrs = pd.concat([attributes_frame(records)] * 2, ignore_index=True)
    steps_file, attrs_file = _write(tmp_path, records, attrs=attrs)
    with pytest.raises(CohortError, match="duplicate user_id a"):
        load_cohort(steps_file, attrs_file)


def test_wrong_header_is_an_error(tmp_path):
    steps_file, attrs_file = tmp_path / "steps.csv", tmp_path / "attributes.csv"
    steps_file.write_text("user,day,period,steps\n")
    attrs_file.write_text("user_id,gender,age,education\n")
    with pytest.raises(CohortError, match="expected header"):
        load_cohort(steps_file, attrs_file)


def test_max_steps_cap_excludes_users(tmp_path):
    low = np.ones(WEEK_LENGTH, dtype=np.int32)
    high = low.copy()
    high[100] = 99
    records = [make_record("low", low), make_record("high", high)]
    steps_file, attrs_file = _write(tmp_path, records)
    cohort = load_cohort(steps_file, attrs_file, max_steps=50)
    assert cohort.user_ids == ["low"]
    assert "exceeds cap" in cohort.exclusions[0].reason


# ---------------------------------------------------------------------------
# Correlation
# ---------------------------------------------------------------------------

def test_pearson_self_and_negated_columns():
    x = np.array([1.0, 4.0, 2.0, 8.0, 5.0])
    result = pearson_matrix(pd.DataFrame({"x": x, "neg": -x}))
    assert result.matrix.loc["x", "x"] == 1.0
    assert result.matrix.loc["x", "neg"] == pytest.approx(-1.0, abs=1e-12)


def test_attribute_correlation_matches_hand_formula():
    records = [
        make_record("a", age=30, gender="male", education="high"),
        make_record("b", age=45, gender="female", education="medium"),
        make_record("c", age=60, gender="female", education="low"),
        make_record("d", age=75, gender="male", education="medium"),
    ]
    result = attribute_correlation(Cohort.from_records(records))

    age = np.array([30.0, 45.0, 60.0, 75.0])
    education = np.array([2.0, 1.0, 0.0, 1.0])
    da, de = age - age.mean(), education - education.mean()
    expected = sum(da * de) / np.sqrt(sum(da * da) * sum(de * de))

    assert result.matrix.loc["age", "education"] == pytest.approx(expected, abs=1e-12)
    np.testing.assert_allclose(result.matrix.to_numpy(), result.matrix.to_numpy().T)
    np.testing.assert_allclose(np.diag(result.matrix.to_numpy()), 1.0)


def test_zero_variance_attribute_is_undefined():
    records = [make_record(f"u{i}", age=30 + i, gender="male") for i in range(3)]
    result = attribute_correlation(Cohort.from_records(records))
    assert np.isnan(result.matrix.loc["gender", "age"])
    assert ("age", "gender") in result.undefined


def test_correlation_needs_two_users():
    with pytest.raises(CohortError):
        attribute_correlation(Cohort.from_records([make_record("solo")]))
