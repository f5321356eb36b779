"""
Step-count cohorts: data model, CSV ingestion, label derivation and attribute correlation.

A cohort is a set of users, each with one week of step counts binned into 15 s periods
(7 x 5760 = 40320 values) and three personal attributes. Cohorts are immutable once loaded.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import CohortError

logger = logging.getLogger(__name__)

PERIODS_PER_DAY = 5760
DAYS_PER_WEEK = 7
WEEK_LENGTH = PERIODS_PER_DAY * DAYS_PER_WEEK

DEFAULT_AGE_THRESHOLD = 55
MIN_AGE = 18
MAX_AGE = 120

ATTRIBUTES = ("gender", "age", "education")

STEPS_COLUMNS = ["user_id", "day", "period", "steps"]
ATTRIBUTES_COLUMNS = ["user_id", "gender", "age", "education"]

_INT32_MAX = np.iinfo(np.int32).max


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"

    @property
    def code(self) -> int:
        return 0 if self is Gender.MALE else 1


class Education(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def code(self) -> int:
        return {"low": 0, "medium": 1, "high": 2}[self.value]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepSeries:
    """One user's raw per-15s step counts for a full week (read-only int32)."""

    user_id: str
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (WEEK_LENGTH,):
            raise CohortError(
                f"user {self.user_id}: expected {WEEK_LENGTH} periods, got shape {counts.shape}"
            )
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.isfinite(counts)) or np.any(np.mod(counts, 1) != 0):
                raise CohortError(f"user {self.user_id}: step counts must be integers")
        if counts.size and counts.min() < 0:
            raise CohortError(f"user {self.user_id}: step counts must be non-negative")
        if counts.dtype != np.int32 or counts.flags.writeable:
            counts = counts.astype(np.int32, copy=True)
            counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def max_steps(self) -> int:
        return int(self.counts.max())

    def day(self, index: int) -> np.ndarray:
        """Counts of day `index` (0-6) as a read-only view."""
        if not 0 <= index < DAYS_PER_WEEK:
            raise IndexError(f"day must be in [0, {DAYS_PER_WEEK - 1}], got {index}")
        return self.counts[index * PERIODS_PER_DAY:(index + 1) * PERIODS_PER_DAY]

    def days(self) -> np.ndarray:
        """All days as a (7, 5760) read-only view."""
        return self.counts.reshape(DAYS_PER_WEEK, PERIODS_PER_DAY)


@dataclass(frozen=True)
class Attributes:
    gender: Gender
    age: int
    education: Education

    def __post_init__(self):
        try:
            object.__setattr__(self, "gender", Gender(self.gender))
            object.__setattr__(self, "education", Education(self.education))
        except ValueError as e:
            raise CohortError(str(e)) from e
        if int(self.age) != self.age or not MIN_AGE <= self.age <= MAX_AGE:
            raise CohortError(f"age must be an integer in [{MIN_AGE}, {MAX_AGE}], got {self.age}")
        object.__setattr__(self, "age", int(self.age))


@dataclass(frozen=True)
class Labels:
    """Binary task labels derived from Attributes; edu_bin is None for low education."""

    age_bin: str
    gender_bin: str
    edu_bin: str | None


@dataclass(frozen=True)
class UserRecord:
    series: StepSeries
    attrs: Attributes
    labels: Labels | None = None

    @property
    def user_id(self) -> str:
        return self.series.user_id

    def label(self, attribute: str) -> int | None:
        """Binary class of `attribute`: female=1, old=1, high education=1; None if absent."""
        if self.labels is None:
            raise CohortError(f"user {self.user_id}: labels have not been derived")
        if attribute == "gender":
            return int(self.labels.gender_bin == Gender.FEMALE.value)
        if attribute == "age":
            return int(self.labels.age_bin == "old")
        if attribute == "education":
            if self.labels.edu_bin is None:
                return None
            return int(self.labels.edu_bin == Education.HIGH.value)
        raise ValueError(f"Unknown attribute: {attribute}")


@dataclass(frozen=True)
class CohortStats:
    n_users: int
    max_steps: int
    class_counts: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Sequence[UserRecord]) -> "CohortStats":
        max_steps = max((r.series.max_steps for r in records), default=0)
        counts: dict[str, dict[str, int]] = {
            "gender": {g.value: 0 for g in Gender},
            "education": {e.value: 0 for e in Education},
            "age_bin": {"young": 0, "old": 0},
        }
        for r in records:
            counts["gender"][r.attrs.gender.value] += 1
            counts["education"][r.attrs.education.value] += 1
            if r.labels is not None:
                counts["age_bin"][r.labels.age_bin] += 1
        return cls(n_users=len(records), max_steps=max_steps, class_counts=counts)


@dataclass(frozen=True)
class Exclusion:
    user_id: str
    reason: str


@dataclass(frozen=True)
class Cohort:
    """Validated users (sorted by user_id), their stats and the users that were left out."""

    records: tuple[UserRecord, ...]
    stats: CohortStats
    exclusions: tuple[Exclusion, ...] = ()
    age_threshold: int = DEFAULT_AGE_THRESHOLD

    @classmethod
    def from_records(
        cls,
        records: Sequence[UserRecord],
        exclusions: Sequence[Exclusion] = (),
        age_threshold: int = DEFAULT_AGE_THRESHOLD,
    ) -> "Cohort":
        seen: set[str] = set()
        for r in records:
            if r.user_id in seen:
                raise CohortError(f"duplicate user_id {r.user_id}")
            seen.add(r.user_id)
        labelled = sorted(
            (derive_labels(r, age_threshold) for r in records), key=lambda r: r.user_id
        )
        return cls(
            records=tuple(labelled),
            stats=CohortStats.from_records(labelled),
            exclusions=tuple(exclusions),
            age_threshold=age_threshold,
        )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[UserRecord]:
        return iter(self.records)

    @property
    def user_ids(self) -> list[str]:
        return [r.user_id for r in self.records]

    def get(self, user_id: str) -> UserRecord:
        for r in self.records:
            if r.user_id == user_id:
                return r
        raise KeyError(user_id)

    def task_pool(self, attribute: str) -> list[UserRecord]:
        """Records taking part in the binary task of `attribute` (low education drops out)."""
        return [r for r in self.records if r.label(attribute) is not None]

    def labels(self, attribute: str) -> tuple[list[str], np.ndarray]:
        pool = self.task_pool(attribute)
        return [r.user_id for r in pool], np.array([r.label(attribute) for r in pool], dtype=int)

    def attribute_frame(self) -> pd.DataFrame:
        """Numeric attributes: age in years, education 0/1/2, gender 0 (male) / 1 (female)."""
        return pd.DataFrame(
            {
                "age": [float(r.attrs.age) for r in self.records],
                "education": [float(r.attrs.education.code) for r in self.records],
                "gender": [float(r.attrs.gender.code) for r in self.records],
            },
            index=pd.Index(self.user_ids, name="user_id"),
        )


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

def derive_labels(record: UserRecord, age_threshold: int = DEFAULT_AGE_THRESHOLD) -> UserRecord:
    """Attach binary labels; idempotent for a fixed threshold."""
    attrs = record.attrs
    labels = Labels(
        age_bin="old" if attrs.age >= age_threshold else "young",
        gender_bin=attrs.gender.value,
        edu_bin=None if attrs.education is Education.LOW else attrs.education.value,
    )
    return replace(record, labels=labels)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _read_table(path: str | Path, columns: list[str], numeric: bool = False) -> pd.DataFrame:
    """Read a CSV with the exact header `columns`; only user_id stays text when `numeric`."""
    path = Path(path)
    dtype = {"user_id": str} if numeric else str
    try:
        frame = pd.read_csv(path, dtype=dtype, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        return pd.DataFrame({c: pd.Series(dtype=str) for c in columns})
    except pd.errors.ParserError as e:
        raise CohortError(f"malformed CSV: {e}", path=str(path)) from e
    except OSError as e:
        raise CohortError(f"cannot read file: {e}", path=str(path)) from e

    if list(frame.columns) != columns:
        raise CohortError(
            f"expected header {','.join(columns)}, got {','.join(map(str, frame.columns))}",
            line=1,
            path=str(path),
        )
    for column in frame.columns:
        if frame[column].dtype == object:
            frame[column] = frame[column].astype(str).str.strip()
    return frame


def _first_bad_row(mask: np.ndarray) -> int | None:
    bad = np.flatnonzero(mask)
    return int(bad[0]) if bad.size else None


def _parse_steps(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Parse the long steps table into (user_ids, grid, filled) where missing periods are -1."""
    frame = _read_table(path, STEPS_COLUMNS, numeric=True)
    if frame.empty:
        return [], np.zeros((0, WEEK_LENGTH), dtype=np.int32), np.zeros(0, dtype=int)

    numbers = frame[["day", "period", "steps"]].apply(pd.to_numeric, errors="coerce")
    values = numbers.to_numpy(dtype=float)
    checks = [
        (frame["user_id"].to_numpy() == "", "empty user_id"),
        (np.isnan(values).any(axis=1), "non-numeric day, period or steps"),
        (np.nan_to_num(np.mod(values, 1)) != 0, "day, period and steps must be integers"),
        (~((values[:, 0] >= 0) & (values[:, 0] < DAYS_PER_WEEK)), "day out of range [0, 6]"),
        (
            ~((values[:, 1] >= 0) & (values[:, 1] < PERIODS_PER_DAY)),
            f"period out of range [0, {PERIODS_PER_DAY - 1}]",
        ),
        (values[:, 2] < 0, "steps must be non-negative"),
        (values[:, 2] > _INT32_MAX, f"steps exceed the int32 maximum {_INT32_MAX}"),
    ]
    for mask, reason in checks:
        if mask.ndim > 1:
            mask = mask.any(axis=1)
        row = _first_bad_row(mask)
        if row is not None:
            raise CohortError(f"malformed row: {reason}", line=row + 2, path=str(path))

    day = values[:, 0].astype(np.int64)
    period = values[:, 1].astype(np.int64)
    steps = values[:, 2].astype(np.int32)
    slot = day * PERIODS_PER_DAY + period

    codes, uniques = pd.factorize(frame["user_id"], sort=True)
    duplicated = pd.DataFrame({"user": codes, "slot": slot}).duplicated().to_numpy()
    row = _first_bad_row(duplicated)
    if row is not None:
        raise CohortError(
            f"duplicate row for user {frame['user_id'].iat[row]} "
            f"day {day[row]} period {period[row]}",
            line=row + 2,
            path=str(path),
        )

    grid = np.full((len(uniques), WEEK_LENGTH), -1, dtype=np.int32)
    grid[codes, slot] = steps
    filled = np.bincount(codes, minlength=len(uniques))
    return [str(u) for u in uniques], grid, filled


def _parse_attributes(path: str | Path) -> tuple[dict[str, Attributes], list[str]]:
    """Parse attributes; returns valid rows and the users whose rows have empty fields."""
    frame = _read_table(path, ATTRIBUTES_COLUMNS)
    attributes: dict[str, Attributes] = {}
    incomplete: list[str] = []
    seen: set[str] = set()
    for i, row in enumerate(frame.itertuples(index=False)):
        line = i + 2
        if row.user_id == "":
            raise CohortError("malformed row: empty user_id", line=line, path=str(path))
        if row.user_id in seen:
            raise CohortError(f"duplicate user_id {row.user_id}", line=line, path=str(path))
        seen.add(row.user_id)
        if "" in (row.gender, row.age, row.education):
            incomplete.append(row.user_id)
            continue
        try:
            age = float(row.age)
            attributes[row.user_id] = Attributes(
                gender=row.gender.lower(), age=age, education=row.education.lower()
            )
        except (ValueError, CohortError) as e:
            raise CohortError(f"malformed row: {e}", line=line, path=str(path)) from e
    return attributes, incomplete


def load_cohort(
    steps_file: str | Path,
    attrs_file: str | Path,
    age_threshold: int = DEFAULT_AGE_THRESHOLD,
    max_steps: int | None = None,
) -> Cohort:
    """
    Load and validate a cohort from the steps and attributes CSV files.

    Users with missing periods, missing attributes or counts above `max_steps` are excluded
    and listed in `Cohort.exclusions`; malformed rows and duplicates raise CohortError.
    """
    user_ids, grid, filled = _parse_steps(steps_file)
    attributes, incomplete_attrs = _parse_attributes(attrs_file)

    records: list[UserRecord] = []
    exclusions: list[Exclusion] = []
    for i, user_id in enumerate(user_ids):
        if filled[i] < WEEK_LENGTH:
            exclusions.append(
                Exclusion(user_id, f"incomplete step grid ({filled[i]} of {WEEK_LENGTH} periods)")
            )
            continue
        if user_id not in attributes:
            exclusions.append(Exclusion(user_id, "missing attributes"))
            continue
        counts = grid[i].copy()
        if max_steps is not None and counts.max() > max_steps:
            exclusions.append(Exclusion(user_id, f"exceeds cap ({counts.max()} > {max_steps})"))
            continue
        counts.setflags(write=False)
        records.append(UserRecord(StepSeries(user_id, counts), attributes[user_id]))

    known = set(user_ids)
    for user_id in sorted(set(attributes) | set(incomplete_attrs)):
        if user_id not in known:
            exclusions.append(Exclusion(user_id, "missing step data"))

    cohort = Cohort.from_records(records, exclusions, age_threshold)
    for excluded in exclusions:
        logger.warning(f"Excluded user {excluded.user_id}: {excluded.reason}")
    logger.info(f"✓ Loaded {len(cohort)} users ({len(exclusions)} excluded)")
    return cohort


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------

def steps_frame(records: Sequence[UserRecord]) -> pd.DataFrame:
    """Long-format steps table (`user_id,day,period,steps`) for `records`."""
    day = np.repeat(np.arange(DAYS_PER_WEEK), PERIODS_PER_DAY)
    period = np.tile(np.arange(PERIODS_PER_DAY), DAYS_PER_WEEK)
    n = len(records)
    return pd.DataFrame(
        {
            "user_id": np.repeat([r.user_id for r in records], WEEK_LENGTH),
            "day": np.tile(day, n),
            "period": np.tile(period, n),
            "steps": (
                np.concatenate([r.series.counts for r in records])
                if n
                else np.zeros(0, dtype=np.int32)
            ),
        },
        columns=STEPS_COLUMNS,
    )


def attributes_frame(records: Sequence[UserRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "user_id": [r.user_id for r in records],
            "gender": [r.attrs.gender.value for r in records],
            "age": [r.attrs.age for r in records],
            "education": [r.attrs.education.value for r in records],
        },
        columns=ATTRIBUTES_COLUMNS,
    )


def write_cohort(cohort: Cohort, steps_file: str | Path, attrs_file: str | Path) -> None:
    steps_frame(cohort.records).to_csv(steps_file, index=False)
    attributes_frame(cohort.records).to_csv(attrs_file, index=False)
    logger.info(f"✓ Wrote {len(cohort)} users to {steps_file} and {attrs_file}")


def write_exclusion_report(cohort: Cohort, path: str | Path) -> None:
    report = [{"user_id": e.user_id, "reason": e.reason} for e in cohort.exclusions]
    Path(path).write_text(json.dumps(report, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Attribute correlation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttributeCorrelation:
    """Pearson matrix; undefined coefficients (zero-variance columns) are NaN and listed."""

    matrix: pd.DataFrame
    undefined: tuple[tuple[str, str], ...] = ()


def pearson_matrix(frame: pd.DataFrame) -> AttributeCorrelation:
    columns = list(frame.columns)
    values = frame.to_numpy(dtype=float)
    centered = values - values.mean(axis=0)
    scale = np.sqrt((centered ** 2).sum(axis=0))

    k = len(columns)
    matrix = np.full((k, k), np.nan)
    undefined: list[tuple[str, str]] = []
    for i in range(k):
        for j in range(i, k):
            if scale[i] == 0 or scale[j] == 0:
                undefined.append((columns[i], columns[j]))
                continue
            if i == j:
                r = 1.0
            else:
                r = float(centered[:, i] @ centered[:, j] / (scale[i] * scale[j]))
                r = min(1.0, max(-1.0, r))
            matrix[i, j] = matrix[j, i] = r
    return AttributeCorrelation(
        matrix=pd.DataFrame(matrix, index=columns, columns=columns), undefined=tuple(undefined)
    )


def attribute_correlation(cohort: Cohort) -> AttributeCorrelation:
    """Pearson correlation between age, education (0/1/2) and gender (0/1)."""
    if len(cohort) < 2:
        raise CohortError(f"correlation needs at least 2 users, got {len(cohort)}")
    result = pearson_matrix(cohort.attribute_frame())
    for a, b in result.undefined:
        logger.warning(f"Correlation {a}/{b} is undefined (zero variance)")
    return result
