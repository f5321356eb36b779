import numpy as np
import pytest

from stepleak.config_synth import SynthConfig
from stepleak.core import WEEK_LENGTH, Attributes, Cohort, StepSeries, UserRecord
from stepleak.synth import generate


def make_record(
    user_id: str,
    counts=None,
    gender: str = "male",
    age: int = 40,
    education: str = "medium",
) -> UserRecord:
    if counts is None:
        counts = np.zeros(WEEK_LENGTH, dtype=np.int32)
    return UserRecord(
        series=StepSeries(user_id, np.asarray(counts)),
        attrs=Attributes(gender=gender, age=age, education=education),
    )


def random_counts(rng: np.random.Generator, rate: float = 1.0, cap: int = 30) -> np.ndarray:
    return np.minimum(rng.poisson(rate, size=WEEK_LENGTH), cap).astype(np.int32)


@pytest.fixture
def small_cohort() -> Cohort:
    """Twelve users with random counts; ages, genders and education levels alternate."""
    rng = np.random.default_rng(0)
    genders = ("male", "female")
    educations = ("medium", "high", "low")
    records = [
        make_record(
            f"user{i:02d}",
            random_counts(rng, rate=0.5 + 0.1 * i),
            gender=genders[i % 2],
            age=35 + 5 * i,
            education=educations[i % 3],
        )
        for i in range(12)
    ]
    return Cohort.from_records(records)


@pytest.fixture(scope="session")
def synthetic_cohort() -> Cohort:
    return generate(SynthConfig(n_users=40, seed=3)).cohort
