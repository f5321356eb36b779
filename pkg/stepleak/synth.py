"""
Synthetic cohorts with planted attribute and identity signals.

Each user gets latent attributes first, then an hourly rate curve

    rate(day, hour) = block rate x exp(-age_effect * z_age) x fingerprint[hour]
                      x day level x (day, hour) level

and per-period counts: zero while resting, Poisson(rate / active_fraction) capped at
`cap` while walking, so the expected count is rate(day, hour). Random draws for user i
come from generators seeded with (seed, i), so users can be generated in any order.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.special import expit

from .config_synth import SynthConfig
from .core import (
    DAYS_PER_WEEK,
    DEFAULT_AGE_THRESHOLD,
    PERIODS_PER_DAY,
    WEEK_LENGTH,
    Attributes,
    Cohort,
    Education,
    Gender,
    StepSeries,
    UserRecord,
    pearson_matrix,
    write_cohort,
)
from .features import segment_actions

logger = logging.getLogger(__name__)

HOURS_PER_DAY = 24
PERIODS_PER_HOUR = PERIODS_PER_DAY // HOURS_PER_DAY

SIGNAL_STATISTICS = ("max_cadence", "action_length", "mean_steps")


@dataclass(frozen=True)
class UserProfile:
    """Ground-truth latents of one synthetic user."""

    user_id: str
    age: int
    gender: Gender
    education: Education
    age_z: float
    rate_scale: float
    bout_periods: float
    fingerprint: np.ndarray


@dataclass(frozen=True)
class SyntheticCohort:
    cohort: Cohort
    profiles: tuple[UserProfile, ...]
    config: SynthConfig

    def latent_frame(self) -> pd.DataFrame:
        return latent_frame(self.profiles)


def _lognormal_levels(rng: np.random.Generator, sigma: float, size) -> np.ndarray:
    """Mean-one log-normal multipliers."""
    if sigma == 0:
        return np.ones(size)
    return np.exp(sigma * rng.standard_normal(size) - sigma**2 / 2)


def sample_profile(config: SynthConfig, index: int) -> UserProfile:
    rng = np.random.default_rng([config.seed, index, 0])
    age = int(rng.integers(config.age_min, config.age_max + 1))
    gender = Gender.FEMALE if rng.random() < config.female_fraction else Gender.MALE
    z = (age - config.age_center) / config.age_scale

    if rng.random() < config.low_education_fraction:
        education = Education.LOW
    else:
        p_high = expit(config.education_intercept - config.education_age_coupling * z)
        education = Education.HIGH if rng.random() < p_high else Education.MEDIUM

    fingerprint = _lognormal_levels(rng, np.sqrt(config.fingerprint_variance), HOURS_PER_DAY)
    bout = config.bout_periods * (config.female_bout_scale if gender is Gender.FEMALE else 1.0)
    return UserProfile(
        user_id=f"u{index:05d}",
        age=age,
        gender=gender,
        education=education,
        age_z=float(z),
        rate_scale=float(np.exp(-config.age_effect * z)),
        bout_periods=float(bout),
        fingerprint=fingerprint,
    )


def sample_profiles(config: SynthConfig) -> list[UserProfile]:
    """Latents of every user, without drawing any step counts."""
    return [sample_profile(config, i) for i in range(config.n_users)]


def expected_rates(
    profile: UserProfile,
    config: SynthConfig,
    day_levels: np.ndarray | None = None,
    hour_levels: np.ndarray | None = None,
) -> np.ndarray:
    """Expected steps per period as a (7, 5760) array."""
    blocks = np.repeat(np.asarray(config.block_rates), HOURS_PER_DAY // 3)
    hourly = np.tile(blocks * profile.rate_scale * profile.fingerprint, (DAYS_PER_WEEK, 1))
    if day_levels is not None:
        hourly = hourly * day_levels[:, None]
    if hour_levels is not None:
        hourly = hourly * hour_levels
    return np.repeat(hourly, PERIODS_PER_HOUR, axis=1)


def activity_mask(
    rng: np.random.Generator, length: int, active_fraction: float, bout_periods: float
) -> np.ndarray:
    """Alternating walking / resting runs with geometric lengths."""
    if active_fraction >= 1:
        return np.ones(length, dtype=bool)
    rest_mean = max(1.0, bout_periods * (1 - active_fraction) / active_fraction)
    cycle = bout_periods + rest_mean
    runs: list[np.ndarray] = []
    states: list[np.ndarray] = []
    total = 0
    first_active = rng.random() < active_fraction
    while total < length:
        m = int(length / cycle) + 8
        walk = rng.geometric(1.0 / bout_periods, size=m)
        rest = rng.geometric(1.0 / rest_mean, size=m)
        pair = np.column_stack([walk, rest] if first_active else [rest, walk]).ravel()
        runs.append(pair)
        states.append(np.tile([first_active, not first_active], m))
        total += int(pair.sum())
    return np.repeat(np.concatenate(states), np.concatenate(runs))[:length]


def generate_counts(profile: UserProfile, config: SynthConfig, index: int) -> np.ndarray:
    """Read-only int32 step counts of one user's week."""
    rng = np.random.default_rng([config.seed, index, 1])
    day_levels = _lognormal_levels(rng, config.day_noise, DAYS_PER_WEEK)
    hour_levels = _lognormal_levels(rng, config.hour_noise, (DAYS_PER_WEEK, HOURS_PER_DAY))
    rates = expected_rates(profile, config, day_levels, hour_levels).ravel()
    active = activity_mask(rng, WEEK_LENGTH, config.active_fraction, profile.bout_periods)
    counts = rng.poisson(np.where(active, rates / config.active_fraction, 0.0))
    counts = np.minimum(counts, config.cap).astype(np.int32)
    counts.setflags(write=False)
    return counts


def generate(
    config: SynthConfig, jobs: int = 1, age_threshold: int = DEFAULT_AGE_THRESHOLD
) -> SyntheticCohort:
    """
    Draw a cohort; the same config always gives a bitwise-identical cohort, whatever `jobs`.
    """
    profiles = sample_profiles(config)
    counts = Parallel(n_jobs=jobs)(
        delayed(generate_counts)(p, config, i) for i, p in enumerate(profiles)
    )
    records = [
        UserRecord(
            series=StepSeries(p.user_id, c),
            attrs=Attributes(gender=p.gender, age=p.age, education=p.education),
        )
        for p, c in zip(profiles, counts)
    ]
    cohort = Cohort.from_records(records, age_threshold=age_threshold)
    logger.info(f"✓ Generated {len(cohort)} synthetic users (seed {config.seed})")
    return SyntheticCohort(cohort=cohort, profiles=tuple(profiles), config=config)


def latent_frame(profiles) -> pd.DataFrame:
    frame = pd.DataFrame(
        {
            "user_id": [p.user_id for p in profiles],
            "age": [p.age for p in profiles],
            "gender": [p.gender.value for p in profiles],
            "education": [p.education.value for p in profiles],
            "age_z": [p.age_z for p in profiles],
            "rate_scale": [p.rate_scale for p in profiles],
            "bout_periods": [p.bout_periods for p in profiles],
        }
    )
    fingerprints = np.vstack([p.fingerprint for p in profiles]) if profiles else np.zeros((0, 24))
    for h in range(HOURS_PER_DAY):
        frame[f"fingerprint_{h}"] = fingerprints[:, h]
    return frame


def write_synthetic(synthetic: SyntheticCohort, out_dir: str | Path) -> dict[str, Path]:
    """steps.csv and attributes.csv in the cohort formats, plus latents.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "steps": out_dir / "steps.csv",
        "attributes": out_dir / "attributes.csv",
        "latents": out_dir / "latents.csv",
    }
    write_cohort(synthetic.cohort, paths["steps"], paths["attributes"])
    synthetic.latent_frame().to_csv(paths["latents"], index=False)
    return paths


# ---------------------------------------------------------------------------
# Planted signal report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignalReport:
    attribute: str
    statistic: str
    class_means: dict[int, float]
    overall_mean: float
    # (mean of class 1 - mean of class 0) / overall mean
    separation: float
    cohens_d: float
    age_education_correlation: float | None

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "statistic": self.statistic,
            "class_means": {str(k): v for k, v in self.class_means.items()},
            "overall_mean": self.overall_mean,
            "separation": self.separation,
            "cohens_d": self.cohens_d,
            "age_education_correlation": self.age_education_correlation,
        }


def user_statistic(counts: np.ndarray, statistic: str) -> float:
    if statistic == "max_cadence":
        # mean of the 3-hour window maxima
        return float(counts.reshape(-1, 720).max(axis=1).mean())
    if statistic == "action_length":
        actions = segment_actions(counts)
        return float(np.mean([a.length for a in actions])) if actions else 0.0
    if statistic == "mean_steps":
        return float(counts.mean())
    raise ValueError(f"Unknown statistic: {statistic}")


def planted_signal_strength(
    data: SyntheticCohort | Cohort, attribute: str, statistic: str | None = None
) -> SignalReport:
    """
    Realized separation of the two classes of `attribute` in a per-user statistic
    (walking-run length for gender, window maxima otherwise), and the realized
    age-education correlation.
    """
    cohort = data.cohort if isinstance(data, SyntheticCohort) else data
    statistic = statistic or ("action_length" if attribute == "gender" else "max_cadence")
    user_ids, y = cohort.labels(attribute)
    values = np.array([user_statistic(cohort.get(u).series.counts, statistic) for u in user_ids])

    means = {c: float(values[y == c].mean()) if np.any(y == c) else float("nan") for c in (0, 1)}
    overall = float(values.mean()) if values.size else 0.0
    diff = means[1] - means[0]
    separation = diff / overall if overall > 0 else 0.0
    n0, n1 = int(np.sum(y == 0)), int(np.sum(y == 1))
    cohens_d = 0.0
    if n0 > 1 and n1 > 1:
        pooled = np.sqrt(
            ((n0 - 1) * values[y == 0].var(ddof=1) + (n1 - 1) * values[y == 1].var(ddof=1))
            / (n0 + n1 - 2)
        )
        cohens_d = float(diff / pooled) if pooled > 0 else 0.0

    correlation = None
    if len(cohort) >= 2:
        r = pearson_matrix(cohort.attribute_frame()).matrix.loc["age", "education"]
        correlation = None if np.isnan(r) else float(r)

    report = SignalReport(
        attribute=attribute,
        statistic=statistic,
        class_means=means,
        overall_mean=overall,
        separation=float(separation),
        cohens_d=cohens_d,
        age_education_correlation=correlation,
    )
    logger.info(
        f"Planted {attribute} signal ({statistic}): separation {report.separation:+.3f}, "
        f"d = {report.cohens_d:+.2f}"
    )
    return report


def profile_correlation(profiles) -> float:
    """Age-education (0/1/2) Pearson correlation of sampled latents."""
    frame = pd.DataFrame(
        {
            "age": [float(p.age) for p in profiles],
            "education": [float(p.education.code) for p in profiles],
        }
    )
    return float(pearson_matrix(frame).matrix.loc["age", "education"])
