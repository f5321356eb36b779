"""
Configuration for the synthetic cohort generator.

Every default is listed here so a `synth:` config section can override any of them:

    synth:
      n_users: 500
      seed: 7
      age_effect: 0.0
"""
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 200
    seed: int = 0

    # Attributes
    age_min: int = 30
    age_max: int = 91
    female_fraction: float = 0.56
    low_education_fraction: float = 0.018
    # P(high | not low) = sigmoid(education_intercept - education_age_coupling * z_age)
    education_intercept: float = 0.0
    education_age_coupling: float = 0.35

    # Mean steps per 15 s period in the 00-08, 08-16 and 16-24 blocks
    block_rates: tuple[float, float, float] = (0.05, 1.8, 2.4)
    # Rates are scaled by exp(-age_effect * z_age), z_age = (age - age_center) / age_scale
    age_effect: float = 0.35
    age_center: float = 55.0
    age_scale: float = 15.0

    # Walking / resting gate: stationary share of walking periods and mean walking run
    active_fraction: float = 0.08
    bout_periods: float = 8.0
    # Women's walking runs are this much longer
    female_bout_scale: float = 1.3

    # Per-user hourly profile, stable across days (variance of the log multiplier)
    fingerprint_variance: float = 0.25
    # Standard deviation of the log multiplier per day and per (day, hour)
    day_noise: float = 0.1
    hour_noise: float = 0.2

    # Ceiling of one period's count
    cap: int = 45

    def __post_init__(self):
        object.__setattr__(self, "block_rates", tuple(float(r) for r in self.block_rates))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        problems = []
        if self.n_users < 1:
            problems.append(f"n_users: must be >= 1, got {self.n_users}")
        if not 18 <= self.age_min <= self.age_max <= 120:
            problems.append(
                f"age_min/age_max: need 18 <= age_min <= age_max <= 120, "
                f"got {self.age_min}..{self.age_max}"
            )
        for name in ("female_fraction", "low_education_fraction"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                problems.append(f"{name}: must be in [0, 1], got {value}")
        if len(self.block_rates) != 3:
            problems.append(f"block_rates: need 3 rates, got {len(self.block_rates)}")
        elif min(self.block_rates) < 0:
            problems.append(f"block_rates: rates must be >= 0, got {list(self.block_rates)}")
        if not 0 < self.active_fraction <= 1:
            problems.append(f"active_fraction: must be in (0, 1], got {self.active_fraction}")
        if self.bout_periods < 1:
            problems.append(f"bout_periods: must be >= 1, got {self.bout_periods}")
        if self.female_bout_scale <= 0:
            problems.append(f"female_bout_scale: must be > 0, got {self.female_bout_scale}")
        if self.age_scale <= 0:
            problems.append(f"age_scale: must be > 0, got {self.age_scale}")
        for name in ("fingerprint_variance", "day_noise", "hour_noise"):
            if getattr(self, name) < 0:
                problems.append(f"{name}: must be >= 0, got {getattr(self, name)}")
        for name in ("age_effect", "education_intercept", "education_age_coupling"):
            value = getattr(self, name)
            if value != value or value in (float("inf"), float("-inf")):
                problems.append(f"{name}: must be finite, got {value}")
        if self.cap < 1:
            problems.append(f"cap: must be >= 1, got {self.cap}")
        return problems

    def to_dict(self) -> dict:
        data = asdict(self)
        data["block_rates"] = list(self.block_rates)
        return data
