"""
Configuration for feature extraction.
"""
from dataclasses import asdict, dataclass
from itertools import combinations

SCOPES = ("week", "day", "actions")
METHODS = ("raw", "statistical", "distributional")
STATISTICS = ("sum", "max", "mean", "median", "std")
NORMALIZATIONS = ("none", "feature_wise", "vector_wise", "prob_dist")

DAY_WINDOWS = (12, 24, 48, 60, 120, 240, 480, 720, 960, 1440, 1920, 2880, 5760)
WEEK_WINDOWS = (240, 480, 720, 960, 1440, 1920, 2880, 5760, 40320)
DIST_WINDOWS = (240, 720, 1440, 2880)
DIST_BUCKETS = (2, 4, 8)


@dataclass(frozen=True)
class FeatureConfig:
    """One feature vector type: scope, extraction method, its parameters and normalization."""

    scope: str = "week"
    method: str = "statistical"
    # Statistic subset; stored in canonical (sum, max, mean, median, std) order
    stats: tuple[str, ...] = ("max",)
    # Window size in 15 s periods; must be None for raw vectors and actions
    window: int | None = 720
    bucket: int = 2
    normalization: str = "feature_wise"

    # Replace vectors by the bottleneck of a dense autoencoder fitted on training data
    autoencode: bool = False
    # Raw action payloads are zero-padded / truncated to this many periods
    action_length: int = 240
    # Zero-step periods that separate two actions (2 minutes)
    rest_periods: int = 8

    name: str | None = None

    def __post_init__(self):
        stats = tuple(s for s in STATISTICS if s in set(self.stats or ()))
        unknown = sorted(set(self.stats or ()) - set(STATISTICS))
        object.__setattr__(self, "stats", stats)
        problems = self.problems(unknown_stats=unknown)
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self, unknown_stats: list[str] = ()) -> list[str]:
        problems = []
        if self.scope not in SCOPES:
            problems.append(f"scope: must be one of {list(SCOPES)}, got {self.scope!r}")
        if self.method not in METHODS:
            problems.append(f"method: must be one of {list(METHODS)}, got {self.method!r}")
        if self.normalization not in NORMALIZATIONS:
            problems.append(
                f"normalization: must be one of {list(NORMALIZATIONS)}, got {self.normalization!r}"
            )
        if unknown_stats:
            problems.append(f"stats: unknown statistics {unknown_stats}")
        if self.method == "statistical" and not self.stats:
            problems.append("stats: statistical method needs at least one statistic")
        if self.method == "distributional" and self.bucket < 1:
            problems.append(f"bucket: must be >= 1, got {self.bucket}")
        if self.scope == "actions" or self.method == "raw":
            if self.window is not None:
                problems.append(
                    f"window: must be null for {self.scope} {self.method} vectors, "
                    f"got {self.window}"
                )
        elif self.window is None or self.window < 1:
            problems.append(f"window: must be >= 1, got {self.window}")
        if self.action_length < 1:
            problems.append(f"action_length: must be >= 1, got {self.action_length}")
        if self.rest_periods < 1:
            problems.append(f"rest_periods: must be >= 1, got {self.rest_periods}")
        return problems

    @property
    def label(self) -> str:
        """Readable identifier used in results and file names."""
        if self.name:
            return self.name
        parts = [self.scope, self.method]
        if self.method == "statistical":
            parts.append("+".join(self.stats))
        if self.window is not None:
            parts.append(f"w{self.window}")
        if self.method == "distributional":
            parts.append(f"b{self.bucket}")
        parts.append(self.normalization)
        if self.autoencode:
            parts.append("ae")
        return "_".join(parts)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["stats"] = list(self.stats)
        return data


FEATURE_PRESETS: dict[str, FeatureConfig] = {
    "raw_week": FeatureConfig(scope="week", method="raw", window=None),
    "raw_day": FeatureConfig(scope="day", method="raw", window=None),
    "max_w240": FeatureConfig(stats=("max",), window=240),
    "max_w720": FeatureConfig(stats=("max",), window=720),
    "max_median_w720": FeatureConfig(stats=("max", "median"), window=720),
    "dist_b2_w240": FeatureConfig(method="distributional", window=240, bucket=2),
    "dist_b2_w720_day": FeatureConfig(scope="day", method="distributional", window=720, bucket=2),
    "dist_b4_w720_day": FeatureConfig(scope="day", method="distributional", window=720, bucket=4),
    "actions_raw": FeatureConfig(scope="actions", method="raw", window=None),
    "actions_stats": FeatureConfig(
        scope="actions", method="statistical", stats=STATISTICS, window=None
    ),
    "actions_dist": FeatureConfig(scope="actions", method="distributional", window=None, bucket=2),
}


def audit_grid(normalizations: tuple[str, ...] = ("feature_wise", "vector_wise", "prob_dist")):
    """Every fixed-window feature type of the full sweep, once per normalization."""
    subsets = [
        combo for k in range(1, len(STATISTICS) + 1) for combo in combinations(STATISTICS, k)
    ]
    grid = []
    for norm in normalizations:
        grid.append(FeatureConfig(scope="week", method="raw", window=None, normalization=norm))
        grid.append(FeatureConfig(scope="day", method="raw", window=None, normalization=norm))
        for scope, windows in (("day", DAY_WINDOWS), ("week", WEEK_WINDOWS)):
            for w in windows:
                for subset in subsets:
                    grid.append(
                        FeatureConfig(scope=scope, stats=subset, window=w, normalization=norm)
                    )
        for scope in ("week", "day"):
            for w in DIST_WINDOWS:
                for b in DIST_BUCKETS:
                    grid.append(
                        FeatureConfig(
                            scope=scope,
                            method="distributional",
                            window=w,
                            bucket=b,
                            normalization=norm,
                        )
                    )
    return grid
