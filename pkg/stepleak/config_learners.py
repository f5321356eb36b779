"""
Model specifications, registered by kind name.

A YAML mapping selects a kind through its `type` key:

    classifiers:
      - type: logreg
        epochs: 50
      - type: random_forest
        n_trees: 100
"""
import abc
from dataclasses import asdict, dataclass
from typing import Any, Mapping

import draccus

# Hidden layers of the three dense classifiers as (fraction of input length, dropout after)
MLP_SHAPES: dict[str, tuple[tuple[float, bool], ...]] = {
    "d1": ((1 / 4, True),),
    "d2": ((1 / 2, True), (1 / 8, False)),
    "d3": ((1 / 2, True), (1 / 4, True), (1 / 16, False)),
}


@dataclass
class ModelSpec(draccus.ChoiceRegistry, abc.ABC):
    """Base class for model specifications; `seed` drives every random choice of a fit."""

    seed: int = 0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            return [f"seed: must be an integer, got {self.seed!r}"]
        return []

    @property
    def type(self) -> str:
        return self.get_choice_name(self.__class__)

    @property
    def label(self) -> str:
        """Readable identifier used in results and file names."""
        return self.type

    @property
    def supervised(self) -> bool:
        return True

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.type, **asdict(self)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelSpec":
        data = dict(data)
        kind = data.pop("type", None)
        known = ModelSpec.get_known_choices()
        if kind not in known:
            raise ValueError(f"type: unknown model kind {kind!r}, expected one of {sorted(known)}")
        return known[kind](**data)


@dataclass
class GradientSpec(ModelSpec):
    """Shared hyperparameters of the models trained with Adam."""

    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    l2: float = 0.0

    def problems(self) -> list[str]:
        problems = super().problems()
        if not self.learning_rate > 0:
            problems.append(f"learning_rate: must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            problems.append(f"epochs: must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.l2 < 0:
            problems.append(f"l2: must be >= 0, got {self.l2}")
        return problems


def _dropout_problems(dropout: float) -> list[str]:
    if not 0 <= dropout < 1:
        return [f"dropout: must be in [0, 1), got {dropout}"]
    return []


@ModelSpec.register_subclass("logreg")
@dataclass
class LogRegSpec(GradientSpec):
    pass


@ModelSpec.register_subclass("linear_svm")
@dataclass
class LinearSVMSpec(GradientSpec):
    l2: float = 1e-3


@ModelSpec.register_subclass("mlp")
@dataclass
class MLPSpec(GradientSpec):
    # d1: (l, l/4, d, 1), d2: (l, l/2, d, l/8, 1), d3: (l, l/2, d, l/4, d, l/16, 1)
    shape: str = "d1"
    dropout: float = 0.2
    min_hidden: int = 1

    @property
    def label(self) -> str:
        return f"mlp_{self.shape}"

    def problems(self) -> list[str]:
        problems = super().problems() + _dropout_problems(self.dropout)
        if self.shape not in MLP_SHAPES:
            problems.append(f"shape: must be one of {sorted(MLP_SHAPES)}, got {self.shape!r}")
        if self.min_hidden < 1:
            problems.append(f"min_hidden: must be >= 1, got {self.min_hidden}")
        return problems


@ModelSpec.register_subclass("autoencoder")
@dataclass
class AutoencoderSpec(GradientSpec):
    """Dense autoencoder; layer sizes follow from the input length."""

    @property
    def supervised(self) -> bool:
        return False


@ModelSpec.register_subclass("siamese_dense")
@dataclass
class SiameseSpec(GradientSpec):
    """Two shared dense layers of l/2 and l/4 units, |difference|, sigmoid output."""

    dropout: float = 0.0

    def problems(self) -> list[str]:
        return super().problems() + _dropout_problems(self.dropout)


@ModelSpec.register_subclass("random_forest")
@dataclass
class ForestSpec(ModelSpec):
    n_trees: int = 100
    max_depth: int | None = None
    # "sqrt", "all", an integer count or a fraction in (0, 1]
    max_features: str | int | float = "sqrt"
    min_samples_split: int = 2
    bootstrap: bool = True

    def problems(self) -> list[str]:
        problems = super().problems()
        if self.n_trees < 1:
            problems.append(f"n_trees: must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            problems.append(f"max_depth: must be >= 1 or null, got {self.max_depth}")
        if self.min_samples_split < 2:
            problems.append(f"min_samples_split: must be >= 2, got {self.min_samples_split}")
        if isinstance(self.max_features, str):
            if self.max_features not in ("sqrt", "all"):
                problems.append(
                    f"max_features: must be 'sqrt', 'all' or a number, got {self.max_features!r}"
                )
        elif not self.max_features > 0:
            problems.append(f"max_features: must be > 0, got {self.max_features}")
        return problems


@dataclass
class UnavailableSpec(ModelSpec):
    """
    Registry slot for a model variant that stepleak does not implement.

    Constructing one succeeds so a config naming it can be diagnosed; fitting it raises
    NotImplementedVariantError.
    """

    def __post_init__(self):
        pass

    def problems(self) -> list[str]:
        return [f"type: {self.type!r} is not implemented (available: dense Siamese network)"]


@ModelSpec.register_subclass("siamese_cnn")
@dataclass
class SiameseCNNSpec(UnavailableSpec):
    pass


@ModelSpec.register_subclass("siamese_lstm")
@dataclass
class SiameseLSTMSpec(UnavailableSpec):
    pass


@ModelSpec.register_subclass("siamese_bilstm")
@dataclass
class SiameseBiLSTMSpec(UnavailableSpec):
    pass


@ModelSpec.register_subclass("siamese_attention")
@dataclass
class SiameseAttentionSpec(UnavailableSpec):
    pass


UNAVAILABLE_KINDS = ("siamese_cnn", "siamese_lstm", "siamese_bilstm", "siamese_attention")
