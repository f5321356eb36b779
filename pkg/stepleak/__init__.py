# Import configs FIRST so every model kind is registered before anything parses a config
from .config_features import FEATURE_PRESETS, FeatureConfig
from .config_learners import ModelSpec
from .config_synth import SynthConfig

__version__ = "0.1.0"

# Then the implementations
from .core import Cohort, load_cohort  # noqa: E402
from .learners import fit, load_model, predict_score, save_model  # noqa: E402

__all__ = [
    "FEATURE_PRESETS",
    "Cohort",
    "FeatureConfig",
    "ModelSpec",
    "SynthConfig",
    "fit",
    "load_cohort",
    "load_model",
    "predict_score",
    "save_model",
]
