"""
Experiment configuration files.

One YAML file describes a whole run:

    seed: 0
    synth: {n_users: 200}          # or  data: {steps: steps.csv, attributes: attributes.csv}
    presets:
      dist_b2_w1440_day: {scope: day, method: distributional, window: 1440, bucket: 2}
    features: [max_median_w720, dist_b2_w1440_day]
    infer:
      attributes: [age, gender, education]
      features: [max_median_w720]
      classifiers: [{type: logreg}, {type: random_forest, n_trees: 100}]
    link:
      features: [dist_b2_w720_day]
      metrics: [euclidean, cosine]
      models: [{type: random_forest}, {type: siamese_dense}]

Validation collects every problem before anything runs; each diagnostic starts with the
dotted path of the offending field (`infer.classifiers[1].type: ...`).
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .attrinf import TaskSpec
from .config_features import FEATURE_PRESETS, FeatureConfig
from .config_learners import ModelSpec, UnavailableSpec
from .config_synth import SynthConfig
from .core import ATTRIBUTES, DEFAULT_AGE_THRESHOLD
from .errors import ConfigError
from .linkage import METRICS, LinkTask

logger = logging.getLogger(__name__)

SECTIONS = ("seed", "output_dir", "data", "synth", "presets", "features", "infer", "link", "report")


@dataclass(frozen=True)
class DataSource:
    steps: Path
    attributes: Path
    age_threshold: int = DEFAULT_AGE_THRESHOLD
    max_steps: int | None = None


@dataclass(frozen=True)
class InferSection:
    attributes: tuple[str, ...]
    # Template task; `attribute` is replaced for every entry of `attributes`
    task: TaskSpec
    transfer: tuple[tuple[str, str], ...] = ()

    def tasks(self) -> list[TaskSpec]:
        return [replace(self.task, attribute=a) for a in self.attributes]


@dataclass(frozen=True)
class ReportSection:
    pca_features: FeatureConfig = FEATURE_PRESETS["raw_week"]
    pca_attributes: tuple[str, ...] = ATTRIBUTES


@dataclass(frozen=True)
class ExperimentConfig:
    source: DataSource | SynthConfig
    seed: int = 0
    output_dir: Path | None = None
    presets: dict[str, FeatureConfig] = field(default_factory=dict)
    features: tuple[FeatureConfig, ...] = ()
    infer: InferSection | None = None
    link: LinkTask | None = None
    report: ReportSection = field(default_factory=ReportSection)
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict[str, Any]) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Parsing helpers (each appends diagnostics instead of raising)
# ---------------------------------------------------------------------------

class _Diagnostics(list):
    def add(self, path: str, error: Exception | str) -> None:
        for message in str(error).split("; "):
            field_prefixed = ":" in message.split(" ")[0]
            self.append(f"{path}.{message}" if field_prefixed else f"{path}: {message}")


def _check_keys(data: Any, cls, path: str, diagnostics: _Diagnostics, extra=()) -> bool:
    if not isinstance(data, dict):
        diagnostics.append(f"{path}: expected a mapping, got {type(data).__name__}")
        return False
    known = {f.name for f in fields(cls) if f.init} | set(extra)
    unknown = sorted(set(data) - known)
    if unknown:
        diagnostics.append(f"{path}: unknown field(s) {unknown}")
        return False
    return True


def _build(cls, data: dict, path: str, diagnostics: _Diagnostics):
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        diagnostics.add(path, e)
        return None


def _feature_config(
    entry: Any, presets: dict[str, FeatureConfig], path: str, diagnostics: _Diagnostics
) -> FeatureConfig | None:
    if isinstance(entry, str):
        if entry in presets:
            return presets[entry]
        diagnostics.append(f"{path}: unknown feature preset {entry!r}")
        return None
    if not _check_keys(entry, FeatureConfig, path, diagnostics):
        return None
    data = dict(entry)
    if "stats" in data and isinstance(data["stats"], list):
        data["stats"] = tuple(data["stats"])
    return _build(FeatureConfig, data, path, diagnostics)


def _feature_list(entries, presets, path, diagnostics) -> tuple[FeatureConfig, ...]:
    if not isinstance(entries, list) or not entries:
        diagnostics.append(f"{path}: expected a non-empty list of presets or feature configs")
        return ()
    configs = [
        _feature_config(e, presets, f"{path}[{i}]", diagnostics) for i, e in enumerate(entries)
    ]
    return tuple(c for c in configs if c is not None)


def _model_spec(entry: Any, path: str, diagnostics: _Diagnostics) -> ModelSpec | None:
    if isinstance(entry, str):
        entry = {"type": entry}
    if not isinstance(entry, dict):
        diagnostics.append(f"{path}: expected a mapping with a `type`, got {type(entry).__name__}")
        return None
    known = ModelSpec.get_known_choices()
    kind = entry.get("type")
    if kind not in known:
        diagnostics.append(
            f"{path}.type: unknown model kind {kind!r}, expected one of {sorted(known)}"
        )
        return None
    cls = known[kind]
    data = {k: v for k, v in entry.items() if k != "type"}
    if not _check_keys(data, cls, path, diagnostics):
        return None
    spec = _build(cls, data, path, diagnostics)
    if isinstance(spec, UnavailableSpec):
        diagnostics.add(path, "; ".join(spec.problems()))
        return None
    return spec


def _model_list(entries, path, diagnostics) -> tuple[ModelSpec, ...]:
    if entries is None:
        return ()
    if not isinstance(entries, list):
        diagnostics.append(f"{path}: expected a list of model specs")
        return ()
    specs = [_model_spec(e, f"{path}[{i}]", diagnostics) for i, e in enumerate(entries)]
    return tuple(s for s in specs if s is not None)


def _int_field(section: dict, key: str, default, path: str, diagnostics: _Diagnostics):
    value = section.get(key, default)
    if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
        diagnostics.append(f"{path}.{key}: must be an integer, got {value!r}")
        return default
    return value


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------

def _parse_source(raw: dict, base_dir: Path, seed: int, diagnostics: _Diagnostics):
    has_data, has_synth = "data" in raw, "synth" in raw
    if not has_data and not has_synth:
        diagnostics.append("data: no data source (give a `data` or a `synth` section)")
        return None
    if has_data and has_synth:
        diagnostics.append("data: exactly one data source allowed, got both `data` and `synth`")
        return None
    if has_synth:
        section = raw["synth"] or {}
        if not _check_keys(section, SynthConfig, "synth", diagnostics):
            return None
        data = dict(section)
        data.setdefault("seed", seed)
        if "block_rates" in data and isinstance(data["block_rates"], list):
            data["block_rates"] = tuple(data["block_rates"])
        return _build(SynthConfig, data, "synth", diagnostics)

    section = raw["data"]
    if not _check_keys(section, DataSource, "data", diagnostics):
        return None
    missing = [k for k in ("steps", "attributes") if not section.get(k)]
    for key in missing:
        diagnostics.append(f"data.{key}: path is required")
    if missing:
        return None
    age_threshold = _int_field(
        section, "age_threshold", DEFAULT_AGE_THRESHOLD, "data", diagnostics
    )
    max_steps = _int_field(section, "max_steps", None, "data", diagnostics)
    return DataSource(
        steps=(base_dir / section["steps"]),
        attributes=(base_dir / section["attributes"]),
        age_threshold=age_threshold,
        max_steps=max_steps,
    )


def _parse_presets(raw: dict, diagnostics: _Diagnostics) -> dict[str, FeatureConfig]:
    presets = dict(FEATURE_PRESETS)
    section = raw.get("presets") or {}
    if not isinstance(section, dict):
        diagnostics.append("presets: expected a mapping of name -> feature config")
        return presets
    for name, entry in section.items():
        path = f"presets.{name}"
        if name in FEATURE_PRESETS:
            diagnostics.append(f"{path}: name collides with the built-in preset {name!r}")
            continue
        if not isinstance(entry, dict):
            diagnostics.append(f"{path}: expected a feature config mapping")
            continue
        config = _feature_config({"name": name, **entry}, presets, path, diagnostics)
        if config is not None:
            presets[name] = config
    return presets


def _as_tuple(value) -> tuple:
    if value is None:
        return ()
    return (value,) if isinstance(value, str) else tuple(value)


def _task_options(section: dict, seed: int, keys: tuple[str, ...]) -> dict:
    options = {k: section[k] for k in keys if k in section}
    options["seed"] = section.get("seed", seed)
    return options


def _parse_infer(raw: dict, presets, seed: int, diagnostics: _Diagnostics) -> InferSection | None:
    section = raw.get("infer")
    if section is None:
        return None
    extra = ("attributes", "transfer")
    if not _check_keys(section, TaskSpec, "infer", diagnostics, extra=extra):
        return None
    if "attribute" in section:
        diagnostics.append("infer.attribute: use the `attributes` list")
        return None

    attributes = _as_tuple(section.get("attributes", ATTRIBUTES))
    if not attributes:
        diagnostics.append("infer.attributes: at least one attribute is required")
    for i, a in enumerate(attributes):
        if a not in ATTRIBUTES:
            diagnostics.append(
                f"infer.attributes[{i}]: must be one of {list(ATTRIBUTES)}, got {a!r}"
            )
    features = _feature_list(
        section.get("features", ["max_median_w720"]), presets, "infer.features", diagnostics
    )
    classifiers = _model_list(
        section.get("classifiers", [{"type": "logreg"}]), "infer.classifiers", diagnostics
    )

    transfer = []
    for i, entry in enumerate(section.get("transfer") or []):
        path = f"infer.transfer[{i}]"
        if not isinstance(entry, dict) or {"source", "target"} - set(entry):
            diagnostics.append(f"{path}: expected a mapping with `source` and `target`")
        elif entry["source"] not in ATTRIBUTES or entry["target"] not in ATTRIBUTES:
            diagnostics.append(f"{path}: source and target must be in {list(ATTRIBUTES)}")
        elif entry["source"] == entry["target"]:
            diagnostics.append(f"{path}: source and target must differ")
        else:
            transfer.append((entry["source"], entry["target"]))

    options = _task_options(section, seed, ("fraction", "cv_folds", "variance_threshold"))
    if "aggregation" in section:
        options["aggregation"] = _as_tuple(section["aggregation"])
    if not features or not classifiers:
        return None
    # the template's attribute is replaced per entry of `attributes`
    task = _build(
        TaskSpec,
        {"attribute": "age", "features": features, "classifiers": classifiers, **options},
        "infer",
        diagnostics,
    )
    if task is None or not attributes:
        return None
    return InferSection(attributes=attributes, task=task, transfer=tuple(transfer))


def _parse_link(raw: dict, presets, seed: int, diagnostics: _Diagnostics) -> LinkTask | None:
    section = raw.get("link")
    if section is None:
        return None
    if not _check_keys(section, LinkTask, "link", diagnostics):
        return None
    features = _feature_list(
        section.get("features", ["dist_b2_w720_day"]), presets, "link.features", diagnostics
    )
    models = _model_list(
        section.get("models", [{"type": "random_forest"}, {"type": "siamese_dense"}]),
        "link.models",
        diagnostics,
    )
    metrics = _as_tuple(section.get("metrics", METRICS))
    if not features:
        return None
    return _build(
        LinkTask,
        {
            "features": features,
            "metrics": metrics,
            "models": models,
            **_task_options(section, seed, ("cv_folds", "variance_threshold")),
        },
        "link",
        diagnostics,
    )


def _parse_report(raw: dict, presets, diagnostics: _Diagnostics) -> ReportSection:
    section = raw.get("report") or {}
    if not isinstance(section, dict):
        diagnostics.append("report: expected a mapping")
        return ReportSection()
    unknown = sorted(set(section) - {"pca_features", "pca_attributes"})
    if unknown:
        diagnostics.append(f"report: unknown field(s) {unknown}")
    pca = _feature_config(
        section.get("pca_features", "raw_week"), presets, "report.pca_features", diagnostics
    )
    attributes = tuple(section.get("pca_attributes", ATTRIBUTES))
    for i, a in enumerate(attributes):
        if a not in ATTRIBUTES:
            diagnostics.append(f"report.pca_attributes[{i}]: must be one of {list(ATTRIBUTES)}")
    return ReportSection(pca_features=pca or FEATURE_PRESETS["raw_week"], pca_attributes=attributes)


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def _read_yaml(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError([f"{path}: cannot read config file ({e.strerror or e})"]) from e
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError([f"{path}: invalid YAML ({e})"]) from e
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return raw


def parse_config(
    raw: dict, base_dir: Path | str = ".", seed: int | None = None, output_dir: str | None = None
) -> tuple[ExperimentConfig | None, list[str]]:
    """Build an ExperimentConfig from a loaded YAML mapping, with every diagnostic found."""
    diagnostics = _Diagnostics()
    raw = dict(raw)
    base_dir = Path(base_dir)
    for key in sorted(set(raw) - set(SECTIONS)):
        diagnostics.append(f"{key}: unknown section (expected one of {list(SECTIONS)})")

    if seed is not None:
        raw["seed"] = seed
    global_seed = raw.get("seed", 0)
    if isinstance(global_seed, bool) or not isinstance(global_seed, int) or global_seed < 0:
        diagnostics.append(f"seed: must be a non-negative integer, got {global_seed!r}")
        global_seed = 0

    source = _parse_source(raw, base_dir, global_seed, diagnostics)
    presets = _parse_presets(raw, diagnostics)
    features = ()
    if "features" in raw:
        features = _feature_list(raw["features"], presets, "features", diagnostics)
    infer = _parse_infer(raw, presets, global_seed, diagnostics)
    link = _parse_link(raw, presets, global_seed, diagnostics)
    report = _parse_report(raw, presets, diagnostics)

    if diagnostics:
        return None, list(diagnostics)
    if output_dir is not None:
        out = Path(output_dir)
    else:
        out = base_dir / raw["output_dir"] if raw.get("output_dir") else None
    # output_dir is not part of the config hash
    raw.pop("output_dir", None)
    return (
        ExperimentConfig(
            source=source,
            seed=global_seed,
            output_dir=out,
            presets=presets,
            features=features,
            infer=infer,
            link=link,
            report=report,
            raw=raw,
        ),
        [],
    )


def validate_config(path: str | Path) -> list[str]:
    """Every problem in the config file at `path`; an empty list means the file is valid."""
    path = Path(path)
    _, diagnostics = parse_config(_read_yaml(path), base_dir=path.parent)
    return diagnostics


def load_experiment(
    path: str | Path, seed: int | None = None, output_dir: str | None = None
) -> ExperimentConfig:
    path = Path(path)
    config, diagnostics = parse_config(
        _read_yaml(path), base_dir=path.parent, seed=seed, output_dir=output_dir
    )
    if diagnostics:
        raise ConfigError(diagnostics)
    logger.info(
        f"✓ Loaded experiment config {path} (hash {config.config_hash[:8]}, seed {config.seed})"
    )
    return config


__all__ = [
    "DataSource",
    "ExperimentConfig",
    "InferSection",
    "ReportSection",
    "config_hash",
    "load_experiment",
    "parse_config",
    "validate_config",
]
