from pathlib import Path

import pytest

import stepleak
from stepleak.config_experiment import (
    DataSource,
    load_experiment,
    parse_config,
    validate_config,
)
from stepleak.config_learners import ForestSpec, LogRegSpec
from stepleak.config_synth import SynthConfig
from stepleak.errors import ConfigError

DEMO = Path(stepleak.__file__).parent / "demo.yaml"


def diagnostics_of(raw: dict) -> list[str]:
    config, diagnostics = parse_config(raw)
    assert (config is None) == bool(diagnostics)
    return diagnostics


def test_demo_config_is_valid():
    assert validate_config(DEMO) == []
    config = load_experiment(DEMO)
    assert isinstance(config.source, SynthConfig)
    assert [t.attribute for t in config.infer.tasks()] == ["age", "gender"]
    assert config.infer.transfer == (("age", "education"),)
    assert "dist_b4_w1440_day" in {c.label for c in config.features}


def test_empty_file_has_no_data_source(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    assert validate_config(path) == [
        "data: no data source (give a `data` or a `synth` section)"
    ]


def test_invalid_yaml(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("synth: [unclosed\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        validate_config(path)


def test_negative_window_names_the_field():
    diagnostics = diagnostics_of({"synth": {}, "presets": {"bad": {"window": -5}}})
    assert len(diagnostics) == 1
    assert diagnostics[0].startswith("presets.bad.window: ")


def test_unknown_classifier_names_its_position():
    raw = {"synth": {}, "infer": {"classifiers": [{"type": "logreg"}, {"type": "xgboost"}]}}
    (diagnostic,) = diagnostics_of(raw)
    assert diagnostic.startswith("infer.classifiers[1].type: unknown model kind 'xgboost'")


def test_unavailable_model_is_reported():
    raw = {"synth": {}, "link": {"models": [{"type": "siamese_lstm"}]}}
    (diagnostic,) = diagnostics_of(raw)
    assert diagnostic.startswith("link.models[0].type: 'siamese_lstm' is not implemented")


def test_preset_name_collision():
    raw = {"synth": {}, "presets": {"max_w720": {"window": 360}}}
    (diagnostic,) = diagnostics_of(raw)
    assert diagnostic.startswith("presets.max_w720: name collides")


def test_every_problem_is_collected():
    raw = {
        "seed": -1,
        "synth": {"n_users": 0, "cap": 0},
        "infer": {"attributes": ["height"], "features": ["nope"], "cv_folds": 1},
        "link": {"metrics": ["manhattan"]},
        "colour": "blue",
    }
    diagnostics = diagnostics_of(raw)
    prefixes = (
        "colour: unknown section",
        "seed: ",
        "synth.n_users: ",
        "synth.cap: ",
        "infer.attributes[0]: ",
        "infer.features[0]: unknown feature preset 'nope'",
        "link.metrics[0]: ",
    )
    for prefix in prefixes:
        assert any(d.startswith(prefix) for d in diagnostics), prefix


def test_unknown_fields_are_rejected():
    (diagnostic,) = diagnostics_of({"synth": {"n_user": 10}})
    assert diagnostic == "synth: unknown field(s) ['n_user']"
    (diagnostic,) = diagnostics_of({"synth": {}, "infer": {"attribute": "age"}})
    assert diagnostic.startswith("infer.attribute: ")


def test_one_data_source_only():
    raw = {"synth": {}, "data": {"steps": "s.csv", "attributes": "a.csv"}}
    (diagnostic,) = diagnostics_of(raw)
    assert "both" in diagnostic


def test_data_paths_are_relative_to_the_config(tmp_path):
    raw = {"data": {"steps": "s.csv", "attributes": "a.csv", "max_steps": 40}}
    config, _ = parse_config(raw, base_dir=tmp_path)
    assert config.source == DataSource(tmp_path / "s.csv", tmp_path / "a.csv", 55, 40)


def test_sections_build_specs():
    raw = {
        "seed": 7,
        "synth": {"n_users": 30},
        "infer": {
            "attributes": "education",
            "classifiers": ["logreg", {"type": "random_forest", "n_trees": 3}],
            "aggregation": "mean",
        },
    }
    config, diagnostics = parse_config(raw)
    assert diagnostics == []
    assert config.source.seed == 7
    (task,) = config.infer.tasks()
    assert task.attribute == "education"
    assert task.seed == 7
    assert task.classifiers == (LogRegSpec(), ForestSpec(n_trees=3))
    assert task.aggregation == ("mean",)
    assert config.link is None


def test_seed_override_changes_the_hash_but_output_dir_does_not():
    raw = {"synth": {"n_users": 10}, "output_dir": "runs/a"}
    base, _ = parse_config(raw)
    moved, _ = parse_config({**raw, "output_dir": "runs/b"})
    reseeded, _ = parse_config(raw, seed=5)

    assert base.config_hash == moved.config_hash
    assert reseeded.seed == 5
    assert reseeded.source.seed == 5
    assert reseeded.config_hash != base.config_hash
    assert parse_config(raw, output_dir="elsewhere")[0].output_dir == Path("elsewhere")


def test_load_experiment_raises_with_every_diagnostic(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("synth: {n_users: 0}\nlink: {cv_folds: 1}\n")
    with pytest.raises(ConfigError) as info:
        load_experiment(path)
    assert len(info.value.diagnostics) == 2
