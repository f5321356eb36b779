import numpy as np
import pytest

from stepleak.config_learners import AutoencoderSpec
from stepleak.errors import FeatureError
from stepleak.processors import (
    AutoencoderStep,
    FeatureWiseNormalizer,
    IdentityStep,
    ProbDistNormalizer,
    VarianceFilter,
    VectorWiseNormalizer,
    create_feature_processor,
    create_normalizer,
)


@pytest.mark.parametrize(
    "mode,cls",
    [
        ("none", IdentityStep),
        ("feature_wise", FeatureWiseNormalizer),
        ("vector_wise", VectorWiseNormalizer),
        ("prob_dist", ProbDistNormalizer),
    ],
)
def test_create_normalizer(mode, cls):
    assert isinstance(create_normalizer(mode), cls)


def test_unknown_normalization():
    with pytest.raises(FeatureError):
        create_normalizer("l2")


def test_feature_wise_state_ignores_test_rows():
    rng = np.random.default_rng(0)
    train = rng.random((20, 5))
    test = rng.random((6, 5))

    step = FeatureWiseNormalizer().fit(train)
    maxima = step.maxima.copy()
    before = step.forward(test)
    step.forward(test * 100.0)

    np.testing.assert_array_equal(step.maxima, maxima)
    np.testing.assert_allclose(before, test / train.max(axis=0))


def test_feature_wise_test_rows_may_exceed_one():
    step = FeatureWiseNormalizer().fit(np.array([[1.0, 2.0]]))
    assert step.forward(np.array([[3.0, 1.0]])).tolist() == [[3.0, 0.5]]


def test_feature_wise_dimension_mismatch():
    step = FeatureWiseNormalizer().fit(np.ones((2, 3)))
    with pytest.raises(FeatureError):
        step.forward(np.ones((1, 4)))


def test_feature_wise_before_fit():
    with pytest.raises(FeatureError):
        FeatureWiseNormalizer().forward(np.ones((1, 2)))


# ---------------------------------------------------------------------------
# Variance filter
# ---------------------------------------------------------------------------

def test_variance_filter_drops_constant_column():
    X = np.column_stack([np.arange(10.0), np.full(10, 3.0), np.arange(10.0) ** 2])
    step = VarianceFilter().fit(X)
    assert step.mask.tolist() == [True, False, True]
    assert step.forward(X).shape == (10, 2)


def test_variance_at_threshold_is_kept():
    X = np.array([[0.0, 1.0], [0.2, 1.0], [0.4, 1.0], [0.1, 1.0]])
    variance = float(X.var(axis=0)[0])
    step = VarianceFilter(threshold=variance).fit(X)
    assert step.mask.tolist() == [True, False]
    assert not VarianceFilter(threshold=np.nextafter(variance, 1.0)).fit(
        np.column_stack([X[:, 0], X[:, 0] * 10])
    ).mask[0]


def test_variance_mask_matches_two_pass_oracle():
    rng = np.random.default_rng(3)
    X = rng.normal(scale=rng.uniform(0.0, 0.1, size=30), size=(50, 30))
    mean = X.sum(axis=0) / X.shape[0]
    variance = ((X - mean) ** 2).sum(axis=0) / X.shape[0]
    step = VarianceFilter(threshold=1e-3).fit(X)
    np.testing.assert_array_equal(step.mask, variance >= 1e-3)


def test_variance_filter_errors():
    with pytest.raises(FeatureError, match="at least 2"):
        VarianceFilter().fit(np.ones((1, 3)))
    with pytest.raises(FeatureError, match="all 3 features"):
        VarianceFilter().fit(np.ones((5, 3)))


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------

def test_pipeline_order_and_state():
    rng = np.random.default_rng(1)
    X = rng.integers(0, 10, size=(30, 6)).astype(float)
    X[:, 2] = 4.0

    pipeline = create_feature_processor("feature_wise", variance_threshold=1e-3)
    out = pipeline.fit_forward(X)

    assert out.shape == (30, 5)
    state = pipeline.state_dict()
    assert set(state) == {"FeatureWiseNormalizer", "VarianceFilter"}
    np.testing.assert_array_equal(pipeline.forward(X), out)


def test_none_pipeline_is_identity():
    pipeline = create_feature_processor("none")
    assert pipeline.steps == []
    X = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(pipeline.fit_forward(X), X)


def test_autoencoder_step_outputs_bottleneck():
    rng = np.random.default_rng(2)
    X = rng.random((40, 16))
    step = AutoencoderStep(AutoencoderSpec(epochs=5, seed=1)).fit(X)
    assert step.forward(X).shape == (40, 4)
    assert step.state_dict() == {"layer_plan": [16, 8, 4, 8, 16]}
