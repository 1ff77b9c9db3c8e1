from __future__ import annotations

import numpy as np
import pytest

from fair_meta_dg.domain.model import ExampleBatch
from fair_meta_dg.learning.transform import (
    AUGMENTED_SUFFIX,
    augment_batch,
    augmented_pairs,
    content_drift,
    transform_T,
)
from tests.support import TINY_DIMS, make_batch


def test_transform_preserves_label_and_maps_sensitive(tiny_model, random_batch):
    rng = np.random.default_rng(0)

    for example in random_batch:
        out = transform_T(tiny_model, example, rng)
        assert out.y == example.y
        assert out.z in (-1, 1)
        assert out.x.shape == example.x.shape
        assert out.record_id == f"{example.record_id}{AUGMENTED_SUFFIX}"


def test_transform_is_deterministic_for_a_seed(tiny_model, random_batch):
    example = random_batch.example(0)

    first = transform_T(tiny_model, example, 11)
    second = transform_T(tiny_model, example, 11)

    assert np.array_equal(first.x, second.x)
    assert first.z == second.z


def test_batch_equals_sequential_transform_on_same_stream(tiny_model, random_batch):
    batch_out = augment_batch(tiny_model, random_batch, np.random.default_rng(5))

    stream = np.random.default_rng(5)
    sequential = [transform_T(tiny_model, e, stream) for e in random_batch]

    assert np.allclose(batch_out.x, np.stack([e.x for e in sequential]))
    assert batch_out.z.tolist() == [e.z for e in sequential]
    assert batch_out.y.tolist() == random_batch.y.tolist()


def test_empty_batch_gives_empty_batch(tiny_model):
    out = augment_batch(tiny_model, ExampleBatch.empty(TINY_DIMS.feature), 0)

    assert len(out) == 0
    assert out.feature_dim == TINY_DIMS.feature


def test_transform_leaves_stage1_parameters_untouched(tiny_model, random_batch):
    before = tiny_model.params.clone()

    augment_batch(tiny_model, random_batch, 0)

    assert tiny_model.params.equals(before)


def test_augmented_pairs_keep_class_labels(tiny_model, random_batch):
    pairs = augmented_pairs(tiny_model, random_batch, 2)

    assert len(pairs) == len(random_batch)
    assert all(p.original.y == p.augmented.y for p in pairs)


def test_content_drift_is_finite(tiny_model, random_batch):
    drift = content_drift(tiny_model, random_batch, 0)

    assert np.isfinite(drift)
    assert drift >= 0.0


def _sign_of_first_sensitive_coordinate(model) -> None:
    """h(a) 가 sign(a_0) 를 내도록 고정합니다 (동률이면 +1)."""
    model.params["h/0.weight"].data[:] = [[1.0, -1.0, 0.0], [0.0, 0.0, 0.0]]
    model.params["h/0.bias"].data[:] = 0.0
    model.params["h/1.weight"].data[:] = [[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]]
    model.params["h/1.bias"].data[:] = 0.0


def _rows(n: int, seed: int) -> ExampleBatch:
    rng = np.random.default_rng(seed)
    return make_batch(
        rng.standard_normal((n, TINY_DIMS.feature)),
        z=list(rng.choice([-1, 1], size=n)),
        y=list(rng.integers(0, 2, size=n)),
    )


def test_ten_thousand_transforms_keep_labels_and_binary_sensitive(tiny_model):
    batch = _rows(10_000, seed=1)

    out = augment_batch(tiny_model, batch, np.random.default_rng(3))

    assert np.array_equal(out.y, batch.y)
    assert set(np.unique(out.z)) <= {-1, 1}
    assert np.all(np.isfinite(out.x))


def test_new_sensitive_attribute_is_independent_of_the_original(tiny_model):
    _sign_of_first_sensitive_coordinate(tiny_model)
    batch = _rows(4000, seed=2)

    out = augment_batch(tiny_model, batch, np.random.default_rng(4))

    observed = np.array(
        [[np.sum((batch.z == zi) & (out.z == zj)) for zj in (-1, 1)] for zi in (-1, 1)], dtype=float
    )
    expected = observed.sum(axis=1, keepdims=True) * observed.sum(axis=0, keepdims=True) / observed.sum()
    chi_square = float(((observed - expected) ** 2 / expected).sum())
    # 자유도 1, 유의수준 0.001
    assert chi_square < 10.83
    assert np.mean(out.z == 1) == pytest.approx(0.5, abs=0.05)
