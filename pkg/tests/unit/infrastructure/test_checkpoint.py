from __future__ import annotations

import numpy as np
import pytest

from fair_meta_dg.infrastructure.checkpoint import (
    Checkpoint,
    classifier_checkpoint,
    classifier_from_checkpoint,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    stage1_checkpoint,
    stats_from_checkpoint,
)
from fair_meta_dg.infrastructure.exceptions import CheckpointFormatError, CheckpointVersionError
from fair_meta_dg.learning.meta import init_classifier
from fair_meta_dg.learning.preprocessing import FeatureStats


def test_round_trip_preserves_tensors_and_metadata(tmp_path):
    checkpoint = Checkpoint(
        tensors={"w": np.arange(6.0).reshape(2, 3), "scalar": np.array(2.5), "empty": np.zeros((0, 4))},
        metadata={"kind": "test", "lambda1": "0.25"},
    )

    loaded = load_checkpoint(save_checkpoint(tmp_path / "a.ckpt", checkpoint))

    assert loaded.metadata == checkpoint.metadata
    assert set(loaded.tensors) == {"w", "scalar", "empty"}
    assert np.array_equal(loaded.tensors["w"], checkpoint.tensors["w"])
    assert loaded.tensors["scalar"].shape == ()
    assert loaded.tensors["empty"].shape == (0, 4)


def test_truncated_file_is_rejected(tmp_path):
    path = save_checkpoint(tmp_path / "a.ckpt", Checkpoint(tensors={"w": np.ones((4, 4))}))
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])

    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_bad_magic_is_rejected(tmp_path):
    path = tmp_path / "a.ckpt"
    path.write_bytes(b"NOTACKPT 1\nEND\n")

    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_unsupported_version_is_rejected(tmp_path):
    path = tmp_path / "a.ckpt"
    path.write_bytes(b"FEEDPK 99\nEND\n")

    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_trailing_bytes_are_rejected(tmp_path):
    path = save_checkpoint(tmp_path / "a.ckpt", Checkpoint(tensors={"w": np.ones(2)}))
    path.write_bytes(path.read_bytes() + b"junk")

    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_whitespace_in_tensor_name_is_rejected(tmp_path):
    with pytest.raises(CheckpointFormatError):
        save_checkpoint(tmp_path / "a.ckpt", Checkpoint(tensors={"bad name": np.ones(1)}))


def test_stage1_model_round_trip(tmp_path, tiny_model):
    stats = FeatureStats(mean=np.zeros(8), std=np.ones(8))
    path = save_checkpoint(tmp_path / "s1.ckpt", stage1_checkpoint(tiny_model, stats, "abc"))

    loaded = load_checkpoint(path)
    restored = model_from_checkpoint(loaded)

    assert restored.dims == tiny_model.dims
    assert restored.architecture == tiny_model.architecture
    assert restored.params.equals(tiny_model.params)
    assert np.array_equal(stats_from_checkpoint(loaded).std, stats.std)
    assert loaded.metadata["fingerprint"] == "abc"


def test_stage1_checkpoint_without_dims_is_rejected(tiny_model):
    checkpoint = stage1_checkpoint(tiny_model)
    del checkpoint.metadata["dims"]

    with pytest.raises(CheckpointFormatError):
        model_from_checkpoint(checkpoint)


def test_stage1_checkpoint_with_mismatched_shapes_is_rejected(tmp_path, tiny_model):
    checkpoint = stage1_checkpoint(tiny_model)
    checkpoint.metadata["dims"] = "9,4,2,2,2"
    path = save_checkpoint(tmp_path / "s1.ckpt", checkpoint)

    with pytest.raises(CheckpointFormatError, match="does not fit"):
        model_from_checkpoint(load_checkpoint(path))


def test_classifier_round_trip(tmp_path):
    theta = init_classifier(8, (4, 4, 4), seed=2)
    path = save_checkpoint(tmp_path / "f.ckpt", classifier_checkpoint(theta, method="feed"))

    loaded = load_checkpoint(path)

    assert classifier_from_checkpoint(loaded).equals(theta)
    assert loaded.metadata["method"] == "feed"
    assert stats_from_checkpoint(loaded) is None


def test_checkpoint_without_classifier_is_rejected():
    with pytest.raises(CheckpointFormatError):
        classifier_from_checkpoint(Checkpoint(tensors={"E_m/0.weight": np.ones((1, 1))}))
