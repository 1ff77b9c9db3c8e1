"""기본 설정 그대로 학습까지 돌리는 수용 테스트. 몇 분씩 걸리므로 slow 로 표시합니다."""

from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from fair_meta_dg import bootstrap
from fair_meta_dg.application import services
from fair_meta_dg.domain.config import ExperimentConfig
from fair_meta_dg.domain.model import Method
from fair_meta_dg.infrastructure.datasets import generate_synthetic
from fair_meta_dg.infrastructure.methods.runner import latent_dims, train_stage1
from fair_meta_dg.learning.disentangle import DisentangleModel, encode, sensitive_accuracy
from fair_meta_dg.learning.preprocessing import fit_stats
from fair_meta_dg.learning.sampling import pooled
from fair_meta_dg.learning.transform import content_drift

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def trained():
    config = ExperimentConfig()
    train_raw = generate_synthetic(config.data.synth, per_domain_count=500, seed=0)
    held_out_raw = generate_synthetic(config.data.synth, per_domain_count=200, seed=1)
    stats = fit_stats(train_raw)
    train = [stats.apply_to(d) for d in train_raw]
    held_out = pooled([stats.apply_to(d) for d in held_out_raw])

    model, history = train_stage1(config, train)
    return config, model, history, held_out


def _multiple_correlation(latent: np.ndarray, z: np.ndarray) -> float:
    """z 를 latent 의 선형결합 (+ 절편) 으로 최소제곱 근사했을 때의 상관계수"""
    design = np.column_stack([latent, np.ones(len(latent))])
    coef, *_ = np.linalg.lstsq(design, z.astype(float), rcond=None)
    return abs(float(np.corrcoef(design @ coef, z)[0, 1]))


def test_stage1_reduces_reconstruction_and_learns_sensitive_factor(trained):
    _, model, history, held_out = trained

    assert len(history) == 500
    initial = history[0]["L_recon"]
    final = np.mean([r["L_recon"] for r in history[-10:]])
    assert final <= 0.5 * initial
    assert sensitive_accuracy(model, held_out) >= 0.8


def test_sensitive_factor_carries_more_group_signal_than_content(trained):
    _, model, _, held_out = trained

    latents = encode(model, held_out.x)

    assert _multiple_correlation(latents.a, held_out.z) > _multiple_correlation(latents.c, held_out.z)


def test_training_improves_content_preservation(trained):
    config, model, _, held_out = trained
    untrained = DisentangleModel.create(
        latent_dims(config, held_out.feature_dim), config.architecture, seed=config.stage1.seed
    )

    assert content_drift(model, held_out, 5) <= content_drift(untrained, held_out, 5)


async def test_feed_is_fairer_than_erm_and_beats_its_ablations(tmp_path):
    config = ExperimentConfig(output_dir=tmp_path)

    await services.compare_methods(
        bootstrap.bootstrap(),
        config,
        methods=[Method.ERM, Method.FEED, Method.ABS1, Method.ABS2],
        seeds=range(5),
        out_dir=tmp_path,
    )

    table = pd.read_csv(tmp_path / "comparison.csv").set_index("method")
    assert set(table["seeds"]) == {5}
    feed, erm = table.loc["feed"], table.loc["erm"]
    assert feed["delta_dp"] <= 0.7 * erm["delta_dp"]
    assert abs(feed["accuracy"] - erm["accuracy"]) <= 0.05
    assert feed["score"] > table.loc["abs1", "score"]
    assert feed["score"] > table.loc["abs2", "score"]
