"""테스트 공용 설정과 배치 빌더"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from fair_meta_dg.domain.config import (
    DataConfig,
    ErmHyper,
    ExperimentConfig,
    MetaHyper,
    SelectionConfig,
    Stage1Architecture,
    Stage1Hyper,
    SynthSpec,
)
from fair_meta_dg.domain.model import DualState, ExampleBatch
from fair_meta_dg.learning.disentangle import LatentDims

TINY_SPEC = SynthSpec(content_dim=2, style_dim=2, sensitive_dim=2, feature_dim=8)
TINY_ARCH = Stage1Architecture(
    semantic_dim=4, hidden=(6,), classifier_hidden=(3,), discriminator_hidden=(4,)
)
TINY_DIMS = LatentDims(feature=8, semantic=4, content=2, style=2, sensitive=2)


def tiny_config(output_dir: Path | None = None, **overrides) -> ExperimentConfig:
    """몇 초 안에 LODO 전체가 끝나는 설정"""
    config = ExperimentConfig(
        seed=0,
        output_dir=output_dir or Path("runs"),
        fewshot=8,
        data=DataConfig(per_domain_count=60, synth=TINY_SPEC),
        stage1=Stage1Hyper(steps=3, batch_size=16, log_every=0),
        architecture=TINY_ARCH,
        meta=MetaHyper(
            iterations=4,
            tasks_per_batch=2,
            n_sup=8,
            n_qry=8,
            inner_steps=1,
            downstream_steps=1,
            hidden=(8, 8, 8),
            log_every=0,
        ),
        duals=DualState(eta_d=0.1),
        erm=ErmHyper(steps=5, batch_size=16, hidden=(8, 8, 8), log_every=0),
        selection=SelectionConfig(mode="none", every=2),
    )
    return replace(config, **overrides)


def make_batch(
    x: np.ndarray, z: list[int], y: list[int], prefix: str = "r", domain: str | None = "d0"
) -> ExampleBatch:
    n = len(z)
    return ExampleBatch(
        x=np.asarray(x, dtype=np.float64).reshape(n, -1),
        z=np.asarray(z, dtype=np.int64),
        y=np.asarray(y, dtype=np.int64),
        record_ids=tuple(f"{prefix}{i}" for i in range(n)),
        domains=(domain,) * n,
    )


