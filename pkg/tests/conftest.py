from __future__ import annotations

import numpy as np
import pytest

from fair_meta_dg.domain.model import DomainDataset, ExampleBatch
from fair_meta_dg.infrastructure.datasets import generate_synthetic
from fair_meta_dg.learning.disentangle import DisentangleModel
from tests.support import TINY_ARCH, TINY_DIMS, TINY_SPEC, make_batch


@pytest.fixture
def tiny_domains() -> list[DomainDataset]:
    return generate_synthetic(TINY_SPEC, per_domain_count=60, seed=0)


@pytest.fixture
def tiny_model() -> DisentangleModel:
    return DisentangleModel.create(TINY_DIMS, TINY_ARCH, seed=0)


@pytest.fixture
def random_batch() -> ExampleBatch:
    rng = np.random.default_rng(3)
    n = 12
    return make_batch(
        rng.standard_normal((n, 8)),
        z=[1, -1] * (n // 2),
        y=list(rng.integers(0, 2, size=n)),
    )
