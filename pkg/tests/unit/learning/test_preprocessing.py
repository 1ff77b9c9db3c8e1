from __future__ import annotations

import numpy as np
import pytest

from fair_meta_dg.domain.exceptions import DatasetError, InsufficientExamplesError
from fair_meta_dg.domain.model import DomainDataset, SamplingMode
from fair_meta_dg.learning.preprocessing import fit_stats, normalize_features
from fair_meta_dg.learning.sampling import pooled, sample_tasks
from tests.support import make_batch


def _dataset(domain: str, x: np.ndarray) -> DomainDataset:
    n = len(x)
    return DomainDataset(
        domain, make_batch(x, z=[1, -1] * (n // 2), y=[0, 1] * (n // 2), prefix=f"{domain}:", domain=domain)
    )


def test_stats_are_fit_on_training_domains_only():
    train = [_dataset("a", np.array([[0.0, 5.0], [2.0, 5.0]]))]
    held_out = _dataset("b", np.array([[100.0, 5.0], [200.0, 5.0]]))

    (train_n, held_n), stats = normalize_features(train, [*train, held_out])

    assert np.allclose(stats.mean, [1.0, 5.0])
    assert np.allclose(train_n.batch.x[:, 0], [-1.0, 1.0])
    assert np.allclose(held_n.batch.x[:, 0], [99.0, 199.0])
    # 상수 열은 그대로 통과
    assert np.allclose(held_n.batch.x[:, 1], 5.0)


def test_empty_pool_statistics_are_rejected():
    with pytest.raises(DatasetError):
        fit_stats([])


def test_pooled_tasks_are_disjoint_and_sized(tiny_domains):
    tasks = sample_tasks(tiny_domains, 3, n_sup=5, n_qry=4, seed=0)

    assert len(tasks) == 3
    for task in tasks:
        assert len(task.support) == 5
        assert len(task.query) == 4
        assert not set(task.support.record_ids) & set(task.query.record_ids)


def test_per_domain_tasks_come_from_one_domain(tiny_domains):
    tasks = sample_tasks(tiny_domains, 4, n_sup=3, n_qry=3, mode=SamplingMode.PER_DOMAIN, seed=1)

    for task in tasks:
        assert len(set(task.support.domains) | set(task.query.domains)) == 1


def test_sampling_is_reproducible(tiny_domains):
    a = sample_tasks(tiny_domains, 2, 4, 4, seed=5)
    b = sample_tasks(tiny_domains, 2, 4, 4, seed=5)

    assert [t.support.record_ids for t in a] == [t.support.record_ids for t in b]


def test_pool_smaller_than_task_is_rejected():
    small = _dataset("a", np.zeros((4, 2)))

    with pytest.raises(InsufficientExamplesError):
        sample_tasks([small], 1, n_sup=3, n_qry=3)
    with pytest.raises(InsufficientExamplesError):
        sample_tasks([small], 1, n_sup=3, n_qry=3, mode=SamplingMode.PER_DOMAIN)


def test_pooled_ignores_domain_boundaries(tiny_domains):
    assert len(pooled(tiny_domains)) == sum(len(d) for d in tiny_domains)
