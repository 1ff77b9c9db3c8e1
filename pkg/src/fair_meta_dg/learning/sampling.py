from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from fair_meta_dg.domain.exceptions import InsufficientExamplesError
from fair_meta_dg.domain.model import DomainDataset, ExampleBatch, SamplingMode, Task


def as_rng(seed: int | np.random.Generator) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def pooled(pool: Sequence[DomainDataset]) -> ExampleBatch:
    """도메인 태그를 무시하고 학습 도메인을 하나의 배치로 합칩니다."""
    return ExampleBatch.concat([d.batch for d in pool])


def _split(batch: ExampleBatch, n_sup: int, n_qry: int, rng: np.random.Generator) -> Task:
    idx = rng.choice(len(batch), size=n_sup + n_qry, replace=False)
    return Task(support=batch.take(idx[:n_sup]), query=batch.take(idx[n_sup:]))


def sample_tasks(
    pool: Sequence[DomainDataset],
    task_count: int,
    n_sup: int,
    n_qry: int,
    mode: SamplingMode = SamplingMode.POOLED,
    seed: int | np.random.Generator = 0,
) -> list[Task]:
    if task_count < 0:
        raise ValueError(f"task_count must be >= 0, got {task_count}")
    if not pool:
        raise InsufficientExamplesError("cannot sample tasks from an empty pool")
    need = n_sup + n_qry
    rng = as_rng(seed)

    if mode is SamplingMode.POOLED:
        union = pooled(pool)
        if len(union) < need:
            raise InsufficientExamplesError(
                f"pool has {len(union)} examples, a task needs n_sup + n_qry = {need}"
            )
        return [_split(union, n_sup, n_qry, rng) for _ in range(task_count)]

    short = [d.domain_id for d in pool if len(d) < need]
    if short:
        raise InsufficientExamplesError(
            f"domains {short} have fewer than n_sup + n_qry = {need} examples"
        )
    tasks = []
    for _ in range(task_count):
        source = pool[int(rng.integers(len(pool)))]
        tasks.append(_split(source.batch, n_sup, n_qry, rng))
    return tasks
