from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from fair_meta_dg.domain.exceptions import DatasetError
from fair_meta_dg.domain.model import DomainDataset

MIN_STD = 1e-9


@dataclass(frozen=True, eq=False)
class FeatureStats:
    """학습 도메인 전체에서 계산한 feature 별 z-score 통계"""

    mean: np.ndarray
    std: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        # 상수 열은 평균만 빼지 않고 그대로 통과
        return np.where(self.std < MIN_STD, 1.0, self.std)

    @property
    def shift(self) -> np.ndarray:
        return np.where(self.std < MIN_STD, 0.0, self.mean)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.shift) / self.scale

    def apply_to(self, dataset: DomainDataset) -> DomainDataset:
        return dataset.with_features(self.apply(dataset.batch.x))


def fit_stats(train: Sequence[DomainDataset]) -> FeatureStats:
    if not train or all(len(d) == 0 for d in train):
        raise DatasetError("cannot compute normalization statistics on an empty train pool")
    pooled = np.concatenate([d.batch.x for d in train], axis=0)
    return FeatureStats(mean=pooled.mean(axis=0), std=pooled.std(axis=0))


def normalize_features(
    train: Sequence[DomainDataset], apply_to: Sequence[DomainDataset]
) -> tuple[list[DomainDataset], FeatureStats]:
    """train 풀에서만 통계를 구하고 apply_to 의 모든 도메인에 적용합니다."""
    stats = fit_stats(train)
    return [stats.apply_to(d) for d in apply_to], stats
