from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from fair_meta_dg.domain.config import ExperimentConfig
from fair_meta_dg.domain.leakage import NO_GUARD, LeakageGuard
from fair_meta_dg.domain.model import DomainDataset, DualState, ExampleBatch, Method
from fair_meta_dg.learning.disentangle import DisentangleModel
from fair_meta_dg.learning.tensor import ParameterStore


@dataclass(frozen=True, eq=False)
class FoldContext:
    """한 fold 의 stage-2 학습 입력. train 은 이미 정규화되어 있습니다."""

    config: ExperimentConfig
    train: list[DomainDataset]
    fold: str
    stage1: DisentangleModel | None = None
    guard: LeakageGuard = NO_GUARD

    @property
    def feature_dim(self) -> int:
        return self.train[0].feature_dim


@dataclass(frozen=True, eq=False)
class Snapshot:
    theta: dict[str, np.ndarray]
    duals: DualState


@dataclass(eq=False)
class TrainedClassifier:
    theta: ParameterStore
    duals: DualState
    history: dict[str, list[dict[str, float]]] = field(default_factory=dict)
    snapshots: dict[int, Snapshot] = field(default_factory=dict)

    def at(self, count: int) -> TrainedClassifier:
        """count 번째 step 까지 학습한 iterate"""
        snapshot = self.snapshots[count]
        return TrainedClassifier(
            theta=ParameterStore(snapshot.theta), duals=snapshot.duals, history=self.history
        )


SnapshotHook = Callable[[int, ParameterStore, DualState], None]


def snapshot_hook(counts: set[int], into: dict[int, Snapshot]) -> SnapshotHook:
    """i 번째 step 이 끝난 뒤 (i+1) 이 counts 에 있으면 θ 를 복사해 둡니다."""

    def hook(step: int, theta: ParameterStore, duals: DualState) -> None:
        if step + 1 in counts:
            into[step + 1] = Snapshot(theta=theta.state(), duals=duals)

    return hook


class TrainingMethod(Protocol):
    method: Method
    needs_stage1: bool
    needs_adaptation: bool

    def budget(self, config: ExperimentConfig) -> int:
        """기본 학습 step (또는 meta-iteration) 수"""
        ...

    def train(
        self,
        context: FoldContext,
        steps: int | None = None,
        snapshot_counts: set[int] | None = None,
    ) -> TrainedClassifier: ...

    def adapt(
        self, trained: TrainedClassifier, fewshot: ExampleBatch, context: FoldContext
    ) -> ParameterStore: ...
