from __future__ import annotations

from dataclasses import replace

from fair_meta_dg.domain.config import ExperimentConfig
from fair_meta_dg.domain.model import DualState, ExampleBatch, Method
from fair_meta_dg.infrastructure.methods.base import (
    FoldContext,
    Snapshot,
    TrainedClassifier,
    snapshot_hook,
)
from fair_meta_dg.learning.meta import train_erm
from fair_meta_dg.learning.tensor import ParameterStore


class ErmMethod:
    """학습 도메인을 합친 ERM. fairness_constrained 이면 ERM-FC (λ2·L_fair 추가)."""

    needs_stage1 = False
    needs_adaptation = False

    def __init__(self, fairness_constrained: bool = False) -> None:
        self.fairness_constrained = fairness_constrained
        self.method = Method.ERM_FC if fairness_constrained else Method.ERM

    def budget(self, config: ExperimentConfig) -> int:
        return config.erm.steps

    def train(
        self,
        context: FoldContext,
        steps: int | None = None,
        snapshot_counts: set[int] | None = None,
    ) -> TrainedClassifier:
        config = context.config
        hp = config.erm if steps is None else replace(config.erm, steps=steps)
        snapshots: dict[int, Snapshot] = {}
        final_duals: list[DualState] = [config.duals]
        record_snapshot = snapshot_hook(snapshot_counts or set(), snapshots)

        def on_step(step: int, theta: ParameterStore, duals: DualState) -> None:
            final_duals[0] = duals
            record_snapshot(step, theta, duals)

        theta, history = train_erm(
            context.train,
            hp,
            fairness_constrained=self.fairness_constrained,
            duals=config.duals,
            guard=context.guard,
            on_step=on_step,
        )
        return TrainedClassifier(
            theta=theta, duals=final_duals[0], history={"erm": history}, snapshots=snapshots
        )

    def adapt(
        self, trained: TrainedClassifier, fewshot: ExampleBatch, context: FoldContext
    ) -> ParameterStore:
        # ERM 은 θ 를 그대로 평가
        return trained.theta
