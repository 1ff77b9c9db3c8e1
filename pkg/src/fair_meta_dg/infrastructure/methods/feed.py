from __future__ import annotations

from dataclasses import replace

from loguru import logger

from fair_meta_dg.domain.config import ExperimentConfig
from fair_meta_dg.domain.model import DualState, ExampleBatch, Method
from fair_meta_dg.infrastructure.methods.base import (
    FoldContext,
    Snapshot,
    TrainedClassifier,
    snapshot_hook,
)
from fair_meta_dg.learning.meta import MetaVariant, adapt_downstream, init_classifier, meta_train
from fair_meta_dg.learning.tensor import ParameterStore

_METHODS = {
    MetaVariant.FULL: Method.FEED,
    MetaVariant.NO_INNER: Method.ABS1,
    MetaVariant.NO_AUGMENT: Method.ABS2,
}


class MetaLearningMethod:
    """공정성 제약 meta-learning 과 두 가지 ablation. 평가 전 few-shot 적응을 거칩니다."""

    needs_adaptation = True

    def __init__(self, variant: MetaVariant = MetaVariant.FULL) -> None:
        self.variant = variant
        self.method = _METHODS[variant]
        # abs2 는 변환 모델을 쓰지 않으므로 stage 1 이 필요 없음
        self.needs_stage1 = variant is not MetaVariant.NO_AUGMENT

    def budget(self, config: ExperimentConfig) -> int:
        return config.meta.iterations

    def train(
        self,
        context: FoldContext,
        steps: int | None = None,
        snapshot_counts: set[int] | None = None,
    ) -> TrainedClassifier:
        config = context.config
        hp = config.meta if steps is None else replace(config.meta, iterations=steps)
        theta0 = init_classifier(context.feature_dim, hp.hidden, seed=hp.seed)

        snapshots: dict[int, Snapshot] = {}
        final_duals: list[DualState] = [config.duals]
        record_snapshot = snapshot_hook(snapshot_counts or set(), snapshots)

        def on_iteration(step: int, theta: ParameterStore, duals: DualState) -> None:
            final_duals[0] = duals
            record_snapshot(step, theta, duals)

        theta, history = meta_train(
            theta0,
            context.train,
            context.stage1,
            hp,
            config.duals,
            variant=self.variant,
            guard=context.guard,
            on_iteration=on_iteration,
        )
        logger.debug(
            "meta-training 완료",
            method=self.method.value,
            iterations=hp.iterations,
            lambda1=final_duals[0].lambda1,
            lambda2=final_duals[0].lambda2,
        )
        return TrainedClassifier(
            theta=theta, duals=final_duals[0], history={"meta": history}, snapshots=snapshots
        )

    def adapt(
        self, trained: TrainedClassifier, fewshot: ExampleBatch, context: FoldContext
    ) -> ParameterStore:
        return adapt_downstream(
            trained.theta,
            fewshot,
            context.stage1,
            context.config.meta,
            trained.duals,
            seed=context.config.seed,
            variant=self.variant,
            guard=context.guard,
        )
