"""하나의 held-out 도메인에 대한 LODO fold 실행.

1. held-out 도메인을 seed 로 섞어 앞의 ``fewshot`` 개는 적응용, 나머지는 평가용으로 나눕니다.
2. 정규화 통계는 학습 도메인에서만 구합니다.
3. (필요하면) stage 1 을 학습 도메인 전체로 한 번 학습합니다.
4. 학습 도메인을 하나씩 빼는 inner LODO 로 학습 길이를 고릅니다.
5. 고른 길이로 다시 학습하고, 적응 후 평가 split 에서 지표를 계산합니다.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from fair_meta_dg.domain.config import ExperimentConfig
from fair_meta_dg.domain.exceptions import DatasetError, InsufficientExamplesError
from fair_meta_dg.domain.leakage import NO_GUARD, LeakageGuard
from fair_meta_dg.domain.model import DomainDataset, FairReport
from fair_meta_dg.infrastructure.logging_utils import PerformanceTracker, log_step
from fair_meta_dg.infrastructure.methods.base import FoldContext, TrainingMethod
from fair_meta_dg.infrastructure.methods.factory import MethodFactory
from fair_meta_dg.learning.disentangle import DisentangleModel, LatentDims, train_disentangler
from fair_meta_dg.learning.evaluation import evaluate_model
from fair_meta_dg.learning.preprocessing import FeatureStats, fit_stats


@dataclass(frozen=True, eq=False)
class FewShotSplit:
    fewshot: DomainDataset
    evaluation: DomainDataset


def split_fewshot(dataset: DomainDataset, fewshot: int, seed: int) -> FewShotSplit:
    """seed 로 섞은 순서에서 앞 fewshot 개와 나머지. 평가 split 은 비어 있을 수 없습니다."""
    if len(dataset) <= fewshot:
        raise InsufficientExamplesError(
            f"domain {dataset.domain_id} has {len(dataset)} examples, "
            f"needs more than fewshot = {fewshot}"
        )
    order = np.random.default_rng(seed).permutation(len(dataset))
    return FewShotSplit(
        fewshot=dataset.take(order[:fewshot]), evaluation=dataset.take(order[fewshot:])
    )


def latent_dims(config: ExperimentConfig, feature_dim: int) -> LatentDims:
    synth = config.data.synth
    return LatentDims(
        feature=feature_dim,
        semantic=config.architecture.semantic_dim,
        content=synth.content_dim,
        style=synth.style_dim,
        sensitive=synth.sensitive_dim,
    )


def train_stage1(
    config: ExperimentConfig,
    train: Sequence[DomainDataset],
    guard: LeakageGuard = NO_GUARD,
) -> tuple[DisentangleModel, list[dict[str, float]]]:
    model = DisentangleModel.create(
        latent_dims(config, train[0].feature_dim), config.architecture, seed=config.stage1.seed
    )
    with log_step("stage-1 학습", steps=config.stage1.steps):
        return train_disentangler(model, train, config.stage1, guard)


def selection_schedule(total: int, every: int) -> list[int]:
    """every 간격의 후보 학습 길이. 마지막 iterate 는 항상 포함됩니다."""
    counts = list(range(every, total + 1, every))
    if not counts or counts[-1] != total:
        counts.append(total)
    return counts


@dataclass(eq=False)
class FoldOutcome:
    report: FairReport
    history: dict[str, list[dict[str, float]]] = field(default_factory=dict)
    selected_steps: int = 0
    stats: FeatureStats | None = None


class FoldRunner:
    def __init__(self, factory: MethodFactory) -> None:
        self.factory = factory

    def run(
        self, config: ExperimentConfig, datasets: Sequence[DomainDataset], held_out: str
    ) -> FoldOutcome:
        target = next((d for d in datasets if d.domain_id == held_out), None)
        if target is None:
            raise DatasetError(f"held-out domain {held_out!r} not found")
        train_raw = [d for d in datasets if d.domain_id != held_out]
        method = self.factory.get_method(config.method)
        tracker = PerformanceTracker(f"fold:{held_out}")
        tracker.start()

        split = split_fewshot(target, config.fewshot, config.seed)
        guard = LeakageGuard.for_batch(split.evaluation.batch)
        stats = fit_stats(train_raw)
        train = [stats.apply_to(d) for d in train_raw]
        fewshot = stats.apply_to(split.fewshot)
        evaluation = stats.apply_to(split.evaluation)
        history: dict[str, list[dict[str, float]]] = {}

        stage1 = None
        if method.needs_stage1:
            stage1, history["stage1"] = train_stage1(config, train, guard)
            tracker.checkpoint("stage1")

        context = FoldContext(config=config, train=train, fold=held_out, stage1=stage1, guard=guard)
        steps = method.budget(config)
        if config.selection.mode == "lodo" and steps > 0:
            steps, history["selection"] = self.select_steps(method, context)
            tracker.checkpoint("selection")

        with log_step(f"{method.method.value} 학습", steps=steps):
            trained = method.train(context, steps=steps)
        history.update(trained.history)
        theta = (
            method.adapt(trained, fewshot.batch, context)
            if method.needs_adaptation
            else trained.theta
        )
        report = evaluate_model(theta, evaluation)
        tracker.checkpoint("evaluation")
        tracker.end()
        logger.info(
            "fold 평가 완료",
            accuracy=round(report.accuracy, 4),
            delta_dp=report.delta_dp,
            selected_steps=steps,
        )
        return FoldOutcome(report=report, history=history, selected_steps=steps, stats=stats)

    def select_steps(
        self, method: TrainingMethod, context: FoldContext
    ) -> tuple[int, list[dict[str, float]]]:
        """학습 도메인을 하나씩 검증 도메인으로 빼고 평균 검증 정확도가 가장 높은 길이를 고릅니다.

        동점이면 더 짧은 길이를 고릅니다.
        """
        config = context.config
        if len(context.train) < 2:
            raise DatasetError("model selection needs at least 2 training domains")
        counts = selection_schedule(method.budget(config), config.selection.every)
        scores: dict[int, list[float]] = {count: [] for count in counts}

        for validation in context.train:
            inner = FoldContext(
                config=config,
                train=[d for d in context.train if d is not validation],
                fold=f"{context.fold}|{validation.domain_id}",
                stage1=context.stage1,
                guard=context.guard,
            )
            split = split_fewshot(validation, config.fewshot, config.seed)
            with logger.contextualize(validation=validation.domain_id):
                trained = method.train(inner, steps=counts[-1], snapshot_counts=set(counts))
                for count in counts:
                    candidate = trained.at(count)
                    theta = (
                        method.adapt(candidate, split.fewshot.batch, inner)
                        if method.needs_adaptation
                        else candidate.theta
                    )
                    scores[count].append(evaluate_model(theta, split.evaluation).accuracy)

        record = [
            {"step": float(count), "val_accuracy": float(np.mean(values))}
            for count, values in scores.items()
        ]
        best = max(record, key=lambda r: (r["val_accuracy"], -r["step"]))
        logger.info(
            "학습 길이 선택",
            steps=int(best["step"]),
            val_accuracy=round(best["val_accuracy"], 4),
            candidates=len(counts),
        )
        return int(best["step"]), record
