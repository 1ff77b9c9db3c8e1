from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path
from typing import TYPE_CHECKING, Final

from loguru import logger

from fair_meta_dg.application.commands import (
    AdaptCommand,
    CreateLodoRunCommand,
    EvaluateCommand,
    ExecuteFoldCommand,
    MetaTrainCommand,
    SynthesizeDatasetsCommand,
    TrainDisentanglerCommand,
)
from fair_meta_dg.application.queries import GetLodoResultQuery, LodoRunResultDTO
from fair_meta_dg.domain.config import ExperimentConfig
from fair_meta_dg.domain.events import (
    FoldCompleted,
    LodoRunCompleted,
    LodoRunCreated,
    LodoRunStarted,
)
from fair_meta_dg.domain.exceptions import DatasetError, FeedError
from fair_meta_dg.domain.leakage import LeakageGuard
from fair_meta_dg.domain.message_bus import MessageBus
from fair_meta_dg.domain.model import (
    DomainDataset,
    DualState,
    FoldStatus,
    LodoResult,
    LodoRun,
    Method,
    RunStatus,
)
from fair_meta_dg.infrastructure.checkpoint import (
    Checkpoint,
    classifier_checkpoint,
    classifier_from_checkpoint,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    stage1_checkpoint,
    stats_from_checkpoint,
)
from fair_meta_dg.infrastructure.config import dump_config, fingerprint
from fair_meta_dg.infrastructure.datasets import (
    WRITTEN_SCHEMA,
    DatasetProvider,
    generate_synthetic,
    write_csv,
    write_latents,
)
from fair_meta_dg.infrastructure.exceptions import CheckpointFormatError
from fair_meta_dg.infrastructure.methods.base import FoldContext, TrainedClassifier
from fair_meta_dg.infrastructure.methods.factory import MethodFactory
from fair_meta_dg.infrastructure.methods.runner import FoldRunner, split_fewshot, train_stage1
from fair_meta_dg.infrastructure.reports import emit_report, write_history
from fair_meta_dg.learning.evaluation import evaluate_model
from fair_meta_dg.learning.preprocessing import FeatureStats, fit_stats

if TYPE_CHECKING:
    from fair_meta_dg.domain.uow import UnitOfWork


# --- 공통 헬퍼 ---


def _find_domain(datasets: Sequence[DomainDataset], domain_id: str) -> DomainDataset:
    for dataset in datasets:
        if dataset.domain_id == domain_id:
            return dataset
    known = ", ".join(d.domain_id for d in datasets)
    raise DatasetError(f"unknown domain {domain_id!r} (known: {known})")


def _training_domains(datasets: Sequence[DomainDataset], held_out: str | None) -> list[DomainDataset]:
    if held_out is not None:
        _find_domain(datasets, held_out)
    return [d for d in datasets if d.domain_id != held_out]


def _method_of(checkpoint: Checkpoint, config: ExperimentConfig) -> Method:
    raw = checkpoint.metadata.get("method")
    return Method(raw) if raw else config.method


def _duals_of(checkpoint: Checkpoint, config: ExperimentConfig) -> DualState:
    try:
        return DualState(
            lambda1=float(checkpoint.metadata.get("lambda1", config.duals.lambda1)),
            lambda2=float(checkpoint.metadata.get("lambda2", config.duals.lambda2)),
            gamma1=config.duals.gamma1,
            gamma2=config.duals.gamma2,
            eta_d=config.duals.eta_d,
        )
    except ValueError as e:
        raise CheckpointFormatError(f"unreadable dual variables in checkpoint: {e}") from e


def _stats_or_fail(checkpoint: Checkpoint, path: Path) -> FeatureStats:
    stats = stats_from_checkpoint(checkpoint)
    if stats is None:
        raise CheckpointFormatError(f"{path.name}: checkpoint has no normalization statistics")
    return stats


# --- 단일 단계 커맨드 ---


class SynthesizeDatasetsCommandHandler:
    async def handle(self, command: SynthesizeDatasetsCommand):
        config = command.config
        with logger.contextualize(seed=config.seed):
            datasets = generate_synthetic(
                config.data.synth, config.data.per_domain_count, config.seed
            )
            out_dir = Path(command.out_dir)
            write_csv(datasets, out_dir / "synthetic.csv")
            for dataset in datasets:
                write_latents(dataset, out_dir / f"{dataset.domain_id}.latents.csv")
            (out_dir / "schema.txt").write_text(WRITTEN_SCHEMA + "\n", encoding="utf-8")
            logger.info(
                f"합성 데이터 {len(datasets)}개 도메인 작성 완료",
                out_dir=str(out_dir),
                per_domain=config.data.per_domain_count,
            )


class TrainDisentanglerCommandHandler:
    def __init__(self, provider: DatasetProvider):
        self.provider: Final = provider

    async def handle(self, command: TrainDisentanglerCommand):
        config = command.config
        with logger.contextualize(stage="stage1", held_out=command.held_out):
            datasets = self.provider.load(config.data, config.seed)
            train_raw = _training_domains(datasets, command.held_out)
            stats = fit_stats(train_raw)
            model, history = train_stage1(config, [stats.apply_to(d) for d in train_raw])
            out_path = save_checkpoint(
                command.out_path, stage1_checkpoint(model, stats, fingerprint(config))
            )
            write_history(
                {f"{command.held_out or 'all'}/stage1": history},
                out_path.with_suffix(".history.jsonl"),
            )
            logger.info("stage-1 체크포인트 저장 완료", path=str(out_path))


class MetaTrainCommandHandler:
    def __init__(self, provider: DatasetProvider, factory: MethodFactory):
        self.provider: Final = provider
        self.factory: Final = factory

    async def handle(self, command: MetaTrainCommand):
        config = command.config
        with logger.contextualize(method=config.method.value, held_out=command.held_out):
            datasets = self.provider.load(config.data, config.seed)
            train_raw = _training_domains(datasets, command.held_out)
            method = self.factory.get_method(config.method)
            history: dict[str, list[dict[str, float]]] = {}

            stage1 = None
            if command.stage1_checkpoint is not None:
                checkpoint = load_checkpoint(command.stage1_checkpoint)
                stage1 = model_from_checkpoint(checkpoint)
                stats = _stats_or_fail(checkpoint, Path(command.stage1_checkpoint))
                train = [stats.apply_to(d) for d in train_raw]
            else:
                stats = fit_stats(train_raw)
                train = [stats.apply_to(d) for d in train_raw]
                if method.needs_stage1:
                    stage1, history["stage1"] = train_stage1(config, train)

            context = FoldContext(
                config=config, train=train, fold=command.held_out or "all", stage1=stage1
            )
            trained = method.train(context)
            history.update(trained.history)

            checkpoint = classifier_checkpoint(
                trained.theta, stats, fingerprint(config), method.method.value
            )
            checkpoint.metadata["lambda1"] = repr(trained.duals.lambda1)
            checkpoint.metadata["lambda2"] = repr(trained.duals.lambda2)
            out_path = save_checkpoint(command.out_path, checkpoint)
            key = command.held_out or "all"
            write_history(
                {f"{key}/{phase}": records for phase, records in history.items()},
                out_path.with_suffix(".history.jsonl"),
            )
            logger.info(
                "분류기 체크포인트 저장 완료",
                path=str(out_path),
                lambda1=trained.duals.lambda1,
                lambda2=trained.duals.lambda2,
            )


class AdaptCommandHandler:
    def __init__(self, provider: DatasetProvider, factory: MethodFactory):
        self.provider: Final = provider
        self.factory: Final = factory

    async def handle(self, command: AdaptCommand):
        config = command.config
        with logger.contextualize(domain=command.domain):
            checkpoint = load_checkpoint(command.classifier_checkpoint)
            theta = classifier_from_checkpoint(checkpoint)
            stats = _stats_or_fail(checkpoint, Path(command.classifier_checkpoint))
            method = self.factory.get_method(_method_of(checkpoint, config))

            stage1 = None
            if command.stage1_checkpoint is not None:
                stage1 = model_from_checkpoint(load_checkpoint(command.stage1_checkpoint))
            elif method.needs_adaptation and method.needs_stage1:
                raise CheckpointFormatError(
                    f"{method.method.value} adaptation needs a stage-1 checkpoint (--stage1)"
                )

            dataset = _find_domain(self.provider.load(config.data, config.seed), command.domain)
            split = split_fewshot(dataset, config.fewshot, config.seed)
            context = FoldContext(
                config=config,
                train=[],
                fold=command.domain,
                stage1=stage1,
                guard=LeakageGuard.for_batch(split.evaluation.batch),
            )
            adapted = method.adapt(
                TrainedClassifier(theta=theta, duals=_duals_of(checkpoint, config)),
                stats.apply_to(split.fewshot).batch,
                context,
            )
            out = classifier_checkpoint(
                adapted, stats, checkpoint.metadata.get("fingerprint"), method.method.value
            )
            out.metadata["adapted_to"] = command.domain
            save_checkpoint(command.out_path, out)
            logger.info(
                "few-shot 적응 완료",
                fewshot=len(split.fewshot),
                adapted=method.needs_adaptation,
                path=str(command.out_path),
            )


class EvaluateCommandHandler:
    def __init__(self, provider: DatasetProvider):
        self.provider: Final = provider

    async def handle(self, command: EvaluateCommand):
        config = command.config
        with logger.contextualize(domain=command.domain):
            checkpoint = load_checkpoint(command.classifier_checkpoint)
            theta = classifier_from_checkpoint(checkpoint)
            stats = _stats_or_fail(checkpoint, Path(command.classifier_checkpoint))
            dataset = _find_domain(self.provider.load(config.data, config.seed), command.domain)
            split = split_fewshot(dataset, config.fewshot, config.seed)
            report = evaluate_model(theta, stats.apply_to(split.evaluation))
            result = LodoResult(
                method=_method_of(checkpoint, config), seed=config.seed, rows=[report]
            )
            emit_report(result, command.out_dir, stem="evaluation")
            logger.info(
                "평가 완료",
                accuracy=round(report.accuracy, 4),
                delta_dp=report.delta_dp,
                delta_eopp=report.delta_eopp,
                delta_eo=report.delta_eo,
            )


# --- LODO 실행 ---


class CreateLodoRunCommandHandler:
    def __init__(self, uow: UnitOfWork, provider: DatasetProvider):
        self.uow: Final = uow
        self.provider: Final = provider

    async def handle(self, command: CreateLodoRunCommand):
        with logger.contextualize(run_id=str(command.run_id)):
            logger.debug(f"Handling CreateLodoRunCommand for run {command.run_id}.")
            config = command.config
            datasets = self.provider.load(config.data, config.seed)
            async with self.uow:
                run = LodoRun.create(
                    run_id=command.run_id,
                    config=config,
                    domain_ids=[d.domain_id for d in datasets],
                    out_dir=command.out_dir,
                )
                await self.uow.runs.add(run)
                await self.uow.commit()
            logger.info(
                f"LodoRun {run.run_id} created with {len(run.folds)} folds.",
                method=config.method.value,
                seed=config.seed,
            )


class LodoRunCreatedHandler:
    def __init__(self, uow: UnitOfWork):
        self.uow: Final = uow

    async def handle(self, event: LodoRunCreated):
        with logger.contextualize(run_id=str(event.run_id)):
            async with self.uow:
                run = await self.uow.runs.get(event.run_id)
                if not run:
                    logger.warning(f"Run {event.run_id} not found. Cannot start.")
                    return
                run.start()
                await self.uow.commit()
            logger.info(f"LodoRun {run.run_id} started.")


class LodoRunStartedHandler:
    def __init__(self, uow: UnitOfWork, bus: MessageBus):
        self.uow: Final = uow
        self.bus: Final = bus

    async def handle(self, event: LodoRunStarted):
        with logger.contextualize(run_id=str(event.run_id)):
            async with self.uow:
                run = await self.uow.runs.get(event.run_id)
                if not run:
                    logger.warning(f"Run {event.run_id} not found. Cannot dispatch folds.")
                    return
                logger.info(f"Dispatching {len(run.folds)} folds for run {run.run_id}.")
                for fold in run.folds:
                    await self.bus.handle(ExecuteFoldCommand(run_id=run.run_id, fold_id=fold.fold_id))
            logger.debug(f"Finished dispatching folds for run {event.run_id}.")


class ExecuteFoldCommandHandler:
    def __init__(self, uow: UnitOfWork, runner: FoldRunner, provider: DatasetProvider):
        self.uow: Final = uow
        self.runner: Final = runner
        self.provider: Final = provider

    async def handle(self, command: ExecuteFoldCommand):
        with logger.contextualize(run_id=str(command.run_id), fold_id=str(command.fold_id)):
            try:
                async with self.uow:
                    run = await self.uow.runs.get(command.run_id)
                    if not run:
                        logger.warning("Run not found. Aborting fold.")
                        return
                    fold = next((f for f in run.folds if f.fold_id == command.fold_id), None)
                    if not fold:
                        logger.warning("Fold not found in run. Aborting.")
                        return

                    with logger.contextualize(fold=fold.held_out_domain):
                        datasets = self.provider.load(run.config.data, run.config.seed)
                        outcome = self.runner.run(run.config, datasets, fold.held_out_domain)
                    run.complete_fold(fold.fold_id, outcome.report, outcome.history)
                    await self.uow.runs.add(run)
                    await self.uow.commit()

            except (FeedError, OSError, ValueError) as e:
                logger.exception("fold 실행 중 오류 발생")
                try:
                    async with self.uow:
                        run = await self.uow.runs.get(command.run_id)
                        if run:
                            run.fail_fold(command.fold_id, f"{type(e).__name__}: {e}")
                            await self.uow.runs.add(run)
                            await self.uow.commit()
                except Exception as inner_e:
                    logger.critical(
                        f"Failed to mark fold as failed after initial exception: {inner_e}"
                    )


class FoldCompletedHandler:
    def __init__(self, uow: UnitOfWork):
        self.uow: Final = uow

    async def handle(self, event: FoldCompleted):
        with logger.contextualize(run_id=str(event.run_id), fold_id=str(event.fold_id)):
            async with self.uow:
                run = await self.uow.runs.get(event.run_id)
                if not run:
                    logger.warning(f"Run {event.run_id} not found. Cannot check for completion.")
                    return

                is_completed_before = run.status == RunStatus.COMPLETED
                run.check_if_completed()
                if not is_completed_before and run.status == RunStatus.COMPLETED:
                    logger.info(f"All folds for run {run.run_id} are complete.")
                else:
                    pending = [f for f in run.folds if f.status == FoldStatus.PENDING]
                    logger.debug(f"Run {run.run_id} not yet complete. {len(pending)} folds pending.")
                await self.uow.commit()


class LodoRunCompletedHandler:
    def __init__(self, uow: UnitOfWork):
        self.uow: Final = uow

    async def handle(self, event: LodoRunCompleted):
        with logger.contextualize(run_id=str(event.run_id)):
            async with self.uow:
                run = await self.uow.runs.get(event.run_id)
                if not run:
                    logger.warning(f"Run {event.run_id} not found. Cannot emit report.")
                    return
                failed = run.failed_folds()
                if failed:
                    logger.error(
                        "실패한 fold 가 있어 결과 파일을 쓰지 않습니다",
                        failed=[f.held_out_domain for f in failed],
                    )
                    return
                if run.out_dir is None:
                    logger.info(f"Run {run.run_id} completed (no output directory).")
                    return
                emit_report(run.result(), run.out_dir, history=run.history())
                (run.out_dir / "config.cfg").write_text(
                    dump_config(run.config, include_output_dir=False), encoding="utf-8"
                )
            logger.info(f"Run {event.run_id} report written.", out_dir=str(run.out_dir))


class GetLodoResultQueryHandler:
    def __init__(self, uow: UnitOfWork):
        self.uow: Final = uow

    async def handle(self, query: GetLodoResultQuery) -> LodoRunResultDTO | None:
        with logger.contextualize(run_id=str(query.run_id)):
            async with self.uow:
                run = await self.uow.runs.get(query.run_id)
                if not run:
                    logger.warning(f"Run {query.run_id} not found in query handler.")
                    return None
                return LodoRunResultDTO(
                    run_id=run.run_id,
                    status=run.status.value,
                    result=run.result(),
                    failures={
                        f.held_out_domain: f.error_message or "" for f in run.failed_folds()
                    },
                    history=run.history(),
                )
