"""CLI 와 테스트가 사용하는 고수준 실행 함수. 모두 메시지 버스를 거칩니다."""

from __future__ import annotations

import uuid
from collections.abc import Sequence
from pathlib import Path
from typing import TYPE_CHECKING

from loguru import logger

from fair_meta_dg.application.commands import CreateLodoRunCommand
from fair_meta_dg.application.queries import GetLodoResultQuery
from fair_meta_dg.domain.config import ExperimentConfig
from fair_meta_dg.domain.exceptions import FoldFailedError
from fair_meta_dg.domain.model import AblationKind, LodoResult, Method
from fair_meta_dg.infrastructure.reports import write_comparison

if TYPE_CHECKING:
    from fair_meta_dg.bootstrap import Application

ABLATION_METHODS = {AblationKind.NO_INNER: Method.ABS1, AblationKind.NO_AUGMENT: Method.ABS2}


async def run_lodo(
    app: Application,
    config: ExperimentConfig,
    out_dir: Path | None = None,
    run_id: uuid.UUID | None = None,
) -> LodoResult:
    """도메인마다 나머지로 학습하고 그 도메인에서 평가한 표를 돌려줍니다."""
    run_id = run_id or uuid.uuid4()
    await app.bus.handle(CreateLodoRunCommand(run_id=run_id, config=config, out_dir=out_dir))
    dto = await app.query_handler.handle(GetLodoResultQuery(run_id=run_id))
    if dto is None:
        raise FoldFailedError(f"run {run_id} was not recorded")
    if dto.failures:
        details = "; ".join(f"{domain}: {message}" for domain, message in dto.failures.items())
        raise FoldFailedError(f"{len(dto.failures)} fold(s) failed: {details}")
    return dto.result


async def run_ablations(
    app: Application,
    config: ExperimentConfig,
    kinds: Sequence[AblationKind] = tuple(AblationKind),
    out_dir: Path | None = None,
) -> dict[AblationKind, LodoResult]:
    results: dict[AblationKind, LodoResult] = {}
    for kind in kinds:
        method = ABLATION_METHODS[kind]
        with logger.contextualize(ablation=kind.value):
            results[kind] = await run_lodo(
                app,
                config.with_method(method),
                out_dir / kind.value if out_dir is not None else None,
            )
    return results


async def compare_methods(
    app: Application,
    config: ExperimentConfig,
    methods: Sequence[Method],
    seeds: Sequence[int],
    out_dir: Path,
) -> list[LodoResult]:
    """method × seed 마다 LODO 를 돌리고 seed 평균 비교표 ``comparison.csv`` 를 씁니다."""
    results: list[LodoResult] = []
    for method in methods:
        for seed in seeds:
            run_config = config.with_method(method).with_seed(seed)
            results.append(
                await run_lodo(app, run_config, out_dir / f"{method.value}_seed{seed}")
            )
    write_comparison(results, out_dir / "comparison.csv")
    logger.info("비교표 작성 완료", methods=[m.value for m in methods], seeds=list(seeds))
    return results
