from __future__ import annotations

from collections.abc import Iterable

from loguru import logger

from fair_meta_dg.domain.exceptions import DataLeakageError
from fair_meta_dg.domain.model import ExampleBatch


class LeakageGuard:
    """held-out 평가 split 의 record id 를 기억하고 학습 진입점에서 검사합니다."""

    def __init__(self, forbidden: Iterable[str] = ()) -> None:
        self._forbidden = frozenset(forbidden)

    @classmethod
    def for_batch(cls, batch: ExampleBatch) -> LeakageGuard:
        return cls(batch.record_ids)

    def __len__(self) -> int:
        return len(self._forbidden)

    def check(self, batch: ExampleBatch, where: str) -> None:
        if not self._forbidden:
            return
        leaked = self._forbidden.intersection(batch.record_ids)
        if leaked:
            logger.error("평가 split 레코드가 학습 경로에 유입됨", where=where, count=len(leaked))
            raise DataLeakageError(
                f"{len(leaked)} held-out evaluation records reached {where}: {sorted(leaked)[:3]}"
            )


NO_GUARD = LeakageGuard()
