from __future__ import annotations

try:
    from typing import override
except ImportError:  # Python < 3.12
    from typing_extensions import override

from loguru import logger

from fair_meta_dg.domain.message_bus import MessageBus
from fair_meta_dg.domain.uow import UnitOfWork
from fair_meta_dg.infrastructure.repositories import InMemoryLodoRunRepository


class InMemoryUnitOfWork(UnitOfWork):
    """인메모리 Unit of Work 구현체. commit 시 aggregate 의 이벤트를 버스로 발행합니다."""

    def __init__(self, bus: MessageBus, runs: InMemoryLodoRunRepository | None = None):
        self.runs = runs if runs is not None else InMemoryLodoRunRepository()
        self.bus = bus

    @override
    async def __aenter__(self) -> InMemoryUnitOfWork:
        return self

    @override
    async def __aexit__(self, exc_type, exc_val, traceback):
        await self.rollback()

    @override
    async def commit(self) -> None:
        for run in list(self.runs.seen):
            for event in run.pull_events():
                logger.debug(f"Dispatching event: {event}")
                await self.bus.handle(event)

    @override
    async def rollback(self) -> None:
        pass
