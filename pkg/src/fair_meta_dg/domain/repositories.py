import uuid
from abc import ABC, abstractmethod

from fair_meta_dg.domain.model import LodoRun


class LodoRunRepository(ABC):
    seen: set[LodoRun]

    def __init__(self) -> None:
        self.seen = set()

    async def add(self, run: LodoRun) -> None:
        await self._add(run)
        self.seen.add(run)

    async def get(self, run_id: uuid.UUID) -> LodoRun | None:
        run = await self._get(run_id)
        if run:
            self.seen.add(run)
        return run

    @abstractmethod
    async def _add(self, run: LodoRun) -> None:
        raise NotImplementedError

    @abstractmethod
    async def _get(self, run_id: uuid.UUID) -> LodoRun | None:
        raise NotImplementedError
