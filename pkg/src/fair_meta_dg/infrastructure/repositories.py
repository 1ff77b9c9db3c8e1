import uuid
try:
    from typing import override
except ImportError:  # Python < 3.12
    from typing_extensions import override

from fair_meta_dg.domain.model import LodoRun
from fair_meta_dg.domain.repositories import LodoRunRepository


class InMemoryLodoRunRepository(LodoRunRepository):
    def __init__(self) -> None:
        super().__init__()
        self._runs: dict[uuid.UUID, LodoRun] = {}

    @override
    async def _add(self, run: LodoRun) -> None:
        self._runs[run.run_id] = run

    @override
    async def _get(self, run_id: uuid.UUID) -> LodoRun | None:
        return self._runs.get(run_id)
