import uuid
from dataclasses import dataclass, field

from fair_meta_dg.domain.model import LodoResult


# 1. Queries
class Query:
    """Marker class for queries."""

    pass


@dataclass(frozen=True)
class GetLodoResultQuery(Query):
    run_id: uuid.UUID


# 2. Result DTOs (Data Transfer Objects)
@dataclass(frozen=True)
class LodoRunResultDTO:
    run_id: uuid.UUID
    status: str
    result: LodoResult
    failures: dict[str, str] = field(default_factory=dict)
    history: dict[str, list[dict[str, float]]] = field(default_factory=dict)
