import uuid
from dataclasses import dataclass
from datetime import datetime


class Event:
    """모든 도메인 이벤트의 기본 클래스 (마커 인터페이스 역할)"""

    pass


@dataclass(frozen=True)
class LodoRunCreated(Event):
    """LodoRun 이 생성되었을 때 발생하는 이벤트"""

    run_id: uuid.UUID
    created_at: datetime


@dataclass(frozen=True)
class LodoRunStarted(Event):
    """LodoRun 이 실행 상태로 바뀌었을 때 발생하는 이벤트"""

    run_id: uuid.UUID


@dataclass(frozen=True)
class FoldCompleted(Event):
    """개별 fold 가 끝났을 때 발생하는 이벤트"""

    run_id: uuid.UUID
    fold_id: uuid.UUID
    status: str  # completed, failed


@dataclass(frozen=True)
class LodoRunCompleted(Event):
    """모든 fold 가 끝났을 때 발생하는 이벤트"""

    run_id: uuid.UUID
