from __future__ import annotations

import uuid
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING
try:
    from typing import override
except ImportError:  # Python < 3.12
    from typing_extensions import override

import numpy as np

from fair_meta_dg.domain.events import (
    Event,
    FoldCompleted,
    LodoRunCompleted,
    LodoRunCreated,
    LodoRunStarted,
)
from fair_meta_dg.domain.exceptions import (
    DatasetError,
    InvalidHyperparameterError,
    ShapeError,
)

if TYPE_CHECKING:
    from fair_meta_dg.domain.config import ExperimentConfig

AVERAGE_ROW = "Avg"

# --- Enums ---


class Method(Enum):
    FEED = "feed"
    ERM = "erm"
    ERM_FC = "erm_fc"
    ABS1 = "abs1"
    ABS2 = "abs2"


class FairnessVariant(Enum):
    LITERAL = "literal"
    SIGNED = "signed"


class SamplingMode(Enum):
    POOLED = "pooled"
    PER_DOMAIN = "per_domain"


class AblationKind(Enum):
    NO_INNER = "abs1_no_inner"
    NO_AUGMENT = "abs2_no_augment"


# --- Value Objects ---


@dataclass(frozen=True)
class Example:
    """하나의 레코드 (x, z, y) 와 선택적 domain 태그"""

    x: np.ndarray
    z: int
    y: int
    domain: str | None = None
    record_id: str | None = None

    def __post_init__(self) -> None:
        if self.z not in (-1, 1):
            raise DatasetError(f"sensitive label must be -1 or +1, got {self.z}")
        if self.y not in (0, 1):
            raise DatasetError(f"class label must be 0 or 1, got {self.y}")

    @override
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Example):
            return NotImplemented
        return (
            np.array_equal(self.x, other.x)
            and self.z == other.z
            and self.y == other.y
            and self.domain == other.domain
        )

    @override
    def __hash__(self) -> int:
        return hash((self.z, self.y, self.domain, self.x.tobytes()))


@dataclass(frozen=True, eq=False)
class ExampleBatch:
    """열 단위로 저장된 예제 묶음. 학습 코드는 모두 이 형태를 사용합니다."""

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    record_ids: tuple[str, ...]
    domains: tuple[str | None, ...]

    def __post_init__(self) -> None:
        n = self.x.shape[0]
        if self.x.ndim != 2:
            raise ShapeError(f"features must be (n, d), got {self.x.shape}")
        if not (len(self.z) == len(self.y) == len(self.record_ids) == len(self.domains) == n):
            raise ShapeError("batch columns have inconsistent lengths")
        if n and not np.all(np.isin(self.z, (-1, 1))):
            raise DatasetError("sensitive labels must be in {-1, +1}")
        if n and not np.all(np.isin(self.y, (0, 1))):
            raise DatasetError("class labels must be in {0, 1}")

    @classmethod
    def from_examples(cls, examples: Sequence[Example], feature_dim: int | None = None) -> ExampleBatch:
        if not examples:
            return cls.empty(feature_dim or 0)
        return cls(
            x=np.stack([np.asarray(e.x, dtype=np.float64) for e in examples]),
            z=np.array([e.z for e in examples], dtype=np.int64),
            y=np.array([e.y for e in examples], dtype=np.int64),
            record_ids=tuple(
                e.record_id or f"{e.domain or 'anon'}:r{i}" for i, e in enumerate(examples)
            ),
            domains=tuple(e.domain for e in examples),
        )

    @classmethod
    def empty(cls, feature_dim: int) -> ExampleBatch:
        return cls(
            x=np.zeros((0, feature_dim)),
            z=np.zeros(0, dtype=np.int64),
            y=np.zeros(0, dtype=np.int64),
            record_ids=(),
            domains=(),
        )

    @classmethod
    def concat(cls, batches: Sequence[ExampleBatch]) -> ExampleBatch:
        if not batches:
            raise DatasetError("cannot concatenate zero batches")
        return cls(
            x=np.concatenate([b.x for b in batches], axis=0),
            z=np.concatenate([b.z for b in batches]),
            y=np.concatenate([b.y for b in batches]),
            record_ids=tuple(r for b in batches for r in b.record_ids),
            domains=tuple(d for b in batches for d in b.domains),
        )

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.x.shape[0]

    def __iter__(self) -> Iterator[Example]:
        for i in range(len(self)):
            yield self.example(i)

    def example(self, i: int) -> Example:
        return Example(
            x=self.x[i].copy(),
            z=int(self.z[i]),
            y=int(self.y[i]),
            domain=self.domains[i],
            record_id=self.record_ids[i],
        )

    def take(self, indices: Iterable[int] | np.ndarray) -> ExampleBatch:
        idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices, dtype=np.int64)
        return ExampleBatch(
            x=self.x[idx],
            z=self.z[idx],
            y=self.y[idx],
            record_ids=tuple(self.record_ids[i] for i in idx),
            domains=tuple(self.domains[i] for i in idx),
        )

    def with_features(self, x: np.ndarray) -> ExampleBatch:
        return replace(self, x=x)

    def has_both_groups(self) -> bool:
        return bool(np.any(self.z == 1) and np.any(self.z == -1))


@dataclass(frozen=True, eq=False)
class GroundTruthLatents:
    """합성 데이터의 실제 잠재변수. 테스트 oracle 전용이며 학습 코드는 읽지 않습니다."""

    c: np.ndarray
    s: np.ndarray
    a: np.ndarray

    def take(self, indices: np.ndarray) -> GroundTruthLatents:
        return GroundTruthLatents(c=self.c[indices], s=self.s[indices], a=self.a[indices])


@dataclass(frozen=True, eq=False)
class DomainDataset:
    domain_id: str
    batch: ExampleBatch
    latents: GroundTruthLatents | None = None

    @property
    def feature_dim(self) -> int:
        return self.batch.feature_dim

    @property
    def examples(self) -> list[Example]:
        return list(self.batch)

    @property
    def single_group(self) -> bool:
        return not self.batch.has_both_groups()

    def __len__(self) -> int:
        return len(self.batch)

    def take(self, indices: np.ndarray) -> DomainDataset:
        return DomainDataset(
            domain_id=self.domain_id,
            batch=self.batch.take(indices),
            latents=self.latents.take(indices) if self.latents else None,
        )

    def with_features(self, x: np.ndarray) -> DomainDataset:
        return replace(self, batch=self.batch.with_features(x))


@dataclass(frozen=True)
class Task:
    """support/query 가 겹치지 않는 meta-learning task"""

    support: ExampleBatch
    query: ExampleBatch

    def __post_init__(self) -> None:
        if len(self.support) == 0 or len(self.query) == 0:
            raise DatasetError("support and query must both be non-empty")
        overlap = set(self.support.record_ids) & set(self.query.record_ids)
        if overlap:
            raise DatasetError(f"support and query share records: {sorted(overlap)[:5]}")


@dataclass(frozen=True, eq=False)
class LatentBundle:
    """하나(또는 한 배치)의 예제에서 얻은 네 개의 잠재 요인"""

    m: np.ndarray
    c: np.ndarray
    s: np.ndarray
    a: np.ndarray


@dataclass(frozen=True)
class AugmentedPair:
    original: Example
    augmented: Example

    def __post_init__(self) -> None:
        if self.augmented.y != self.original.y:
            raise DatasetError("augmentation must preserve the class label")


@dataclass(frozen=True)
class DualState:
    """불변성(λ1)/공정성(λ2) 제약의 dual 변수와 상수"""

    lambda1: float = 0.0
    lambda2: float = 0.0
    gamma1: float = 0.05
    gamma2: float = 0.05
    eta_d: float = 1e-2

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidHyperparameterError("dual variables must be nonnegative")
        if self.gamma1 < 0 or self.gamma2 < 0 or self.eta_d < 0:
            raise InvalidHyperparameterError("dual constants must be nonnegative")


@dataclass(frozen=True)
class FairReport:
    """한 평가 도메인에 대한 정확도와 세 가지 group-fairness 지표"""

    domain_id: str
    accuracy: float
    delta_dp: float | None
    delta_eopp: float | None
    delta_eo: float | None
    group_counts: dict[int, int] = field(default_factory=dict)
    missing: dict[str, str] = field(default_factory=dict)

    def metric(self, name: str) -> float | None:
        return getattr(self, name)


METRIC_NAMES = ("accuracy", "delta_dp", "delta_eopp", "delta_eo")


@dataclass(frozen=True)
class LodoResult:
    """held-out 도메인별 FairReport 와 평균 행"""

    method: Method
    seed: int
    rows: list[FairReport]

    def average(self) -> FairReport:
        values: dict[str, float | None] = {}
        missing: dict[str, str] = {}
        for name in METRIC_NAMES:
            present = [r.metric(name) for r in self.rows if r.metric(name) is not None]
            if len(present) < len(self.rows):
                missing[name] = f"absent in {len(self.rows) - len(present)} domain rows"
            values[name] = float(np.mean(present)) if present else None
        counts: dict[int, int] = {}
        for row in self.rows:
            for group, count in row.group_counts.items():
                counts[group] = counts.get(group, 0) + count
        return FairReport(
            domain_id=AVERAGE_ROW,
            accuracy=values["accuracy"] if values["accuracy"] is not None else float("nan"),
            delta_dp=values["delta_dp"],
            delta_eopp=values["delta_eopp"],
            delta_eo=values["delta_eo"],
            group_counts=counts,
            missing=missing,
        )

    def table(self) -> list[FairReport]:
        return [*self.rows, self.average()]


# --- Enums for Status ---


class FoldStatus(Enum):
    PENDING = "pending"
    COMPLETED = "completed"
    FAILED = "failed"


class RunStatus(Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"


# --- Entities & Aggregate Root ---


@dataclass(eq=False)
class FoldTask:
    """하나의 held-out 도메인에 대한 leave-one-domain-out fold"""

    held_out_domain: str
    status: FoldStatus = FoldStatus.PENDING
    report: FairReport | None = None
    history: dict[str, list[dict[str, float]]] = field(default_factory=dict)
    error_message: str | None = None
    fold_id: uuid.UUID = field(default_factory=uuid.uuid4)

    def complete(self, report: FairReport, history: dict[str, list[dict[str, float]]]) -> None:
        self.status = FoldStatus.COMPLETED
        self.report = report
        self.history = history

    def mark_as_error(self, message: str) -> None:
        self.status = FoldStatus.FAILED
        self.error_message = message

    @override
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FoldTask):
            return NotImplemented
        return self.fold_id == other.fold_id

    @override
    def __hash__(self) -> int:
        return hash(self.fold_id)


@dataclass(eq=False)
class LodoRun:
    """fold 들을 묶는 Aggregate Root. 상태 변화마다 이벤트를 기록합니다."""

    config: ExperimentConfig
    folds: list[FoldTask]
    out_dir: Path | None = None
    status: RunStatus = RunStatus.PENDING
    created_at: datetime = field(default_factory=datetime.now)
    run_id: uuid.UUID = field(default_factory=uuid.uuid4)
    events: list[Event] = field(default_factory=list)

    @staticmethod
    def create(
        run_id: uuid.UUID,
        config: ExperimentConfig,
        domain_ids: Sequence[str],
        out_dir: Path | None = None,
    ) -> LodoRun:
        if len(domain_ids) < 3:
            raise DatasetError(
                f"leave-one-domain-out needs at least 3 domains, got {len(domain_ids)}"
            )
        run = LodoRun(
            config=config,
            folds=[FoldTask(held_out_domain=d) for d in domain_ids],
            out_dir=out_dir,
            run_id=run_id,
        )
        run.events.append(LodoRunCreated(run_id=run.run_id, created_at=run.created_at))
        return run

    @property
    def method(self) -> Method:
        return self.config.method

    @property
    def seed(self) -> int:
        return self.config.seed

    def failed_folds(self) -> list[FoldTask]:
        return [f for f in self.folds if f.status == FoldStatus.FAILED]

    def history(self) -> dict[str, list[dict[str, float]]]:
        """"held_out_domain/phase" → 학습 기록"""
        return {
            f"{f.held_out_domain}/{phase}": records
            for f in self.folds
            for phase, records in f.history.items()
        }

    def pull_events(self) -> list[Event]:
        pulled_events = self.events[:]
        self.events.clear()
        return pulled_events

    def start(self) -> None:
        if self.status != RunStatus.PENDING:
            raise ValueError("run already started or finished")
        self.status = RunStatus.RUNNING
        self.events.append(LodoRunStarted(run_id=self.run_id))

    def complete_fold(
        self,
        fold_id: uuid.UUID,
        report: FairReport,
        history: dict[str, list[dict[str, float]]],
    ) -> None:
        fold = self._find_fold(fold_id)
        if fold:
            fold.complete(report, history)
            self.events.append(
                FoldCompleted(run_id=self.run_id, fold_id=fold.fold_id, status=fold.status.value)
            )

    def fail_fold(self, fold_id: uuid.UUID, message: str) -> None:
        fold = self._find_fold(fold_id)
        if fold:
            fold.mark_as_error(message)
            self.events.append(
                FoldCompleted(run_id=self.run_id, fold_id=fold.fold_id, status=fold.status.value)
            )

    def _find_fold(self, fold_id: uuid.UUID) -> FoldTask | None:
        return next((f for f in self.folds if f.fold_id == fold_id), None)

    def check_if_completed(self) -> None:
        """모든 fold 가 끝났는지 확인하고, 처음 완료되는 시점에만 이벤트를 발행합니다."""
        if self.status != RunStatus.COMPLETED and all(
            f.status != FoldStatus.PENDING for f in self.folds
        ):
            self.status = RunStatus.COMPLETED
            self.events.append(LodoRunCompleted(run_id=self.run_id))

    def result(self) -> LodoResult:
        return LodoResult(
            method=self.method,
            seed=self.seed,
            rows=[f.report for f in self.folds if f.report is not None],
        )

    @override
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LodoRun):
            return NotImplemented
        return self.run_id == other.run_id

    @override
    def __hash__(self) -> int:
        return hash(self.run_id)
