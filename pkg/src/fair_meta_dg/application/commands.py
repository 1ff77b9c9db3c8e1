import uuid
from dataclasses import dataclass
from pathlib import Path

from fair_meta_dg.domain.config import ExperimentConfig


class Command:
    """모든 커맨드의 기본 클래스 (마커 역할)"""

    pass


@dataclass(frozen=True)
class SynthesizeDatasetsCommand(Command):
    """합성 다중 도메인 CSV 와 ground-truth 잠재변수 sidecar 생성을 요청하는 커맨드"""

    config: ExperimentConfig
    out_dir: Path


@dataclass(frozen=True)
class TrainDisentanglerCommand(Command):
    """stage-1 disentanglement 학습을 요청하는 커맨드. held_out 도메인은 학습에서 제외됩니다."""

    config: ExperimentConfig
    out_path: Path
    held_out: str | None = None


@dataclass(frozen=True)
class MetaTrainCommand(Command):
    """config.method 의 stage-2 학습을 요청하는 커맨드"""

    config: ExperimentConfig
    out_path: Path
    stage1_checkpoint: Path | None = None
    held_out: str | None = None


@dataclass(frozen=True)
class AdaptCommand(Command):
    """학습된 분류기를 domain 의 few-shot split 으로 적응시키는 커맨드"""

    config: ExperimentConfig
    classifier_checkpoint: Path
    domain: str
    out_path: Path
    stage1_checkpoint: Path | None = None


@dataclass(frozen=True)
class EvaluateCommand(Command):
    """domain 의 평가 split 에서 정확도와 공정성 지표 계산을 요청하는 커맨드"""

    config: ExperimentConfig
    classifier_checkpoint: Path
    domain: str
    out_dir: Path


@dataclass(frozen=True)
class CreateLodoRunCommand(Command):
    """leave-one-domain-out 실행 생성을 요청하는 커맨드"""

    run_id: uuid.UUID
    config: ExperimentConfig
    out_dir: Path | None = None


@dataclass(frozen=True)
class ExecuteFoldCommand(Command):
    """개별 fold 실행을 요청하는 커맨드"""

    run_id: uuid.UUID
    fold_id: uuid.UUID
