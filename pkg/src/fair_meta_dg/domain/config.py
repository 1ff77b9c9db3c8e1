"""실험 설정 Value Object 들. 파싱은 infrastructure.config 가 담당합니다."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from fair_meta_dg.domain.exceptions import InvalidHyperparameterError
from fair_meta_dg.domain.model import DualState, FairnessVariant, Method, SamplingMode


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InvalidHyperparameterError(message)


@dataclass(frozen=True)
class SynthSpec:
    """합성 다중 도메인 데이터 생성기의 사양"""

    content_dim: int = 8
    style_dim: int = 4
    sensitive_dim: int = 4
    feature_dim: int = 20
    domains: int = 3
    correlations: tuple[float, ...] = (0.9, 0.7, 0.0)
    style_means: tuple[tuple[float, ...], ...] | None = None
    mixing_seed: int = 0
    noise: float = 0.5
    feature_noise: float = 0.1
    style_scale: float = 2.0
    sensitive_shift: float = 1.5

    def validate(self) -> None:
        _require(
            self.feature_dim >= self.content_dim + self.style_dim + self.sensitive_dim,
            "feature_dim must be >= content_dim + style_dim + sensitive_dim",
        )
        _require(min(self.content_dim, self.style_dim, self.sensitive_dim) >= 1, "latent dims must be >= 1")
        _require(self.domains >= 3, f"need at least 3 domains, got {self.domains}")
        _require(
            len(self.correlations) == self.domains,
            f"expected {self.domains} correlations, got {len(self.correlations)}",
        )
        _require(all(0.0 <= r <= 1.0 for r in self.correlations), "correlations must lie in [0, 1]")
        if self.style_means is not None:
            _require(len(self.style_means) == self.domains, "one style mean per domain required")
            _require(
                all(len(m) == self.style_dim for m in self.style_means),
                "style means must have style_dim entries",
            )
        _require(self.noise >= 0 and self.feature_noise >= 0, "noise scales must be >= 0")


@dataclass(frozen=True)
class Stage1Architecture:
    """disentanglement 네트워크 크기. 모두 FC + ReLU 입니다."""

    semantic_dim: int = 16
    hidden: tuple[int, ...] = (64, 64)
    classifier_hidden: tuple[int, ...] = (16,)
    discriminator_hidden: tuple[int, ...] = (64,)


@dataclass(frozen=True)
class Stage1Hyper:
    beta_z: float = 5.0
    beta_g: float = 0.1
    lr_generator: float = 1e-3
    lr_discriminator: float = 1e-3
    steps: int = 500
    batch_size: int = 64
    seed: int = 0
    non_saturating: bool = False
    log_every: int = 50

    def validate(self) -> None:
        _require(self.beta_z >= 0 and self.beta_g >= 0, "beta_z and beta_g must be >= 0")
        _require(self.steps >= 0, "steps must be >= 0")
        _require(self.batch_size >= 1, "batch_size must be >= 1")
        _require(self.lr_generator >= 0 and self.lr_discriminator >= 0, "learning rates must be >= 0")


@dataclass(frozen=True)
class MetaHyper:
    alpha: float = 1e-3
    eta_p: float = 1e-2
    inner_steps: int = 5
    tasks_per_batch: int = 4
    iterations: int = 200
    n_sup: int = 16
    n_qry: int = 16
    downstream_steps: int = 5
    hidden: tuple[int, ...] = (32, 32, 32)
    variant: FairnessVariant = FairnessVariant.SIGNED
    sampling_mode: SamplingMode = SamplingMode.POOLED
    seed: int = 0
    log_every: int = 10

    def validate(self) -> None:
        _require(self.alpha >= 0 and self.eta_p >= 0, "learning rates must be >= 0")
        _require(self.inner_steps >= 1, "inner_steps must be >= 1")
        _require(self.downstream_steps >= 0, "downstream_steps must be >= 0")
        _require(self.tasks_per_batch >= 1, "tasks_per_batch must be >= 1")
        _require(self.iterations >= 0, "iterations must be >= 0")
        _require(self.n_sup >= 1 and self.n_qry >= 1, "n_sup and n_qry must be >= 1")
        _require(len(self.hidden) == 3, "the classifier has exactly 4 FC layers (3 hidden sizes)")


@dataclass(frozen=True)
class ErmHyper:
    steps: int = 1000
    batch_size: int = 64
    lr: float = 1e-3
    hidden: tuple[int, ...] = (32, 32, 32)
    variant: FairnessVariant = FairnessVariant.SIGNED
    seed: int = 0
    log_every: int = 100

    def validate(self) -> None:
        _require(self.steps >= 0, "steps must be >= 0")
        _require(self.batch_size >= 1, "batch_size must be >= 1")
        _require(self.lr >= 0, "lr must be >= 0")
        _require(len(self.hidden) == 3, "the classifier has exactly 4 FC layers (3 hidden sizes)")


@dataclass(frozen=True)
class SelectionConfig:
    """iterate 선택. lodo 는 학습 도메인을 하나씩 빼며 검증 정확도를 평균합니다."""

    mode: str = "lodo"
    every: int = 25

    def validate(self) -> None:
        _require(self.mode in ("lodo", "none"), f"unknown selection mode {self.mode!r}")
        _require(self.every >= 1, "selection.every must be >= 1")


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    csv_path: str | None = None
    schema: str | None = None
    per_domain_count: int = 500
    synth: SynthSpec = field(default_factory=SynthSpec)

    def validate(self) -> None:
        _require(self.source in ("synthetic", "csv"), f"unknown data source {self.source!r}")
        if self.source == "csv":
            _require(bool(self.csv_path) and bool(self.schema), "csv source needs csv_path and schema")
        else:
            self.synth.validate()
        _require(self.per_domain_count >= 1, "per_domain_count must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    method: Method = Method.FEED
    seed: int = 0
    output_dir: Path = Path("runs")
    fewshot: int = 32
    fairness_variant: FairnessVariant = FairnessVariant.SIGNED
    data: DataConfig = field(default_factory=DataConfig)
    stage1: Stage1Hyper = field(default_factory=Stage1Hyper)
    architecture: Stage1Architecture = field(default_factory=Stage1Architecture)
    meta: MetaHyper = field(default_factory=MetaHyper)
    duals: DualState = field(default_factory=DualState)
    erm: ErmHyper = field(default_factory=ErmHyper)
    selection: SelectionConfig = field(default_factory=SelectionConfig)

    def validate(self) -> None:
        _require(self.fewshot >= 1, "fewshot must be >= 1")
        self.data.validate()
        self.stage1.validate()
        self.meta.validate()
        self.erm.validate()
        self.selection.validate()

    def with_seed(self, seed: int) -> ExperimentConfig:
        """실험 seed 와 단계별 seed 를 함께 바꿉니다."""
        return replace(
            self,
            seed=seed,
            stage1=replace(self.stage1, seed=seed),
            meta=replace(self.meta, seed=seed),
            erm=replace(self.erm, seed=seed),
        )

    def with_method(self, method: Method) -> ExperimentConfig:
        return replace(self, method=method)
