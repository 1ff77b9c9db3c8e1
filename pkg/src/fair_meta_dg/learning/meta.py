"""Stage 2: 공정성 제약이 있는 meta-learning.

분류기 f 는 4 개의 FC layer 와 2-class softmax head 로 구성됩니다.
손실은 L_total = L_cls + λ1·L_inv + λ2·L_fair 이며, dual 변수는
λ ← max(λ + η_d (L − γ), 0) 로 갱신됩니다.

meta-gradient 는 1차 근사입니다: θ′ 에서 구한 query loss gradient 를 θ 에 그대로 적용합니다.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from loguru import logger

from fair_meta_dg.domain.config import ErmHyper, MetaHyper
from fair_meta_dg.domain.exceptions import DivergenceError, NonFiniteError, ShapeError
from fair_meta_dg.domain.leakage import NO_GUARD, LeakageGuard
from fair_meta_dg.domain.model import (
    AblationKind,
    DomainDataset,
    DualState,
    ExampleBatch,
    FairnessVariant,
    Task,
)
from fair_meta_dg.learning.disentangle import DisentangleModel
from fair_meta_dg.learning.layers import MLP, OutputActivation, as_batch, cross_entropy
from fair_meta_dg.learning.optim import OptimizerState, optimizer_step
from fair_meta_dg.learning.sampling import pooled, sample_tasks
from fair_meta_dg.learning.tensor import (
    GradientMap,
    ParameterStore,
    Tensor,
    backward,
    clamp_probability,
    no_grad,
)
from fair_meta_dg.learning.transform import augment_batch

CLASSIFIER_PREFIX = "f"

TaskSampler = Callable[[int], Sequence[Task]]
IterationCallback = Callable[[int, ParameterStore, DualState], None]


class MetaVariant(Enum):
    FULL = "feed"
    NO_INNER = AblationKind.NO_INNER.value
    NO_AUGMENT = AblationKind.NO_AUGMENT.value

    @classmethod
    def for_ablation(cls, kind: AblationKind) -> MetaVariant:
        return cls(kind.value)


@dataclass
class FairnessWarnings:
    """한 그룹만 있는 배치에서 L_fair 를 0 으로 둔 횟수"""

    single_group: int = 0

    def record(self, size: int) -> None:
        self.single_group += 1
        logger.warning("단일 그룹 배치: 공정성 항을 0 으로 처리", batch_size=size, count=self.single_group)


# --- 분류기 ---


def classifier_net(in_dim: int, hidden: Sequence[int] = (32, 32, 32)) -> MLP:
    return MLP.build(CLASSIFIER_PREFIX, in_dim, hidden, 2, OutputActivation.SOFTMAX)


def init_classifier(in_dim: int, hidden: Sequence[int] = (32, 32, 32), seed: int = 0) -> ParameterStore:
    theta = ParameterStore()
    classifier_net(in_dim, hidden).init_params(theta, np.random.default_rng(seed))
    return theta


def _net_for(theta: ParameterStore) -> MLP:
    layers = sum(1 for name in theta if name.endswith(".weight"))
    shapes = [theta[f"{CLASSIFIER_PREFIX}/{i}.weight"].shape for i in range(layers)]
    sizes = (shapes[0][0], *(s[1] for s in shapes))
    return MLP(prefix=CLASSIFIER_PREFIX, sizes=sizes, output=OutputActivation.SOFTMAX)


def _probs(theta: ParameterStore, x: Tensor) -> Tensor:
    return _net_for(theta)(theta, x)


def classify(theta: ParameterStore, x: np.ndarray) -> np.ndarray:
    """f(x, θ) = (P(ŷ=0), P(ŷ=1)). 1-D 입력이면 길이 2 벡터를 돌려줍니다."""
    single = np.ndim(x) == 1
    with no_grad():
        probs = _probs(theta, as_batch(x)).numpy()
    return probs[0] if single else probs


# --- 손실 ---


def loss_cls(theta: ParameterStore, batch: ExampleBatch) -> Tensor:
    return cross_entropy(_probs(theta, Tensor(batch.x)), batch.y)


def kl_divergence(p: Tensor, q: Tensor) -> Tensor:
    """행 단위 KL(p ‖ q) 의 평균. 두 확률 모두 clamp 됩니다."""
    p_c = clamp_probability(p)
    return (p_c * (p_c.log() - clamp_probability(q).log())).sum(axis=1).mean()


def _check_aligned(batch: ExampleBatch, batch_aug: ExampleBatch) -> None:
    if len(batch) != len(batch_aug):
        raise ShapeError(f"batch ({len(batch)}) and augmented batch ({len(batch_aug)}) differ in length")


def loss_inv(theta: ParameterStore, batch: ExampleBatch, batch_aug: ExampleBatch) -> Tensor:
    _check_aligned(batch, batch_aug)
    return kl_divergence(_probs(theta, Tensor(batch.x)), _probs(theta, Tensor(batch_aug.x)))


def fair_g(p1: float, z: int, f_value: float, variant: FairnessVariant = FairnessVariant.SIGNED) -> float:
    """g = (1/(p1(1−p1))) ((z+1)/2 − p1) f. literal 은 안쪽 절대값을 그대로 둡니다."""
    if not 0.0 < p1 < 1.0:
        raise ValueError(f"group proportion p1 must lie in (0, 1), got {p1}")
    value = ((z + 1) / 2 - p1) * f_value / (p1 * (1.0 - p1))
    return abs(value) if variant is FairnessVariant.LITERAL else value


def fairness_mean(
    f: Tensor,
    z: np.ndarray,
    variant: FairnessVariant = FairnessVariant.SIGNED,
    warnings: FairnessWarnings | None = None,
) -> Tensor:
    """|mean_i g(f_i, z_i)|. p1 은 이 배치에서 z=+1 의 비율입니다."""
    z = np.asarray(z)
    p1 = float(np.mean(z == 1)) if z.size else 0.0
    if not 0.0 < p1 < 1.0:
        (warnings if warnings is not None else FairnessWarnings()).record(int(z.size))
        return Tensor(0.0)
    coef = ((z + 1) / 2 - p1) / (p1 * (1.0 - p1))
    g = f * coef
    if variant is FairnessVariant.LITERAL:
        g = g.abs()
    return g.mean().abs()


def loss_fair(
    theta: ParameterStore,
    batch: ExampleBatch,
    batch_aug: ExampleBatch,
    variant: FairnessVariant = FairnessVariant.SIGNED,
    warnings: FairnessWarnings | None = None,
) -> Tensor:
    f = _probs(theta, Tensor(batch.x))[:, 1]
    f_aug = _probs(theta, Tensor(batch_aug.x))[:, 1]
    return fairness_mean(f, batch.z, variant, warnings) + fairness_mean(f_aug, batch_aug.z, variant, warnings)


def loss_components(
    theta: ParameterStore,
    batch: ExampleBatch,
    batch_aug: ExampleBatch,
    duals: DualState,
    variant: FairnessVariant = FairnessVariant.SIGNED,
    warnings: FairnessWarnings | None = None,
) -> dict[str, Tensor]:
    """L_cls, L_inv, L_fair, L_total 을 한 번의 순전파로 계산합니다."""
    _check_aligned(batch, batch_aug)
    probs = _probs(theta, Tensor(batch.x))
    probs_aug = _probs(theta, Tensor(batch_aug.x))
    cls = cross_entropy(probs, batch.y)
    inv = kl_divergence(probs, probs_aug)
    fair = fairness_mean(probs[:, 1], batch.z, variant, warnings) + fairness_mean(
        probs_aug[:, 1], batch_aug.z, variant, warnings
    )
    total = cls + duals.lambda1 * inv + duals.lambda2 * fair
    return {"L_cls": cls, "L_inv": inv, "L_fair": fair, "L_total": total}


def loss_total(
    theta: ParameterStore,
    batch: ExampleBatch,
    batch_aug: ExampleBatch,
    duals: DualState,
    variant: FairnessVariant = FairnessVariant.SIGNED,
    warnings: FairnessWarnings | None = None,
) -> Tensor:
    return loss_components(theta, batch, batch_aug, duals, variant, warnings)["L_total"]


def _ascend(lam: float, eta: float, value: float, gamma: float) -> float:
    return max(lam + eta * (value - gamma), 0.0)


def dual_update(duals: DualState, l_inv_value: float, l_fair_value: float) -> DualState:
    return replace(
        duals,
        lambda1=_ascend(duals.lambda1, duals.eta_d, l_inv_value, duals.gamma1),
        lambda2=_ascend(duals.lambda2, duals.eta_d, l_fair_value, duals.gamma2),
    )


# --- 적응 루프 ---


def adapt_parameters(
    theta: ParameterStore,
    objective: Callable[[ParameterStore], Tensor],
    steps: int,
    optimizer: OptimizerState,
) -> ParameterStore:
    """θ 의 복사본을 objective 로 steps 번 갱신합니다. θ 자체는 바뀌지 않습니다."""
    adapted = theta.clone()
    for step in range(steps):
        try:
            loss = objective(adapted)
        except NonFiniteError as e:
            raise DivergenceError(f"adaptation diverged: {e}", step - 1) from e
        if not math.isfinite(loss.item()):
            raise DivergenceError("adaptation loss is not finite", step - 1)
        optimizer_step(optimizer, adapted, backward(loss, adapted))
    return adapted


def _augment(
    model: DisentangleModel | None,
    batch: ExampleBatch,
    rng: np.random.Generator,
    variant: MetaVariant,
) -> ExampleBatch:
    if variant is MetaVariant.NO_AUGMENT:
        return batch
    if model is None:
        raise ValueError("a stage-1 model is required unless augmentation is disabled")
    return augment_batch(model, batch, rng)


def inner_adapt(
    theta: ParameterStore,
    task: Task,
    duals: DualState,
    model: DisentangleModel | None,
    hp: MetaHyper,
    rng: np.random.Generator,
    variant: MetaVariant = MetaVariant.FULL,
    warnings: FairnessWarnings | None = None,
) -> tuple[ParameterStore, DualState]:
    """θ′ ← Adam(L(θ′, B^sup, B^sup_aug)) 를 inner_steps 번, 이어서 task dual 을 한 번 갱신합니다."""
    support = task.support
    support_aug = _augment(model, support, rng, variant)
    theta_prime = adapt_parameters(
        theta,
        lambda p: loss_total(p, support, support_aug, duals, hp.variant, warnings),
        hp.inner_steps,
        OptimizerState.adam(hp.alpha),
    )
    with no_grad():
        parts = loss_components(theta_prime, support, support_aug, duals, hp.variant, warnings)
    task_duals = dual_update(duals, parts["L_inv"].item(), parts["L_fair"].item())
    return theta_prime, task_duals


@dataclass(frozen=True)
class MetaStreams:
    """task 샘플링과 support/query 증강이 서로 다른 난수 스트림을 씁니다."""

    sampling: np.random.Generator
    support: np.random.Generator
    query: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> MetaStreams:
        sampling, support, query = (
            np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
        )
        return cls(sampling=sampling, support=support, query=query)


def meta_train(
    theta_init: ParameterStore,
    pool: Sequence[DomainDataset],
    model: DisentangleModel | None,
    hp: MetaHyper,
    duals: DualState | None = None,
    sampler: TaskSampler | None = None,
    variant: MetaVariant = MetaVariant.FULL,
    guard: LeakageGuard = NO_GUARD,
    on_iteration: IterationCallback | None = None,
    warnings: FairnessWarnings | None = None,
) -> tuple[ParameterStore, list[dict[str, float]]]:
    """Fairness-aware meta-learning 외부 루프.

    iteration 마다 task 를 뽑아 inner_adapt 하고, θ′ 에서의 query loss gradient 합으로
    θ ← θ − η_p Σ ∇ 를 수행합니다. meta dual 은 갱신된 θ 에서의 평균 query loss 로 한 번 갱신됩니다.
    ``on_iteration(i, θ, duals)`` 는 매 iteration 이 끝난 뒤 호출됩니다.
    단일 그룹 배치 횟수는 warnings (없으면 이 실행 전용 카운터) 에 쌓입니다.
    """
    hp.validate()
    warnings = warnings if warnings is not None else FairnessWarnings()
    if not pool and sampler is None:
        raise ValueError("meta-training needs a non-empty pool")
    duals = duals if duals is not None else DualState()
    theta = theta_init.clone()
    streams = MetaStreams.from_seed(hp.seed)
    meta_opt = OptimizerState.sgd(hp.eta_p)

    history: list[dict[str, float]] = []
    for iteration in range(hp.iterations):
        tasks = (
            sampler(iteration)
            if sampler is not None
            else sample_tasks(
                pool, hp.tasks_per_batch, hp.n_sup, hp.n_qry, hp.sampling_mode, streams.sampling
            )
        )
        meta_grad = GradientMap()
        query_pairs: list[tuple[ExampleBatch, ExampleBatch]] = []
        sums = {"L_cls": 0.0, "L_inv": 0.0, "L_fair": 0.0, "L_total": 0.0}
        try:
            for task in tasks:
                guard.check(task.support, "meta_train.support")
                guard.check(task.query, "meta_train.query")
                if variant is MetaVariant.NO_INNER:
                    theta_prime = theta
                else:
                    theta_prime, _ = inner_adapt(
                        theta, task, duals, model, hp, streams.support, variant, warnings
                    )
                query_aug = _augment(model, task.query, streams.query, variant)
                query_pairs.append((task.query, query_aug))

                parts = loss_components(
                    theta_prime, task.query, query_aug, duals, hp.variant, warnings
                )
                for name, value in parts.items():
                    sums[name] += value.item()
                meta_grad = meta_grad.accumulate(backward(parts["L_total"], theta_prime))
        except (NonFiniteError, DivergenceError) as e:
            logger.error("meta-training 발산", iteration=iteration, error=str(e))
            raise DivergenceError(f"meta-training diverged: {e}", iteration - 1, history) from e

        optimizer_step(meta_opt, theta, meta_grad)

        with no_grad():
            inv_after = fair_after = 0.0
            for query, query_aug in query_pairs:
                parts = loss_components(theta, query, query_aug, duals, hp.variant, warnings)
                inv_after += parts["L_inv"].item()
                fair_after += parts["L_fair"].item()
        count = max(len(query_pairs), 1)
        duals = dual_update(duals, inv_after / count, fair_after / count)

        record = {name: value / count for name, value in sums.items()}
        if not all(math.isfinite(v) for v in record.values()):
            raise DivergenceError("meta-training loss is not finite", iteration - 1, history)
        record.update(step=iteration, lambda1=duals.lambda1, lambda2=duals.lambda2)
        history.append(record)
        if hp.log_every and iteration % hp.log_every == 0:
            logger.debug(
                "meta iteration",
                iteration=iteration,
                L_total=round(record["L_total"], 5),
                lambda1=round(duals.lambda1, 5),
                lambda2=round(duals.lambda2, 5),
            )
        if on_iteration is not None:
            on_iteration(iteration, theta, duals)
    if warnings.single_group:
        logger.info("meta-training 단일 그룹 배치 집계", single_group=warnings.single_group)
    return theta, history


def adapt_downstream(
    theta_star: ParameterStore,
    fewshot: ExampleBatch,
    model: DisentangleModel | None,
    hp: MetaHyper,
    duals: DualState,
    seed: int | None = None,
    variant: MetaVariant = MetaVariant.FULL,
    guard: LeakageGuard = NO_GUARD,
    warnings: FairnessWarnings | None = None,
) -> ParameterStore:
    """θ* 에서 시작해 test 도메인의 few-shot 집합으로만 downstream_steps 번 적응합니다."""
    if len(fewshot) == 0:
        raise ShapeError("downstream adaptation needs a non-empty few-shot set")
    guard.check(fewshot, "adapt_downstream")
    rng = np.random.default_rng(hp.seed if seed is None else seed)
    fewshot_aug = _augment(model, fewshot, rng, variant)
    return adapt_parameters(
        theta_star,
        lambda p: loss_total(p, fewshot, fewshot_aug, duals, hp.variant, warnings),
        hp.downstream_steps,
        OptimizerState.adam(hp.alpha),
    )


def _erm_minibatch(data: ExampleBatch, batch_size: int, rng: np.random.Generator) -> ExampleBatch:
    if batch_size >= len(data):
        return data
    return data.take(rng.choice(len(data), size=batch_size, replace=False))


def train_erm(
    pool: Sequence[DomainDataset],
    hp: ErmHyper,
    fairness_constrained: bool = False,
    duals: DualState | None = None,
    guard: LeakageGuard = NO_GUARD,
    theta_init: ParameterStore | None = None,
    on_step: IterationCallback | None = None,
    warnings: FairnessWarnings | None = None,
) -> tuple[ParameterStore, list[dict[str, float]]]:
    """pool 전체를 합쳐 minibatch 로 f 를 학습합니다.

    fairness_constrained 이면 L_cls + λ2·L_fair(B, B) 를 쓰고 매 step 뒤 λ2 를 갱신합니다.
    """
    hp.validate()
    if not pool:
        raise ValueError("ERM training needs a non-empty pool")
    warnings = warnings if warnings is not None else FairnessWarnings()
    data = pooled(pool)
    guard.check(data, "train_erm")
    duals = duals if duals is not None else DualState()
    init_seed, batch_seed = np.random.SeedSequence(hp.seed).spawn(2)
    theta = (
        theta_init.clone()
        if theta_init is not None
        else init_classifier(data.feature_dim, hp.hidden, int(init_seed.generate_state(1)[0]))
    )
    rng = np.random.default_rng(batch_seed)
    opt = OptimizerState.adam(hp.lr)

    history: list[dict[str, float]] = []
    for step in range(hp.steps):
        batch = _erm_minibatch(data, hp.batch_size, rng)
        try:
            probs = _probs(theta, Tensor(batch.x))
            cls = cross_entropy(probs, batch.y)
            record = {"L_cls": cls.item()}
            loss = cls
            if fairness_constrained:
                fair_once = fairness_mean(probs[:, 1], batch.z, hp.variant, warnings)
                fair = fair_once + fair_once
                loss = cls + duals.lambda2 * fair
                record["L_fair"] = fair.item()
            record["L_total"] = loss.item()
            optimizer_step(opt, theta, backward(loss, theta))
        except NonFiniteError as e:
            logger.error("ERM 학습 발산", step=step, error=str(e))
            raise DivergenceError(f"ERM training diverged: {e}", step - 1, history) from e
        if not math.isfinite(record["L_total"]):
            raise DivergenceError("ERM loss is not finite", step - 1, history)

        if fairness_constrained:
            duals = replace(
                duals, lambda2=_ascend(duals.lambda2, duals.eta_d, record["L_fair"], duals.gamma2)
            )
            record["lambda2"] = duals.lambda2
        record["step"] = step
        history.append(record)
        if hp.log_every and step % hp.log_every == 0:
            logger.debug("ERM step", step=step, L_total=round(record["L_total"], 5))
        if on_step is not None:
            on_step(step, theta, duals)
    if warnings.single_group:
        logger.info("ERM 단일 그룹 배치 집계", single_group=warnings.single_group)
    return theta, history


def run_ablation(
    kind: AblationKind,
    theta_init: ParameterStore,
    pool: Sequence[DomainDataset],
    model: DisentangleModel | None,
    hp: MetaHyper,
    duals: DualState | None = None,
    **kwargs,
) -> tuple[ParameterStore, list[dict[str, float]]]:
    """abs1: inner_adapt 없이 θ 에서 query loss, abs2: 증강 배치를 원본으로 대체"""
    return meta_train(
        theta_init, pool, model, hp, duals, variant=MetaVariant.for_ablation(kind), **kwargs
    )
