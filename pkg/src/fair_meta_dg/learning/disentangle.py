"""Stage 1: x 를 의미(m), 내용(c), 스타일(s), 민감(a) 요인으로 분해하는 모델과 학습 루프.

인코더 E^m: x→m, E^s: x→s, E^c: m→c, E^a: m→a
디코더 G^i: (c, a)→m, G^o: (m, s)→x
민감 분류기 h: a→(P(z=-1), P(z=+1)), 판별기 D^i: m→[0,1], D^o: x→[0,1]
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from loguru import logger

from fair_meta_dg.domain.config import Stage1Architecture, Stage1Hyper
from fair_meta_dg.domain.exceptions import DivergenceError, NonFiniteError, ShapeError
from fair_meta_dg.domain.leakage import NO_GUARD, LeakageGuard
from fair_meta_dg.domain.model import DomainDataset, ExampleBatch, LatentBundle
from fair_meta_dg.learning.layers import MLP, OutputActivation, as_batch, cross_entropy, join
from fair_meta_dg.learning.optim import OptimizerState, optimizer_step
from fair_meta_dg.learning.sampling import as_rng, pooled
from fair_meta_dg.learning.tensor import (
    ParameterStore,
    Tensor,
    backward,
    l1_norm,
    no_grad,
)

ENCODER_STORES = ("E_m", "E_s", "E_c", "E_a")
DECODER_STORES = ("G_i", "G_o")
CLASSIFIER_STORE = "h"
DISCRIMINATOR_STORES = ("D_i", "D_o")
STAGE1_STORES = (*ENCODER_STORES, *DECODER_STORES, CLASSIFIER_STORE, *DISCRIMINATOR_STORES)

RECON_TERMS = ("Lx", "Lmd", "Lc", "La", "Lsin", "Lsout", "Lmf")


@dataclass(frozen=True)
class LatentDims:
    feature: int
    semantic: int
    content: int
    style: int
    sensitive: int

    def as_dict(self) -> dict[str, int]:
        return {
            "feature": self.feature,
            "semantic": self.semantic,
            "content": self.content,
            "style": self.style,
            "sensitive": self.sensitive,
        }


@dataclass(eq=False)
class DisentangleModel:
    dims: LatentDims
    architecture: Stage1Architecture
    params: ParameterStore

    @classmethod
    def create(
        cls, dims: LatentDims, architecture: Stage1Architecture, seed: int = 0
    ) -> DisentangleModel:
        model = cls(dims=dims, architecture=architecture, params=ParameterStore())
        rng = np.random.default_rng(seed)
        for net in model.networks():
            net.init_params(model.params, rng)
        return model

    def networks(self) -> list[MLP]:
        d = self.dims
        hidden = self.architecture.hidden
        return [
            MLP.build("E_m", d.feature, hidden, d.semantic),
            MLP.build("E_s", d.feature, hidden, d.style),
            MLP.build("E_c", d.semantic, hidden, d.content),
            MLP.build("E_a", d.semantic, hidden, d.sensitive),
            MLP.build("G_i", d.content + d.sensitive, hidden, d.semantic),
            MLP.build("G_o", d.semantic + d.style, hidden, d.feature),
            MLP.build(
                "h", d.sensitive, self.architecture.classifier_hidden, 2, OutputActivation.SOFTMAX
            ),
            MLP.build(
                "D_i", d.semantic, self.architecture.discriminator_hidden, 1, OutputActivation.SIGMOID
            ),
            MLP.build(
                "D_o", d.feature, self.architecture.discriminator_hidden, 1, OutputActivation.SIGMOID
            ),
        ]

    @cached_property
    def _nets(self) -> dict[str, MLP]:
        return {n.prefix: n for n in self.networks()}

    def net(self, name: str) -> MLP:
        return self._nets[name]

    def store(self, name: str) -> ParameterStore:
        return self.params.subset([f"{name}/"])

    def generator_params(self) -> ParameterStore:
        """E/G/h 단계가 갱신하는 파라미터"""
        return self.params.subset(f"{n}/" for n in (*ENCODER_STORES, *DECODER_STORES, CLASSIFIER_STORE))

    def discriminator_params(self) -> ParameterStore:
        return self.params.subset(f"{n}/" for n in DISCRIMINATOR_STORES)

    def clone(self) -> DisentangleModel:
        return DisentangleModel(dims=self.dims, architecture=self.architecture, params=self.params.clone())

    # --- 네트워크 적용 ---

    def E_m(self, x: Tensor) -> Tensor:
        return self.net("E_m")(self.params, x)

    def E_s(self, x: Tensor) -> Tensor:
        return self.net("E_s")(self.params, x)

    def E_c(self, m: Tensor) -> Tensor:
        return self.net("E_c")(self.params, m)

    def E_a(self, m: Tensor) -> Tensor:
        return self.net("E_a")(self.params, m)

    def G_i(self, c: Tensor, a: Tensor) -> Tensor:
        return self.net("G_i")(self.params, join(c, a))

    def G_o(self, m: Tensor, s: Tensor) -> Tensor:
        return self.net("G_o")(self.params, join(m, s))

    def h(self, a: Tensor) -> Tensor:
        return self.net("h")(self.params, a)

    def D_i(self, m: Tensor) -> Tensor:
        return self.net("D_i")(self.params, m)

    def D_o(self, x: Tensor) -> Tensor:
        return self.net("D_o")(self.params, x)


def _check_features(model: DisentangleModel, x: Tensor) -> None:
    if x.shape[-1] != model.dims.feature:
        raise ShapeError(f"expected {model.dims.feature} features, got {x.shape[-1]}")


def encode(model: DisentangleModel, x: np.ndarray | Tensor) -> LatentBundle:
    """m = E^m(x), s = E^s(x), c = E^c(m), a = E^a(m). 1-D 입력은 1-D 잠재변수를 돌려줍니다."""
    single = (x.ndim if isinstance(x, Tensor) else np.ndim(x)) == 1
    xt = as_batch(x)
    _check_features(model, xt)
    with no_grad():
        m = model.E_m(xt)
        s = model.E_s(xt)
        c = model.E_c(m)
        a = model.E_a(m)

    def out(t: Tensor) -> np.ndarray:
        return t.numpy()[0] if single else t.numpy()

    return LatentBundle(m=out(m), c=out(c), s=out(s), a=out(a))


@dataclass(frozen=True, eq=False)
class PriorSamples:
    """한 step 에서 쓰는 N(0, I) 사전분포 샘플. 뽑는 순서가 고정되어 있어 재현 가능합니다."""

    a_recon: np.ndarray
    s_inner: np.ndarray
    a_outer: np.ndarray
    s_outer: np.ndarray
    gan_a1: np.ndarray
    gan_s1: np.ndarray
    gan_a2: np.ndarray
    gan_s3: np.ndarray
    gan_am: np.ndarray
    s_mf: np.ndarray

    @classmethod
    def draw(cls, n: int, dims: LatentDims, rng: np.random.Generator) -> PriorSamples:
        da, ds = dims.sensitive, dims.style
        return cls(
            a_recon=rng.standard_normal((n, da)),
            s_inner=rng.standard_normal((n, ds)),
            a_outer=rng.standard_normal((n, da)),
            s_outer=rng.standard_normal((n, ds)),
            gan_a1=rng.standard_normal((n, da)),
            gan_s1=rng.standard_normal((n, ds)),
            gan_a2=rng.standard_normal((n, da)),
            gan_s3=rng.standard_normal((n, ds)),
            gan_am=rng.standard_normal((n, da)),
            s_mf=rng.standard_normal((n, ds)),
        )

    def take(self, indices: Sequence[int] | np.ndarray) -> PriorSamples:
        idx = np.asarray(indices, dtype=np.int64)
        return PriorSamples(**{name: getattr(self, name)[idx] for name in self.__dataclass_fields__})


def _resolve_priors(
    model: DisentangleModel,
    n: int,
    rng: int | np.random.Generator | None,
    priors: PriorSamples | None,
) -> PriorSamples:
    if priors is not None:
        if priors.a_recon.shape[0] != n:
            raise ShapeError(f"prior samples cover {priors.a_recon.shape[0]} rows, batch has {n}")
        return priors
    return PriorSamples.draw(n, model.dims, as_rng(0 if rng is None else rng))


def _features(model: DisentangleModel, batch: ExampleBatch) -> Tensor:
    if len(batch) == 0:
        raise ShapeError("stage-1 losses need a non-empty batch")
    x = Tensor(batch.x)
    _check_features(model, x)
    return x


def _l1(a: Tensor, b: Tensor) -> Tensor:
    return l1_norm(a - b).mean()


def reconstruction_losses(
    model: DisentangleModel,
    batch: ExampleBatch,
    rng: int | np.random.Generator | None = None,
    priors: PriorSamples | None = None,
) -> dict[str, Tensor]:
    """일곱 개의 L1 재구성 항과 그 합 ``L_recon``. 기대값은 배치 평균입니다."""
    x = _features(model, batch)
    p = _resolve_priors(model, len(batch), rng, priors)

    m = model.E_m(x)
    s = model.E_s(x)
    c = model.E_c(m)
    a = model.E_a(m)
    m_hat = model.G_i(c, a)

    terms: dict[str, Tensor] = {}
    terms["Lx"] = _l1(model.G_o(m_hat, s), x)
    terms["Lmd"] = _l1(m_hat, m)

    a_prior = Tensor(p.a_recon)
    m_prior = model.G_i(c, a_prior)
    terms["Lc"] = _l1(model.E_c(m_prior), c)
    terms["La"] = _l1(model.E_a(m_prior), a_prior)

    s_prior = Tensor(p.s_inner)
    x_inner = model.G_o(m, s_prior)
    terms["Lsin"] = _l1(model.E_s(x_inner), s_prior)

    s_outer = Tensor(p.s_outer)
    x_outer = model.G_o(model.G_i(c, Tensor(p.a_outer)), s_outer)
    terms["Lsout"] = _l1(model.E_s(x_outer), s_outer)

    terms["Lmf"] = _l1(model.E_m(model.G_o(m, Tensor(p.s_mf))), m)

    total = terms["Lx"]
    for name in RECON_TERMS[1:]:
        total = total + terms[name]
    terms["L_recon"] = total
    return terms


def sensitive_cross_entropy(probs: Tensor, z: np.ndarray) -> Tensor:
    """z 를 class index 로 (-1→0, +1→1) 바꾼 평균 cross-entropy"""
    return cross_entropy(probs, (np.asarray(z) > 0).astype(np.int64))


def sensitive_loss(model: DisentangleModel, batch: ExampleBatch) -> Tensor:
    x = _features(model, batch)
    probs = model.h(model.E_a(model.E_m(x)))
    return sensitive_cross_entropy(probs, batch.z)


@dataclass(frozen=True)
class AdversarialLosses:
    d_objective: Tensor
    g_objective: Tensor
    gan_x: Tensor
    gan_m: Tensor


def _log_pair(real: Tensor, fake: Tensor) -> Tensor:
    return real.log().mean() + (1.0 - fake).log().mean()


def adversarial_losses(
    model: DisentangleModel,
    batch: ExampleBatch,
    rng: int | np.random.Generator | None = None,
    priors: PriorSamples | None = None,
    non_saturating: bool = False,
) -> AdversarialLosses:
    """D 가 최대화하는 d_objective 와 E/G 가 최소화하는 g_objective.

    L^x_GAN 의 세 변형은 (a, s) 를 (prior, prior), (prior, data), (data, prior) 에서 가져오며
    각각 real 항 E[log D^o(x)] 과 짝지어 더합니다 (real 항이 세 번 들어감).
    """
    x = _features(model, batch)
    p = _resolve_priors(model, len(batch), rng, priors)

    m = model.E_m(x)
    s = model.E_s(x)
    c = model.E_c(m)
    a = model.E_a(m)

    fakes_x = [
        model.G_o(model.G_i(c, Tensor(p.gan_a1)), Tensor(p.gan_s1)),
        model.G_o(model.G_i(c, Tensor(p.gan_a2)), s),
        model.G_o(model.G_i(c, a), Tensor(p.gan_s3)),
    ]
    d_real_x = model.D_o(x)
    d_fake_x = [model.D_o(f) for f in fakes_x]
    d_fake_m = model.D_i(model.G_i(c, Tensor(p.gan_am)))

    gan_x = _log_pair(d_real_x, d_fake_x[0])
    for d_fake in d_fake_x[1:]:
        gan_x = gan_x + _log_pair(d_real_x, d_fake)
    gan_m = _log_pair(model.D_i(m), d_fake_m)

    fakes = [*d_fake_x, d_fake_m]
    if non_saturating:
        g_objective = -fakes[0].log().mean()
        for d_fake in fakes[1:]:
            g_objective = g_objective - d_fake.log().mean()
    else:
        g_objective = (1.0 - fakes[0]).log().mean()
        for d_fake in fakes[1:]:
            g_objective = g_objective + (1.0 - d_fake).log().mean()

    return AdversarialLosses(
        d_objective=gan_x + gan_m, g_objective=g_objective, gan_x=gan_x, gan_m=gan_m
    )


def generator_objective(
    model: DisentangleModel,
    batch: ExampleBatch,
    hp: Stage1Hyper,
    priors: PriorSamples,
) -> tuple[Tensor, dict[str, float]]:
    """L_recon + β_z L^z_cls + β_g g_objective 와 기록용 항목들"""
    recon = reconstruction_losses(model, batch, priors=priors)
    z_cls = sensitive_loss(model, batch)
    adv = adversarial_losses(model, batch, priors=priors, non_saturating=hp.non_saturating)
    total = recon["L_recon"] + hp.beta_z * z_cls + hp.beta_g * adv.g_objective
    record = {name: t.item() for name, t in recon.items()}
    record.update(
        L_zcls=z_cls.item(),
        d_objective=adv.d_objective.item(),
        g_objective=adv.g_objective.item(),
        L_total=total.item(),
    )
    return total, record


def _minibatch(data: ExampleBatch, batch_size: int, rng: np.random.Generator) -> ExampleBatch:
    if batch_size >= len(data):
        return data
    return data.take(rng.choice(len(data), size=batch_size, replace=False))


def train_disentangler(
    model: DisentangleModel,
    train: Sequence[DomainDataset] | ExampleBatch,
    hp: Stage1Hyper,
    guard: LeakageGuard = NO_GUARD,
) -> tuple[DisentangleModel, list[dict[str, float]]]:
    """D 상승 1 step, E/G/h 하강 1 step 을 번갈아 수행합니다. model 은 제자리에서 갱신됩니다."""
    hp.validate()
    data = train if isinstance(train, ExampleBatch) else pooled(train)
    if len(data) == 0:
        raise ShapeError("stage-1 training needs a non-empty pool")
    guard.check(data, "train_disentangler")

    rng = np.random.default_rng(hp.seed)
    d_params = model.discriminator_params()
    g_params = model.generator_params()
    d_opt = OptimizerState.adam(hp.lr_discriminator)
    g_opt = OptimizerState.adam(hp.lr_generator)

    history: list[dict[str, float]] = []
    for step in range(hp.steps):
        try:
            batch = _minibatch(data, hp.batch_size, rng)
            priors = PriorSamples.draw(len(batch), model.dims, rng)

            d_loss = -adversarial_losses(
                model, batch, priors=priors, non_saturating=hp.non_saturating
            ).d_objective
            optimizer_step(d_opt, d_params, backward(d_loss, d_params))

            total, record = generator_objective(model, batch, hp, priors)
            if not all(math.isfinite(v) for v in record.values()):
                raise NonFiniteError(f"non-finite stage-1 loss at step {step}")
            optimizer_step(g_opt, g_params, backward(total, g_params))
        except NonFiniteError as e:
            logger.error("stage-1 학습 발산", step=step, error=str(e))
            raise DivergenceError(f"stage-1 training diverged: {e}", step - 1, history) from e

        record["step"] = step
        history.append(record)
        if hp.log_every and step % hp.log_every == 0:
            logger.debug(
                "stage-1 step",
                step=step,
                L_recon=round(record["L_recon"], 5),
                L_zcls=round(record["L_zcls"], 5),
                d_objective=round(record["d_objective"], 5),
            )
    return model, history


def sensitive_from_probs(probs: np.ndarray) -> np.ndarray:
    """argmax class 를 {-1,+1} 로. 정확히 동률이면 +1."""
    probs = np.atleast_2d(probs)
    return np.where(probs[:, 1] >= probs[:, 0], 1, -1).astype(np.int64)


def predict_sensitive(
    model: DisentangleModel, a: np.ndarray
) -> tuple[np.ndarray | int, np.ndarray | float]:
    """z′ = h(a′). (z, P(z=+1)) 를 돌려주며 1-D 입력이면 스칼라입니다."""
    single = np.ndim(a) == 1
    at = as_batch(a)
    if at.shape[1] != model.dims.sensitive:
        raise ShapeError(f"expected sensitive vector of length {model.dims.sensitive}, got {at.shape[1]}")
    with no_grad():
        probs = model.h(at).numpy()
    z = sensitive_from_probs(probs)
    if single:
        return int(z[0]), float(probs[0, 1])
    return z, probs[:, 1]


def sensitive_accuracy(model: DisentangleModel, batch: ExampleBatch) -> float:
    """h(E^a(E^m(x))) 로 z 를 맞힌 비율"""
    latents = encode(model, batch.x)
    z, _ = predict_sensitive(model, latents.a)
    return float(np.mean(np.asarray(z) == batch.z))
