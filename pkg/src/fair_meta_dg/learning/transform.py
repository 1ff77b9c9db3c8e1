"""도메인 변환 T: 내용 c 는 유지하고 스타일 s′, 민감 요인 a′ 을 다시 뽑아 새 예제를 만듭니다.

stage-1 모델은 고정된 상태로만 사용하며 (no_grad) stage-2 gradient 는 흘러가지 않습니다.
"""

from __future__ import annotations

import numpy as np

from fair_meta_dg.domain.exceptions import ShapeError
from fair_meta_dg.domain.model import AugmentedPair, Example, ExampleBatch
from fair_meta_dg.learning.disentangle import DisentangleModel, sensitive_from_probs
from fair_meta_dg.learning.layers import as_batch
from fair_meta_dg.learning.sampling import as_rng
from fair_meta_dg.learning.tensor import Tensor, no_grad

AUGMENTED_SUFFIX = "~aug"


def _draw(model: DisentangleModel, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """예제마다 a′ 다음 s′ 순서로 뽑습니다."""
    a_prime = np.empty((n, model.dims.sensitive))
    s_prime = np.empty((n, model.dims.style))
    for i in range(n):
        a_prime[i] = rng.standard_normal(model.dims.sensitive)
        s_prime[i] = rng.standard_normal(model.dims.style)
    return a_prime, s_prime


def _transform_rows(
    model: DisentangleModel, x: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    xt = as_batch(x)
    if xt.shape[1] != model.dims.feature:
        raise ShapeError(f"expected {model.dims.feature} features, got {xt.shape[1]}")
    a_prime, s_prime = _draw(model, xt.shape[0], rng)
    with no_grad():
        c = model.E_c(model.E_m(xt))
        a = Tensor(a_prime)
        x_prime = model.G_o(model.G_i(c, a), Tensor(s_prime)).numpy()
        z_prime = sensitive_from_probs(model.h(a).numpy())
    return x_prime, z_prime


def transform_T(
    model: DisentangleModel, example: Example, rng: int | np.random.Generator
) -> Example:
    """(x, z, y) → (x′, z′, y). c 는 매번 x 에서 다시 계산합니다."""
    x_prime, z_prime = _transform_rows(model, np.asarray(example.x, dtype=np.float64), as_rng(rng))
    return Example(
        x=x_prime[0],
        z=int(z_prime[0]),
        y=example.y,
        domain=example.domain,
        record_id=f"{example.record_id}{AUGMENTED_SUFFIX}" if example.record_id else None,
    )


def augment_batch(
    model: DisentangleModel, batch: ExampleBatch, rng: int | np.random.Generator
) -> ExampleBatch:
    """원소 i 는 같은 rng 스트림으로 transform_T 를 순서대로 호출한 결과와 같습니다."""
    if len(batch) == 0:
        return ExampleBatch.empty(batch.feature_dim)
    x_prime, z_prime = _transform_rows(model, batch.x, as_rng(rng))
    return ExampleBatch(
        x=x_prime,
        z=z_prime,
        y=batch.y.copy(),
        record_ids=tuple(f"{r}{AUGMENTED_SUFFIX}" for r in batch.record_ids),
        domains=batch.domains,
    )


def augmented_pairs(
    model: DisentangleModel, batch: ExampleBatch, rng: int | np.random.Generator
) -> list[AugmentedPair]:
    augmented = augment_batch(model, batch, rng)
    return [AugmentedPair(original=o, augmented=a) for o, a in zip(batch, augmented)]


def content_drift(model: DisentangleModel, batch: ExampleBatch, rng: int | np.random.Generator) -> float:
    """평균 ‖E^c(E^m(x′)) − E^c(E^m(x))‖₁. T 가 내용을 얼마나 보존하는지의 척도입니다."""
    augmented = augment_batch(model, batch, rng)
    with no_grad():
        c = model.E_c(model.E_m(Tensor(batch.x))).numpy()
        c_prime = model.E_c(model.E_m(Tensor(augmented.x))).numpy()
    return float(np.abs(c_prime - c).sum(axis=1).mean())
