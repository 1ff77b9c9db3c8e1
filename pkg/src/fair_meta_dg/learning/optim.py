from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from fair_meta_dg.domain.exceptions import (
    InvalidHyperparameterError,
    MissingGradientError,
    ShapeError,
)
from fair_meta_dg.learning.tensor import Parameter


class OptimizerKind(Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass
class OptimizerState:
    """optimizer 설정과 누적 상태. adam 은 파라미터별 1차/2차 moment 를 가집니다."""

    kind: OptimizerKind
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        # lr == 0 은 "동결" 로 허용, 음수만 거부
        if self.lr < 0:
            raise InvalidHyperparameterError(f"learning rate must be >= 0, got {self.lr}")

    @classmethod
    def adam(cls, lr: float) -> OptimizerState:
        return cls(kind=OptimizerKind.ADAM, lr=lr)

    @classmethod
    def sgd(cls, lr: float) -> OptimizerState:
        return cls(kind=OptimizerKind.SGD, lr=lr)


def optimizer_step(
    state: OptimizerState,
    params: Mapping[str, Parameter],
    grads: Mapping[str, np.ndarray],
) -> Mapping[str, Parameter]:
    """파라미터를 제자리에서 갱신하고 state 의 step 을 증가시킵니다."""
    missing = [name for name in params if name not in grads]
    if missing:
        raise MissingGradientError(f"no gradient for parameters: {missing}")
    for name, param in params.items():
        if grads[name].shape != param.shape:
            raise ShapeError(
                f"{name}: gradient shape {grads[name].shape} != parameter shape {param.shape}"
            )

    state.step += 1
    if state.kind is OptimizerKind.SGD:
        for name, param in params.items():
            param.data = param.data - state.lr * grads[name]
        return params

    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step
    for name, param in params.items():
        grad = grads[name]
        m = state.first_moment.get(name, np.zeros_like(param.data))
        v = state.second_moment.get(name, np.zeros_like(param.data))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / bias1
        v_hat = v / bias2
        param.data = param.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params
