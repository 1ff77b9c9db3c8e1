from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

from fair_meta_dg.domain.exceptions import ShapeError
from fair_meta_dg.learning.tensor import ParameterStore, Tensor, clamp_probability, concat


class OutputActivation(Enum):
    NONE = "none"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"


@dataclass(frozen=True)
class MLP:
    """ReLU hidden layer 로 이어진 fully-connected 네트워크의 구조.

    파라미터는 외부 ParameterStore 에 ``{prefix}/{layer}.weight`` 형태로 보관되므로
    같은 구조를 여러 파라미터 집합(θ, θ′ 등)에 적용할 수 있습니다.
    """

    prefix: str
    sizes: tuple[int, ...]
    output: OutputActivation = OutputActivation.NONE

    @classmethod
    def build(
        cls,
        prefix: str,
        in_dim: int,
        hidden: Sequence[int],
        out_dim: int,
        output: OutputActivation = OutputActivation.NONE,
    ) -> MLP:
        return cls(prefix=prefix, sizes=(in_dim, *hidden, out_dim), output=output)

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def names(self) -> list[str]:
        return [
            f"{self.prefix}/{i}.{kind}"
            for i in range(len(self.sizes) - 1)
            for kind in ("weight", "bias")
        ]

    def init_params(self, store: ParameterStore, rng: np.random.Generator) -> None:
        """He-uniform weight 와 0 bias 를 store 에 등록합니다."""
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = np.sqrt(6.0 / fan_in)
            store.register(
                f"{self.prefix}/{i}.weight",
                rng.uniform(-bound, bound, size=(fan_in, fan_out)),
            )
            store.register(f"{self.prefix}/{i}.bias", np.zeros(fan_out))

    def __call__(self, store: ParameterStore, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"{self.prefix}: expected input (n, {self.in_dim}), got {x.shape}"
            )
        h = x
        last = len(self.sizes) - 2
        for i in range(last + 1):
            h = h @ store[f"{self.prefix}/{i}.weight"] + store[f"{self.prefix}/{i}.bias"]
            if i < last:
                h = h.relu()
        match self.output:
            case OutputActivation.SIGMOID:
                return h.sigmoid()
            case OutputActivation.SOFTMAX:
                return h.softmax()
            case _:
                return h


def as_batch(x: np.ndarray | Tensor) -> Tensor:
    """1-D 벡터는 (1, d) 배치로 올립니다."""
    if isinstance(x, Tensor):
        return x if x.ndim == 2 else Tensor(x.data.reshape(1, -1))
    arr = np.asarray(x, dtype=np.float64)
    return Tensor(arr.reshape(1, -1) if arr.ndim == 1 else arr)


def join(*parts: Tensor) -> Tensor:
    return concat(parts, axis=-1)


def cross_entropy(probs: Tensor, target: np.ndarray) -> Tensor:
    """2-class 확률 (n, 2) 와 class index (n,) 사이의 평균 cross-entropy. 확률은 clamp 됩니다."""
    target = np.asarray(target, dtype=np.int64)
    if target.size == 0:
        raise ShapeError("cross-entropy over an empty batch")
    if probs.ndim != 2 or probs.shape[0] != target.size:
        raise ShapeError(f"probabilities {probs.shape} do not match {target.size} targets")
    one_hot = np.zeros(probs.shape)
    one_hot[np.arange(target.size), target] = 1.0
    return -(clamp_probability(probs).log() * one_hot).sum(axis=1).mean()
