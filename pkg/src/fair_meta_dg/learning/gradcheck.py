"""중앙 차분 기반 gradient 검증 도구."""

from __future__ import annotations

from collections.abc import Callable, Mapping

import numpy as np

from fair_meta_dg.learning.tensor import GradientMap, Parameter, Tensor, backward, no_grad


def numerical_gradient(
    fn: Callable[[], Tensor],
    params: Mapping[str, Parameter],
    h: float = 1e-5,
) -> GradientMap:
    """각 원소를 ±h 만큼 흔들어 (f(θ+h) - f(θ-h)) / 2h 를 계산합니다."""
    grads = GradientMap()
    with no_grad():
        for name, param in params.items():
            grad = np.zeros_like(param.data)
            flat = param.data.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + h
                plus = fn().item()
                flat[i] = original - h
                minus = fn().item()
                flat[i] = original
                grad.reshape(-1)[i] = (plus - minus) / (2.0 * h)
            grads[name] = grad
    return grads


def max_relative_error(
    analytic: Mapping[str, np.ndarray],
    numeric: Mapping[str, np.ndarray],
    floor: float = 1e-5,
) -> float:
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom, initial=0.0)))
    return worst


def gradcheck(
    fn: Callable[[], Tensor],
    params: Mapping[str, Parameter],
    h: float = 1e-5,
) -> float:
    """backward 결과와 중앙 차분의 최대 상대 오차"""
    analytic = backward(fn(), params)
    return max_relative_error(analytic, numerical_gradient(fn, params, h))
