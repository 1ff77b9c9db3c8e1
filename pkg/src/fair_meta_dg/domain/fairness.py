"""Group-fairness 지표의 정확한 counting 구현.

모든 지표는 z ∈ {-1, +1} 두 그룹 사이의 절대 차이이므로 z → -z 에 불변입니다.
"""

from __future__ import annotations

import numpy as np

from fair_meta_dg.domain.exceptions import MetricUndefinedError

GROUPS = (-1, 1)


def _rate(preds: np.ndarray, mask: np.ndarray) -> float:
    return float(preds[mask].sum()) / float(mask.sum())


def _as_arrays(*columns: np.ndarray | list[int]) -> list[np.ndarray]:
    arrays = [np.asarray(c, dtype=np.int64) for c in columns]
    if len({a.shape for a in arrays}) != 1:
        raise ValueError("prediction, label and group columns must have the same length")
    return arrays


def positive_rate_gap(preds: np.ndarray, z: np.ndarray, mask: np.ndarray, what: str) -> float:
    rates = []
    for group in GROUPS:
        group_mask = mask & (z == group)
        if not group_mask.any():
            raise MetricUndefinedError(f"group z={group:+d} has no examples {what}")
        rates.append(_rate(preds, group_mask))
    return abs(rates[0] - rates[1])


def delta_dp(preds: np.ndarray | list[int], z: np.ndarray | list[int]) -> float:
    """|P(ŷ=1 | z=-1) - P(ŷ=1 | z=+1)|"""
    p, g = _as_arrays(preds, z)
    return positive_rate_gap(p, g, np.ones_like(p, dtype=bool), "")


def delta_eopp(
    preds: np.ndarray | list[int], y: np.ndarray | list[int], z: np.ndarray | list[int]
) -> float:
    """|P(ŷ=1 | y=1, z=-1) - P(ŷ=1 | y=1, z=+1)|"""
    p, labels, g = _as_arrays(preds, y, z)
    return positive_rate_gap(p, g, labels == 1, "with label y=1")


def delta_eo(
    preds: np.ndarray | list[int], y: np.ndarray | list[int], z: np.ndarray | list[int]
) -> float:
    """½ (|TPR gap| + |FPR gap|)"""
    p, labels, g = _as_arrays(preds, y, z)
    tpr_gap = positive_rate_gap(p, g, labels == 1, "with label y=1")
    fpr_gap = positive_rate_gap(p, g, labels == 0, "with label y=0")
    return 0.5 * (tpr_gap + fpr_gap)


def accuracy(preds: np.ndarray | list[int], y: np.ndarray | list[int]) -> float:
    p, labels = _as_arrays(preds, y)
    if p.size == 0:
        raise MetricUndefinedError("accuracy of an empty prediction set")
    return float((p == labels).mean())
