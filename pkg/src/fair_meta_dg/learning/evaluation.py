from __future__ import annotations

import numpy as np
from loguru import logger

from fair_meta_dg.domain import fairness
from fair_meta_dg.domain.exceptions import DatasetError, MetricUndefinedError
from fair_meta_dg.domain.model import DomainDataset, FairReport
from fair_meta_dg.learning.meta import classify
from fair_meta_dg.learning.tensor import ParameterStore


def hard_predictions(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """ŷ = 1 iff P(ŷ=1|x) ≥ threshold"""
    return (np.atleast_2d(probs)[:, 1] >= threshold).astype(np.int64)


def report_from_predictions(
    domain_id: str, preds: np.ndarray, y: np.ndarray, z: np.ndarray
) -> FairReport:
    """정의되지 않는 지표는 실패 대신 이유와 함께 비워 둡니다."""
    if len(preds) == 0:
        raise DatasetError(f"cannot evaluate on an empty dataset ({domain_id})")
    metrics: dict[str, float | None] = {}
    missing: dict[str, str] = {}
    for name, compute in (
        ("delta_dp", lambda: fairness.delta_dp(preds, z)),
        ("delta_eopp", lambda: fairness.delta_eopp(preds, y, z)),
        ("delta_eo", lambda: fairness.delta_eo(preds, y, z)),
    ):
        try:
            metrics[name] = compute()
        except MetricUndefinedError as e:
            metrics[name] = None
            missing[name] = str(e)
            logger.warning("지표 계산 불가", domain=domain_id, metric=name, reason=str(e))
    return FairReport(
        domain_id=domain_id,
        accuracy=fairness.accuracy(preds, y),
        delta_dp=metrics["delta_dp"],
        delta_eopp=metrics["delta_eopp"],
        delta_eo=metrics["delta_eo"],
        group_counts={group: int(np.sum(z == group)) for group in fairness.GROUPS},
        missing=missing,
    )


def evaluate_model(theta: ParameterStore, dataset: DomainDataset, threshold: float = 0.5) -> FairReport:
    if len(dataset) == 0:
        raise DatasetError(f"cannot evaluate on an empty dataset ({dataset.domain_id})")
    preds = hard_predictions(classify(theta, dataset.batch.x), threshold)
    return report_from_predictions(dataset.domain_id, preds, dataset.batch.y, dataset.batch.z)
