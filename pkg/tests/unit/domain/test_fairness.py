from __future__ import annotations

import numpy as np
import pytest

from fair_meta_dg.domain import fairness
from fair_meta_dg.domain.exceptions import MetricUndefinedError


def _brute_rate(preds, y, z, group, label=None):
    hits = total = 0
    for p, yy, zz in zip(preds, y, z):
        if zz != group or (label is not None and yy != label):
            continue
        total += 1
        hits += int(p == 1)
    return hits / total


@pytest.mark.parametrize("seed", range(5))
def test_metrics_match_brute_force_counting(seed):
    rng = np.random.default_rng(seed)
    n = 40
    preds = rng.integers(0, 2, size=n)
    y = rng.integers(0, 2, size=n)
    z = np.where(rng.random(n) < 0.5, -1, 1)
    z[:4] = [-1, -1, 1, 1]
    y[:4] = [0, 1, 0, 1]

    dp = abs(_brute_rate(preds, y, z, -1) - _brute_rate(preds, y, z, 1))
    tpr = abs(_brute_rate(preds, y, z, -1, 1) - _brute_rate(preds, y, z, 1, 1))
    fpr = abs(_brute_rate(preds, y, z, -1, 0) - _brute_rate(preds, y, z, 1, 0))

    assert fairness.delta_dp(preds, z) == pytest.approx(dp)
    assert fairness.delta_eopp(preds, y, z) == pytest.approx(tpr)
    assert fairness.delta_eo(preds, y, z) == pytest.approx(0.5 * (tpr + fpr))
    assert fairness.accuracy(preds, y) == pytest.approx(np.mean(preds == y))


def test_metrics_are_symmetric_in_group_swap():
    preds = [1, 0, 1, 1, 0, 0]
    y = [1, 1, 0, 1, 0, 1]
    z = [1, 1, 1, -1, -1, -1]
    swapped = [-g for g in z]

    assert fairness.delta_dp(preds, z) == fairness.delta_dp(preds, swapped)
    assert fairness.delta_eo(preds, y, z) == fairness.delta_eo(preds, y, swapped)


def test_single_group_is_undefined():
    with pytest.raises(MetricUndefinedError):
        fairness.delta_dp([1, 0], [1, 1])


def test_no_positive_labels_in_a_group_is_undefined():
    with pytest.raises(MetricUndefinedError):
        fairness.delta_eopp([1, 0], [1, 0], [1, -1])


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        fairness.delta_dp([1, 0, 1], [1, -1])
