from __future__ import annotations

import uuid

import numpy as np
import pytest

from fair_meta_dg.domain.events import FoldCompleted, LodoRunCompleted, LodoRunCreated, LodoRunStarted
from fair_meta_dg.domain.exceptions import DataLeakageError, DatasetError, ShapeError
from fair_meta_dg.domain.leakage import LeakageGuard
from fair_meta_dg.domain.model import (
    AVERAGE_ROW,
    Example,
    ExampleBatch,
    FairReport,
    FoldStatus,
    LodoResult,
    LodoRun,
    Method,
    RunStatus,
    Task,
)
from tests.support import make_batch, tiny_config


def _report(domain: str, accuracy: float, delta_dp: float | None = 0.1) -> FairReport:
    return FairReport(
        domain_id=domain,
        accuracy=accuracy,
        delta_dp=delta_dp,
        delta_eopp=0.2,
        delta_eo=0.3,
        group_counts={-1: 5, 1: 5},
    )


def test_example_rejects_bad_labels():
    with pytest.raises(DatasetError):
        Example(x=np.zeros(2), z=0, y=1)
    with pytest.raises(DatasetError):
        Example(x=np.zeros(2), z=1, y=2)


def test_example_equality_ignores_record_id():
    a = Example(x=np.array([1.0, 2.0]), z=1, y=0, domain="d", record_id="a")
    b = Example(x=np.array([1.0, 2.0]), z=1, y=0, domain="d", record_id="b")

    assert a == b
    assert hash(a) == hash(b)


def test_batch_round_trips_examples():
    batch = make_batch(np.arange(6.0).reshape(3, 2), z=[1, -1, 1], y=[0, 1, 1])

    rebuilt = ExampleBatch.from_examples(list(batch))

    assert np.array_equal(rebuilt.x, batch.x)
    assert rebuilt.record_ids == batch.record_ids


def test_fallback_record_ids_are_scoped_by_domain():
    held_out = ExampleBatch.from_examples([Example(x=np.zeros(2), z=1, y=0, domain="d0")])
    training = ExampleBatch.from_examples([Example(x=np.ones(2), z=-1, y=1, domain="d1")])

    assert held_out.record_ids == ("d0:r0",)
    assert training.record_ids == ("d1:r0",)
    LeakageGuard.for_batch(held_out).check(training, "train")


def test_batch_rejects_inconsistent_columns():
    with pytest.raises(ShapeError):
        ExampleBatch(
            x=np.zeros((2, 1)), z=np.array([1]), y=np.array([0, 1]), record_ids=("a", "b"), domains=(None, None)
        )


def test_task_rejects_overlapping_records():
    batch = make_batch(np.zeros((2, 1)), z=[1, -1], y=[0, 1])

    with pytest.raises(DatasetError):
        Task(support=batch, query=batch.take([1]))


def test_leakage_guard_blocks_held_out_records():
    batch = make_batch(np.zeros((3, 1)), z=[1, -1, 1], y=[0, 1, 1], prefix="held:")
    guard = LeakageGuard.for_batch(batch.take([2]))

    guard.check(batch.take([0, 1]), "train")
    with pytest.raises(DataLeakageError):
        guard.check(batch, "train")


def test_lodo_result_average_row():
    result = LodoResult(
        method=Method.FEED,
        seed=0,
        rows=[_report("a", 0.6), _report("b", 0.8, delta_dp=None), _report("c", 1.0)],
    )

    avg = result.average()

    assert avg.domain_id == AVERAGE_ROW
    assert avg.accuracy == pytest.approx(0.8)
    assert avg.delta_dp == pytest.approx(0.1)
    assert "delta_dp" in avg.missing
    assert avg.group_counts == {-1: 15, 1: 15}
    assert [r.domain_id for r in result.table()] == ["a", "b", "c", AVERAGE_ROW]


def test_lodo_run_needs_three_domains():
    with pytest.raises(DatasetError):
        LodoRun.create(uuid.uuid4(), tiny_config(), ["a", "b"])


def test_lodo_run_lifecycle_emits_events():
    run = LodoRun.create(uuid.uuid4(), tiny_config(), ["a", "b", "c"])
    assert isinstance(run.pull_events()[0], LodoRunCreated)

    run.start()
    assert run.status == RunStatus.RUNNING
    assert isinstance(run.pull_events()[0], LodoRunStarted)
    with pytest.raises(ValueError):
        run.start()

    first, second, third = run.folds
    run.complete_fold(first.fold_id, _report("a", 0.5), {"meta": [{"step": 0.0}]})
    run.complete_fold(second.fold_id, _report("b", 0.7), {})
    run.fail_fold(third.fold_id, "DivergenceError: boom")
    run.check_if_completed()
    run.check_if_completed()

    events = run.pull_events()
    assert [type(e) for e in events] == [FoldCompleted, FoldCompleted, FoldCompleted, LodoRunCompleted]
    assert run.status == RunStatus.COMPLETED
    assert third.status == FoldStatus.FAILED
    assert run.failed_folds() == [third]
    assert run.history() == {"a/meta": [{"step": 0.0}]}
    assert [r.domain_id for r in run.result().rows] == ["a", "b"]
    assert run.result().method == Method.FEED
