# pyright: reportPrivateUsage=false
from __future__ import annotations

import uuid
try:
    from typing import override
except ImportError:  # Python < 3.12
    from typing_extensions import override

import pytest
from pytest_mock import MockerFixture

from fair_meta_dg.application.commands import (
    Command,
    CreateLodoRunCommand,
    ExecuteFoldCommand,
    SynthesizeDatasetsCommand,
)
from fair_meta_dg.application.handlers import (
    CreateLodoRunCommandHandler,
    ExecuteFoldCommandHandler,
    FoldCompletedHandler,
    GetLodoResultQueryHandler,
    LodoRunCompletedHandler,
    LodoRunCreatedHandler,
    LodoRunStartedHandler,
    SynthesizeDatasetsCommandHandler,
)
from fair_meta_dg.application.queries import GetLodoResultQuery
from fair_meta_dg.domain.events import (
    Event,
    FoldCompleted,
    LodoRunCompleted,
    LodoRunCreated,
    LodoRunStarted,
)
from fair_meta_dg.domain.exceptions import DatasetError, DivergenceError
from fair_meta_dg.domain.model import (
    FairReport,
    FoldStatus,
    LodoRun,
    RunStatus,
)
from fair_meta_dg.domain.repositories import LodoRunRepository
from fair_meta_dg.domain.uow import UnitOfWork
from fair_meta_dg.infrastructure import message_bus
from fair_meta_dg.infrastructure.datasets import DatasetProvider
from fair_meta_dg.infrastructure.methods.runner import FoldOutcome, FoldRunner
from fair_meta_dg.infrastructure.repositories import InMemoryLodoRunRepository
from tests.support import tiny_config


class FakeUnitOfWork(UnitOfWork):
    def __init__(self):
        self.runs: LodoRunRepository = InMemoryLodoRunRepository()
        self.committed: bool = False
        self.events: list[Event] = []

    @override
    async def __aenter__(self) -> FakeUnitOfWork:
        self.committed = False
        self.events.clear()
        return self

    @override
    async def __aexit__(self, exc_type, exc_val, traceback):  # pyright: ignore[reportUnknownParameterType, reportMissingParameterType]
        pass

    @override
    async def commit(self):
        for run in self.runs.seen:
            self.events.extend(run.pull_events())
        self.committed = True

    @override
    async def rollback(self):
        pass


def _report(domain: str) -> FairReport:
    return FairReport(domain, 0.75, 0.1, 0.2, 0.15, group_counts={-1: 2, 1: 2})


def _provider(mocker: MockerFixture, datasets) -> DatasetProvider:
    provider = mocker.Mock(spec=DatasetProvider)
    provider.load.return_value = datasets  # pyright: ignore[reportAny]
    return provider


async def _stored_run(uow: FakeUnitOfWork, domains=("domain_0", "domain_1", "domain_2")) -> LodoRun:
    run = LodoRun.create(uuid.uuid4(), tiny_config(), list(domains))
    run.pull_events()
    await uow.runs.add(run)
    return run


# Unit Tests


async def test_create_lodo_run_handler_creates_one_fold_per_domain(
    mocker: MockerFixture, tiny_domains
):
    uow = FakeUnitOfWork()
    handler = CreateLodoRunCommandHandler(uow=uow, provider=_provider(mocker, tiny_domains))
    run_id = uuid.uuid4()

    await handler.handle(CreateLodoRunCommand(run_id=run_id, config=tiny_config()))

    assert uow.committed is True
    saved = await uow.runs.get(run_id)
    assert saved is not None
    assert [f.held_out_domain for f in saved.folds] == ["domain_0", "domain_1", "domain_2"]
    assert len(uow.events) == 1
    assert isinstance(uow.events[0], LodoRunCreated)


async def test_create_lodo_run_handler_rejects_two_domains(mocker: MockerFixture, tiny_domains):
    uow = FakeUnitOfWork()
    handler = CreateLodoRunCommandHandler(uow=uow, provider=_provider(mocker, tiny_domains[:2]))

    with pytest.raises(DatasetError):
        await handler.handle(CreateLodoRunCommand(run_id=uuid.uuid4(), config=tiny_config()))


async def test_lodo_run_created_handler_starts_run():
    uow = FakeUnitOfWork()
    run = await _stored_run(uow)

    await LodoRunCreatedHandler(uow=uow).handle(
        LodoRunCreated(run_id=run.run_id, created_at=run.created_at)
    )

    assert uow.committed is True
    assert run.status == RunStatus.RUNNING
    assert len(uow.events) == 1
    assert isinstance(uow.events[0], LodoRunStarted)


async def test_lodo_run_started_handler_dispatches_one_command_per_fold(mocker: MockerFixture):
    uow = FakeUnitOfWork()
    bus = message_bus.InMemoryMessageBus()
    spy_handle = mocker.spy(bus, "handle")

    class DummyExecuteFoldHandler:
        async def handle(self, cmd: Command):
            pass

    bus.register_command(ExecuteFoldCommand, DummyExecuteFoldHandler())  # pyright: ignore[reportUnknownMemberType]
    run = await _stored_run(uow)

    await LodoRunStartedHandler(uow=uow, bus=bus).handle(LodoRunStarted(run_id=run.run_id))

    assert spy_handle.call_count == 3
    dispatched = [call.args[0] for call in spy_handle.call_args_list]  # pyright: ignore[reportAny]
    assert all(isinstance(c, ExecuteFoldCommand) for c in dispatched)
    assert [c.fold_id for c in dispatched] == [f.fold_id for f in run.folds]


async def test_execute_fold_handler_records_report(mocker: MockerFixture, tiny_domains):
    uow = FakeUnitOfWork()
    runner = mocker.Mock(spec=FoldRunner)
    runner.run.return_value = FoldOutcome(  # pyright: ignore[reportAny]
        report=_report("domain_0"), history={"meta": [{"step": 0.0, "L_total": 1.0}]}
    )
    run = await _stored_run(uow)
    fold = run.folds[0]
    handler = ExecuteFoldCommandHandler(
        uow=uow, runner=runner, provider=_provider(mocker, tiny_domains)
    )

    await handler.handle(ExecuteFoldCommand(run_id=run.run_id, fold_id=fold.fold_id))

    runner.run.assert_called_once_with(run.config, tiny_domains, "domain_0")  # pyright: ignore[reportAny]
    assert uow.committed is True
    assert fold.status == FoldStatus.COMPLETED
    assert fold.report == _report("domain_0")
    assert isinstance(uow.events[0], FoldCompleted)


async def test_execute_fold_handler_marks_failure(mocker: MockerFixture, tiny_domains):
    uow = FakeUnitOfWork()
    runner = mocker.Mock(spec=FoldRunner)
    runner.run.side_effect = DivergenceError("meta-training diverged", 3)  # pyright: ignore[reportAny]
    run = await _stored_run(uow)
    fold = run.folds[1]
    handler = ExecuteFoldCommandHandler(
        uow=uow, runner=runner, provider=_provider(mocker, tiny_domains)
    )

    await handler.handle(ExecuteFoldCommand(run_id=run.run_id, fold_id=fold.fold_id))

    assert fold.status == FoldStatus.FAILED
    assert fold.error_message is not None
    assert fold.error_message.startswith("DivergenceError: meta-training diverged")
    assert uow.events[0] == FoldCompleted(run_id=run.run_id, fold_id=fold.fold_id, status="failed")


async def test_fold_completed_handler_completes_run_once():
    uow = FakeUnitOfWork()
    run = await _stored_run(uow)
    run.start()
    for fold in run.folds:
        run.complete_fold(fold.fold_id, _report(fold.held_out_domain), {})
    run.pull_events()
    handler = FoldCompletedHandler(uow=uow)
    event = FoldCompleted(run_id=run.run_id, fold_id=run.folds[-1].fold_id, status="completed")

    await handler.handle(event)
    first = list(uow.events)
    await handler.handle(event)

    assert run.status == RunStatus.COMPLETED
    assert len(first) == 1
    assert isinstance(first[0], LodoRunCompleted)
    assert uow.events == []


async def test_fold_completed_handler_waits_for_pending_folds():
    uow = FakeUnitOfWork()
    run = await _stored_run(uow)
    run.start()
    run.complete_fold(run.folds[0].fold_id, _report("domain_0"), {})
    run.pull_events()

    await FoldCompletedHandler(uow=uow).handle(
        FoldCompleted(run_id=run.run_id, fold_id=run.folds[0].fold_id, status="completed")
    )

    assert run.status == RunStatus.RUNNING
    assert uow.events == []


async def test_lodo_run_completed_handler_writes_report(tmp_path):
    uow = FakeUnitOfWork()
    run = await _stored_run(uow)
    run.out_dir = tmp_path
    for fold in run.folds:
        run.complete_fold(fold.fold_id, _report(fold.held_out_domain), {"erm": [{"step": 0.0}]})

    await LodoRunCompletedHandler(uow=uow).handle(LodoRunCompleted(run_id=run.run_id))

    assert (tmp_path / "results.csv").exists()
    assert (tmp_path / "results.jsonl").exists()
    assert len((tmp_path / "history.jsonl").read_text().splitlines()) == 3
    assert "output_dir" not in (tmp_path / "config.cfg").read_text()


async def test_lodo_run_completed_handler_skips_report_on_failure(tmp_path):
    uow = FakeUnitOfWork()
    run = await _stored_run(uow)
    run.out_dir = tmp_path
    run.complete_fold(run.folds[0].fold_id, _report("domain_0"), {})
    run.fail_fold(run.folds[1].fold_id, "DivergenceError: boom")
    run.fail_fold(run.folds[2].fold_id, "DivergenceError: boom")

    await LodoRunCompletedHandler(uow=uow).handle(LodoRunCompleted(run_id=run.run_id))

    assert not (tmp_path / "results.csv").exists()


async def test_query_handler_reports_failures():
    uow = FakeUnitOfWork()
    run = await _stored_run(uow)
    run.complete_fold(run.folds[0].fold_id, _report("domain_0"), {"meta": []})
    run.fail_fold(run.folds[1].fold_id, "DataLeakageError: leaked")

    dto = await GetLodoResultQueryHandler(uow=uow).handle(GetLodoResultQuery(run_id=run.run_id))

    assert dto is not None
    assert dto.failures == {"domain_1": "DataLeakageError: leaked"}
    assert [r.domain_id for r in dto.result.rows] == ["domain_0"]
    assert await GetLodoResultQueryHandler(uow=uow).handle(GetLodoResultQuery(run_id=uuid.uuid4())) is None


async def test_synthesize_handler_writes_csv_latents_and_schema(tmp_path):
    await SynthesizeDatasetsCommandHandler().handle(
        SynthesizeDatasetsCommand(config=tiny_config(), out_dir=tmp_path)
    )

    assert (tmp_path / "synthetic.csv").exists()
    assert sorted(p.name for p in tmp_path.glob("*.latents.csv")) == [
        f"domain_{i}.latents.csv" for i in range(3)
    ]
    assert (tmp_path / "schema.txt").read_text().strip().startswith("feature:")
