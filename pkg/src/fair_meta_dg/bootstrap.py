from __future__ import annotations

from typing import TYPE_CHECKING

from loguru import logger

from fair_meta_dg.application import handlers
from fair_meta_dg.application.commands import (
    AdaptCommand,
    CreateLodoRunCommand,
    EvaluateCommand,
    ExecuteFoldCommand,
    MetaTrainCommand,
    SynthesizeDatasetsCommand,
    TrainDisentanglerCommand,
)
from fair_meta_dg.application.handlers import GetLodoResultQueryHandler
from fair_meta_dg.domain.events import (
    FoldCompleted,
    LodoRunCompleted,
    LodoRunCreated,
    LodoRunStarted,
)
from fair_meta_dg.domain.model import Method
from fair_meta_dg.infrastructure.datasets import DatasetProvider
from fair_meta_dg.infrastructure.message_bus import InMemoryMessageBus
from fair_meta_dg.infrastructure.methods.erm import ErmMethod
from fair_meta_dg.infrastructure.methods.factory import MethodFactory
from fair_meta_dg.infrastructure.methods.feed import MetaLearningMethod
from fair_meta_dg.infrastructure.methods.runner import FoldRunner
from fair_meta_dg.infrastructure.uow import InMemoryUnitOfWork
from fair_meta_dg.learning.meta import MetaVariant

if TYPE_CHECKING:
    from fair_meta_dg.domain.message_bus import MessageBus
    from fair_meta_dg.domain.uow import UnitOfWork


class Application:
    """애플리케이션의 핵심 컴포넌트들을 관리하는 클래스"""

    def __init__(
        self,
        bus: MessageBus,
        uow: UnitOfWork,
        factory: MethodFactory,
        query_handler: GetLodoResultQueryHandler,
        provider: DatasetProvider,
    ):
        self.bus = bus
        self.uow = uow
        self.factory = factory
        self.query_handler = query_handler
        self.provider = provider


def default_factory() -> MethodFactory:
    factory = MethodFactory()
    factory.register_method(Method.FEED, lambda: MetaLearningMethod(MetaVariant.FULL))
    factory.register_method(Method.ABS1, lambda: MetaLearningMethod(MetaVariant.NO_INNER))
    factory.register_method(Method.ABS2, lambda: MetaLearningMethod(MetaVariant.NO_AUGMENT))
    factory.register_method(Method.ERM, lambda: ErmMethod(fairness_constrained=False))
    factory.register_method(Method.ERM_FC, lambda: ErmMethod(fairness_constrained=True))
    return factory


def bootstrap(
    uow: UnitOfWork | None = None,
    bus: MessageBus | None = None,
    factory: MethodFactory | None = None,
    provider: DatasetProvider | None = None,
) -> Application:
    """애플리케이션을 초기화하고 모든 컴포넌트를 설정합니다.

    Args:
        uow: Unit of Work. 없으면 bus 에 연결된 InMemoryUnitOfWork 를 만듭니다.
        bus: 메시지 버스. 없으면 InMemoryMessageBus 를 씁니다.
        factory: 학습 방법 팩토리. 없으면 다섯 가지 기본 방법을 등록한 팩토리를 씁니다.
        provider: 데이터셋 공급자. 테스트에서 미리 만든 도메인을 주입할 때 사용합니다.

    Returns:
        초기화된 Application 객체
    """
    logger.debug("애플리케이션 bootstrap 시작")

    # 1. 메시지 버스 및 UnitOfWork 생성
    bus = bus if bus is not None else InMemoryMessageBus()
    uow = uow if uow is not None else InMemoryUnitOfWork(bus)

    # 2. 학습 방법 팩토리와 데이터 공급자
    factory = factory if factory is not None else default_factory()
    provider = provider if provider is not None else DatasetProvider()
    runner = FoldRunner(factory)
    logger.debug(
        "학습 방법 등록 완료", methods=[m.value for m in factory.registered()]
    )

    # 3. 커맨드 핸들러 등록
    bus.register_command(SynthesizeDatasetsCommand, handlers.SynthesizeDatasetsCommandHandler())
    bus.register_command(
        TrainDisentanglerCommand, handlers.TrainDisentanglerCommandHandler(provider=provider)
    )
    bus.register_command(
        MetaTrainCommand, handlers.MetaTrainCommandHandler(provider=provider, factory=factory)
    )
    bus.register_command(
        AdaptCommand, handlers.AdaptCommandHandler(provider=provider, factory=factory)
    )
    bus.register_command(EvaluateCommand, handlers.EvaluateCommandHandler(provider=provider))
    bus.register_command(
        CreateLodoRunCommand, handlers.CreateLodoRunCommandHandler(uow=uow, provider=provider)
    )
    bus.register_command(
        ExecuteFoldCommand,
        handlers.ExecuteFoldCommandHandler(uow=uow, runner=runner, provider=provider),
    )
    logger.debug("커맨드 핸들러 등록 완료")

    # 4. 이벤트 핸들러 등록
    bus.subscribe_to_event(LodoRunCreated, handlers.LodoRunCreatedHandler(uow=uow))
    bus.subscribe_to_event(LodoRunStarted, handlers.LodoRunStartedHandler(uow=uow, bus=bus))
    bus.subscribe_to_event(FoldCompleted, handlers.FoldCompletedHandler(uow=uow))
    bus.subscribe_to_event(LodoRunCompleted, handlers.LodoRunCompletedHandler(uow=uow))
    logger.debug("이벤트 핸들러 등록 완료")

    # 5. 쿼리 핸들러 생성
    query_handler = GetLodoResultQueryHandler(uow=uow)

    logger.debug("애플리케이션 bootstrap 완료")
    return Application(
        bus=bus,
        uow=uow,
        factory=factory,
        query_handler=query_handler,
        provider=provider,
    )
