from collections.abc import Callable

from loguru import logger

from fair_meta_dg.domain.model import Method
from fair_meta_dg.infrastructure.methods.base import TrainingMethod


class MethodFactory:
    """학습 방법 (feed, erm, erm_fc, abs1, abs2) 구현을 등록하고 생성하는 팩토리"""

    def __init__(self) -> None:
        self._builders: dict[Method, Callable[[], TrainingMethod]] = {}

    def register_method(self, method: Method, builder: Callable[[], TrainingMethod]) -> None:
        self._builders[method] = builder
        logger.debug(f"{method.value} 학습 방법 등록 완료")

    def registered(self) -> list[Method]:
        return list(self._builders)

    def get_method(self, method: Method) -> TrainingMethod:
        builder = self._builders.get(method)
        if builder is None:
            logger.error("지원하지 않는 학습 방법", method=method.value)
            raise ValueError(f"지원하지 않는 학습 방법입니다: {method.value}")
        return builder()
