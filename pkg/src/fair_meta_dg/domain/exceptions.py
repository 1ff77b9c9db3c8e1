class FeedError(Exception):
    """도메인/학습 계층에서 발생하는 모든 예외의 기반 클래스입니다."""

    pass


class ShapeError(FeedError):
    """텐서 shape 이 연산 규칙과 맞지 않을 때 발생합니다."""

    pass


class NonFiniteError(FeedError):
    """순전파 결과에 NaN/Inf 가 포함될 때 발생합니다."""

    pass


class GraphConsumedError(FeedError):
    """이미 backward 가 끝난 계산 그래프를 다시 사용하려 할 때 발생합니다."""

    pass


class MissingGradientError(FeedError):
    """optimizer 에 전달된 gradient 가 파라미터를 모두 덮지 못할 때 발생합니다."""

    pass


class InvalidHyperparameterError(FeedError):
    """하이퍼파라미터가 허용 범위를 벗어났을 때 발생합니다."""

    pass


class DatasetError(FeedError):
    """데이터셋 구성/샘플링과 관련된 예외의 기반 클래스입니다."""

    pass


class InsufficientExamplesError(DatasetError):
    """task 샘플링에 필요한 예제 수가 부족할 때 발생합니다."""

    pass


class DataLeakageError(DatasetError):
    """held-out 평가 split 의 레코드가 학습 경로에 들어왔을 때 발생합니다."""

    pass


class DivergenceError(FeedError):
    """학습 중 손실이 NaN/Inf 가 되어 중단될 때 발생합니다."""

    def __init__(
        self,
        message: str,
        last_good_step: int,
        history: list | None = None,
    ) -> None:
        super().__init__(f"{message} (last good step: {last_good_step})")
        self.last_good_step = last_good_step
        self.history = history if history is not None else []


class MetricUndefinedError(FeedError):
    """공정성 지표 계산에 필요한 subgroup 이 비어있을 때 발생합니다."""

    pass


class FoldFailedError(FeedError):
    """LODO 실행 중 하나 이상의 fold 가 실패했을 때 발생합니다."""

    pass
