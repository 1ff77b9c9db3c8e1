class InfrastructureError(Exception):
    """인프라스트럭처 계층에서 발생하는 모든 예외의 기반 클래스입니다."""
    pass


class SchemaError(InfrastructureError):
    """CSV 파일이 schema 와 맞지 않을 때 발생하는 예외입니다."""

    def __init__(self, message: str, column: str | None = None) -> None:
        super().__init__(message)
        self.column = column


class CheckpointError(InfrastructureError):
    """체크포인트 저장/로드와 관련된 모든 예외의 기반 클래스입니다."""
    pass


class CheckpointFormatError(CheckpointError):
    """magic 불일치, payload 길이 불일치 등 파일이 손상되었을 때 발생하는 예외입니다."""
    pass


class CheckpointVersionError(CheckpointError):
    """지원하지 않는 포맷 버전의 체크포인트를 읽으려 할 때 발생하는 예외입니다."""
    pass


class ConfigError(InfrastructureError):
    """설정 파일과 관련된 모든 예외의 기반 클래스입니다."""
    pass


class UnknownConfigKeyError(ConfigError):
    """알 수 없는 설정 키가 있을 때 발생하는 예외입니다."""
    pass


class ConfigValueError(ConfigError):
    """설정 값을 해석할 수 없거나 허용 범위를 벗어났을 때 발생하는 예외입니다."""
    pass


class ReportError(InfrastructureError):
    """결과 파일을 쓰거나 읽을 수 없을 때 발생하는 예외입니다."""
    pass
