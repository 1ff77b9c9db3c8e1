import sys

import pytest
from loguru import logger


@pytest.fixture(autouse=True)
def restore_logging(monkeypatch: pytest.MonkeyPatch):
    """cli_main 이 바꾼 loguru sink 를 테스트가 끝나면 되돌립니다."""
    monkeypatch.delenv("FEED_OUT_DIR", raising=False)
    yield
    logger.remove()
    logger.add(sys.stderr)
