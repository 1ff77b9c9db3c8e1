"""로깅 설정 및 트레이싱 유틸리티"""

import functools
import inspect
import sys
import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

from loguru import logger

STDERR_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - "
    "<level>{message}</level> | <yellow>{extra}</yellow>"
)


def configure_logging(level: str = "INFO", log_file: Path | None = None) -> None:
    """loguru 기본 sink 를 지우고 stderr (+ 선택적 JSON 파일) sink 를 붙입니다."""
    logger.remove()
    if sys.stderr:
        logger.add(sys.stderr, level=level, format=STDERR_FORMAT)
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        logger.add(
            log_file,
            level="DEBUG",
            rotation="10 MB",
            retention="7 days",
            encoding="utf-8",
            backtrace=True,
            diagnose=True,
            serialize=True,
        )


def _signature(func: Callable, args: tuple, kwargs: dict) -> str:
    # 메서드면 self 제외
    shown = args[1:] if args and inspect.ismethod(getattr(args[0], func.__name__, None)) else args
    parts = [_short_repr(a) for a in shown] + [f"{k}={_short_repr(v)}" for k, v in kwargs.items()]
    return ", ".join(parts)


def _short_repr(value: Any, limit: int = 60) -> str:
    text = repr(value)
    return text if len(text) <= limit else text[: limit - 3] + "..."


def log_function_call(func: Callable) -> Callable:
    """함수 호출을 자동으로 로깅하는 데코레이터

    함수의 시작, 종료, 실행 시간을 로깅합니다.
    """
    func_name = f"{func.__module__}.{func.__qualname__}"

    def _failed(started: float, e: Exception) -> None:
        elapsed = time.perf_counter() - started
        logger.error(f"✗ {func_name} failed after {elapsed:.3f}s: {e.__class__.__name__}: {e}")

    @functools.wraps(func)
    async def async_wrapper(*args, **kwargs):
        logger.debug(f"→ {func_name}({_signature(func, args, kwargs)})")
        started = time.perf_counter()
        try:
            result = await func(*args, **kwargs)
        except Exception as e:
            _failed(started, e)
            raise
        logger.debug(f"← {func_name} completed in {time.perf_counter() - started:.3f}s")
        return result

    @functools.wraps(func)
    def sync_wrapper(*args, **kwargs):
        logger.debug(f"→ {func_name}({_signature(func, args, kwargs)})")
        started = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            _failed(started, e)
            raise
        logger.debug(f"← {func_name} completed in {time.perf_counter() - started:.3f}s")
        return result

    return async_wrapper if inspect.iscoroutinefunction(func) else sync_wrapper


@contextmanager
def log_step(step_name: str, **extra_context) -> Iterator[None]:
    """단계별 작업을 로깅하는 컨텍스트 매니저

    Usage:
        with log_step("stage-1 학습", fold="domain_0"):
            ...
    """
    logger.info(f"▶ {step_name}", **extra_context)
    start_time = time.perf_counter()

    try:
        yield
    except Exception as e:
        elapsed = time.perf_counter() - start_time
        logger.error(
            f"✗ {step_name} failed after {elapsed:.3f}s: {e.__class__.__name__}: {e}",
            duration=elapsed,
            error_type=e.__class__.__name__,
            **extra_context,
        )
        raise
    elapsed = time.perf_counter() - start_time
    logger.info(f"✓ {step_name} completed in {elapsed:.3f}s", duration=elapsed, **extra_context)


class PerformanceTracker:
    """단계별 소요 시간을 기록하고 종료 시 한 번에 로깅합니다."""

    def __init__(self, name: str):
        self.name = name
        self.start_time: float | None = None
        self.metrics: dict[str, float] = {}

    def start(self) -> None:
        self.start_time = time.perf_counter()
        logger.debug(f"Performance tracking started: {self.name}")

    def checkpoint(self, checkpoint_name: str) -> None:
        if self.start_time is None:
            logger.warning(f"PerformanceTracker.start() not called for {self.name}")
            return
        elapsed = time.perf_counter() - self.start_time
        self.metrics[checkpoint_name] = elapsed
        logger.debug(f"Checkpoint '{checkpoint_name}' reached", tracker=self.name, elapsed=f"{elapsed:.3f}s")

    def end(self) -> dict[str, float]:
        if self.start_time is None:
            logger.warning(f"PerformanceTracker.start() not called for {self.name}")
            return {}
        self.metrics["total"] = time.perf_counter() - self.start_time
        logger.info(
            f"Performance metrics for {self.name}",
            **{k: f"{v:.3f}s" for k, v in self.metrics.items()},
        )
        return self.metrics
