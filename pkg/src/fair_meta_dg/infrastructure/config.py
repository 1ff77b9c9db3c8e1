"""줄 단위 ``key = value`` 설정 파일 파서.

``#`` 이후는 주석이며, 중첩 설정은 ``meta.alpha = 0.001`` 처럼 점으로 구분합니다.
점이 없는 최상위 키가 먼저 적용되므로 ``seed`` 뒤에 ``stage1.seed`` 를 따로 줄 수 있습니다.
"""

from __future__ import annotations

import hashlib
import os
from collections.abc import Callable, Iterable, Sequence
from dataclasses import replace
from enum import Enum
from pathlib import Path
from typing import Any

from loguru import logger

from fair_meta_dg.domain.config import ExperimentConfig
from fair_meta_dg.domain.exceptions import InvalidHyperparameterError
from fair_meta_dg.domain.model import FairnessVariant, Method, SamplingMode
from fair_meta_dg.infrastructure.exceptions import (
    ConfigError,
    ConfigValueError,
    UnknownConfigKeyError,
)

OUT_DIR_ENV = "FEED_OUT_DIR"

Converter = Callable[[str], Any]
FieldPath = tuple[str, ...]


def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    return float(text)


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_str(text: str) -> str | None:
    return text or None


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _float_tuple(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _enum(kind: type[Enum]) -> Converter:
    def convert(text: str) -> Enum:
        try:
            return kind(text)
        except ValueError:
            allowed = ", ".join(str(m.value) for m in kind)
            raise ValueError(f"expected one of {allowed}, got {text!r}") from None

    return convert


def _fields(section: str, target: FieldPath, names: Iterable[str], convert: Converter) -> dict:
    return {f"{section}.{name}": ((target + (name,),), convert) for name in names}


FIELDS: dict[str, tuple[tuple[FieldPath, ...], Converter]] = {
    "method": ((("method",),), _enum(Method)),
    "seed": ((("seed",), ("stage1", "seed"), ("meta", "seed"), ("erm", "seed")), _int),
    "output_dir": ((("output_dir",),), Path),
    "fewshot": ((("fewshot",),), _int),
    "fairness_variant": (
        (("fairness_variant",), ("meta", "variant"), ("erm", "variant")),
        _enum(FairnessVariant),
    ),
    "log_every": ((("stage1", "log_every"), ("meta", "log_every"), ("erm", "log_every")), _int),
    "data.source": ((("data", "source"),), str),
    "data.csv_path": ((("data", "csv_path"),), _optional_str),
    "data.schema": ((("data", "schema"),), _optional_str),
    "data.per_domain_count": ((("data", "per_domain_count"),), _int),
    "data.sampling_mode": ((("meta", "sampling_mode"),), _enum(SamplingMode)),
    "data.correlations": ((("data", "synth", "correlations"),), _float_tuple),
    **_fields(
        "data",
        ("data", "synth"),
        ("domains", "content_dim", "style_dim", "sensitive_dim", "feature_dim", "mixing_seed"),
        _int,
    ),
    **_fields(
        "data",
        ("data", "synth"),
        ("noise", "feature_noise", "style_scale", "sensitive_shift"),
        _float,
    ),
    **_fields("stage1", ("stage1",), ("beta_z", "beta_g", "lr_generator", "lr_discriminator"), _float),
    **_fields("stage1", ("stage1",), ("steps", "batch_size", "seed", "log_every"), _int),
    "stage1.non_saturating": ((("stage1", "non_saturating"),), _bool),
    "stage1.semantic_dim": ((("architecture", "semantic_dim"),), _int),
    **_fields(
        "stage1", ("architecture",), ("hidden", "classifier_hidden", "discriminator_hidden"), _int_tuple
    ),
    **_fields("meta", ("meta",), ("alpha", "eta_p"), _float),
    **_fields(
        "meta",
        ("meta",),
        (
            "inner_steps",
            "tasks_per_batch",
            "iterations",
            "n_sup",
            "n_qry",
            "downstream_steps",
            "seed",
            "log_every",
        ),
        _int,
    ),
    "meta.hidden": ((("meta", "hidden"),), _int_tuple),
    **_fields("duals", ("duals",), ("lambda1", "lambda2", "gamma1", "gamma2", "eta_d"), _float),
    **_fields("erm", ("erm",), ("steps", "batch_size", "seed", "log_every"), _int),
    "erm.lr": ((("erm", "lr"),), _float),
    "erm.hidden": ((("erm", "hidden"),), _int_tuple),
    "selection.mode": ((("selection", "mode"),), str),
    "selection.every": ((("selection", "every"),), _int),
}


def _set_path(obj: Any, path: FieldPath, value: Any) -> Any:
    head, *rest = path
    if not rest:
        return replace(obj, **{head: value})
    return replace(obj, **{head: _set_path(getattr(obj, head), tuple(rest), value)})


def _get_path(obj: Any, path: FieldPath) -> Any:
    for name in path:
        obj = getattr(obj, name)
    return obj


def parse_lines(lines: Iterable[str], source: str = "<config>") -> list[tuple[str, str]]:
    """(key, raw value) 목록. 같은 키가 여러 번 나오면 마지막 값이 이깁니다."""
    pairs: list[tuple[str, str]] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigValueError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        pairs.append((key.strip(), value.strip()))
    return pairs


def apply_pairs(config: ExperimentConfig, pairs: Sequence[tuple[str, str]]) -> ExperimentConfig:
    unknown = [key for key, _ in pairs if key not in FIELDS]
    if unknown:
        raise UnknownConfigKeyError(f"unknown config key(s): {', '.join(unknown)}")
    ordered = sorted(pairs, key=lambda kv: "." in kv[0])
    try:
        for key, raw in ordered:
            paths, convert = FIELDS[key]
            try:
                value = convert(raw)
            except (ValueError, TypeError) as e:
                raise ConfigValueError(f"{key}: {e}") from e
            for path in paths:
                config = _set_path(config, path, value)
    except InvalidHyperparameterError as e:
        raise ConfigValueError(str(e)) from e
    return config


def load_config(
    path: str | Path | None = None,
    overrides: Sequence[str] = (),
    environ: dict[str, str] | None = None,
) -> ExperimentConfig:
    """설정 파일 → overrides → ``FEED_OUT_DIR`` 순으로 적용하고 검증합니다."""
    pairs: list[tuple[str, str]] = []
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        pairs.extend(parse_lines(path.read_text(encoding="utf-8").splitlines(), str(path)))
    pairs.extend(parse_lines(overrides, "--set"))

    config = apply_pairs(ExperimentConfig(), pairs)
    env = os.environ if environ is None else environ
    if env.get(OUT_DIR_ENV):
        config = replace(config, output_dir=Path(env[OUT_DIR_ENV]))

    try:
        config.validate()
    except InvalidHyperparameterError as e:
        raise ConfigValueError(str(e)) from e
    logger.debug("설정 로드 완료", path=str(path) if path else None, overrides=len(overrides))
    return config


def _format(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if value is None:
        return ""
    return str(value)


def dump_config(config: ExperimentConfig, include_output_dir: bool = True) -> str:
    """load_config 로 다시 읽을 수 있는 정렬된 key = value 목록"""
    lines = []
    for key in sorted(FIELDS):
        if key == "output_dir" and not include_output_dir:
            continue
        paths, _ = FIELDS[key]
        lines.append(f"{key} = {_format(_get_path(config, paths[0]))}")
    return "\n".join(lines) + "\n"


def fingerprint(config: ExperimentConfig) -> str:
    """출력 경로를 제외한 설정의 안정적인 sha256 hex digest"""
    return hashlib.sha256(dump_config(config, include_output_dir=False).encode("utf-8")).hexdigest()
