"""표 형식 CSV 입출력.

schema 문자열은 ``role:name`` 쌍의 콤마 목록입니다 (role: feature, sensitive, label, domain).
feature 이름에는 ``x*`` 같은 glob 패턴을 쓸 수 있으며 헤더 순서대로 확장됩니다.
"""

from __future__ import annotations

import fnmatch
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from fair_meta_dg.domain.model import DomainDataset, ExampleBatch
from fair_meta_dg.infrastructure.exceptions import SchemaError

ROLES = ("feature", "sensitive", "label", "domain")

# write_csv 가 만드는 파일을 다시 읽을 때 쓰는 schema
WRITTEN_SCHEMA = "feature:x*,sensitive:z,label:y,domain:domain"


@dataclass(frozen=True)
class CsvSchema:
    features: tuple[str, ...]
    sensitive: str
    label: str
    domain: str | None = None

    @classmethod
    def parse(cls, text: str) -> CsvSchema:
        features: list[str] = []
        single: dict[str, str] = {}
        for raw in text.split(","):
            entry = raw.strip()
            if not entry:
                continue
            role, sep, name = entry.partition(":")
            role, name = role.strip(), name.strip()
            if not sep or not name:
                raise SchemaError(f"schema entry {entry!r} is not of the form role:name")
            if role not in ROLES:
                raise SchemaError(f"unknown schema role {role!r} (expected one of {', '.join(ROLES)})")
            if role == "feature":
                features.append(name)
            elif role in single:
                raise SchemaError(f"schema declares role {role!r} twice")
            else:
                single[role] = name
        for required in ("sensitive", "label"):
            if required not in single:
                raise SchemaError(f"schema is missing the {required} column")
        if not features:
            raise SchemaError("schema declares no feature columns")
        return cls(
            features=tuple(features),
            sensitive=single["sensitive"],
            label=single["label"],
            domain=single.get("domain"),
        )

    def resolve_features(self, header: Sequence[str]) -> list[str]:
        reserved = {self.sensitive, self.label, self.domain}
        resolved: list[str] = []
        for pattern in self.features:
            if any(ch in pattern for ch in "*?["):
                matches = [c for c in header if fnmatch.fnmatchcase(c, pattern) and c not in reserved]
                if not matches:
                    raise SchemaError(f"no column matches feature pattern {pattern!r}", column=pattern)
                resolved.extend(m for m in matches if m not in resolved)
            else:
                if pattern not in header:
                    raise SchemaError(f"missing column {pattern!r}", column=pattern)
                if pattern not in resolved:
                    resolved.append(pattern)
        return resolved


def _two_valued(values: pd.Series, column: str, negative: int, positive: int) -> np.ndarray:
    """{0,1} 또는 {-1,1} 로 저장된 이진 열을 (negative, positive) 로 맞춥니다."""
    numeric = _numeric(values, column)
    if not np.all(numeric == np.round(numeric)):
        raise SchemaError(f"column {column!r} holds non-integer values", column=column)
    seen = set(numeric.astype(np.int64).tolist())
    if seen <= {0, 1} or seen <= {-1, 1}:
        return np.where(numeric == 1, positive, negative).astype(np.int64)
    raise SchemaError(
        f"column {column!r} must be binary in {{0,1}} or {{-1,1}}, got {sorted(seen)}",
        column=column,
    )


def _numeric(values: pd.Series, column: str) -> np.ndarray:
    try:
        numeric = pd.to_numeric(values, errors="raise").to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as e:
        raise SchemaError(f"unparseable float in column {column!r}: {e}", column=column) from e
    if np.isnan(numeric).any():
        raise SchemaError(f"missing value in column {column!r}", column=column)
    return numeric


def load_csv(path: str | Path, schema: str | CsvSchema) -> DomainDataset:
    path = Path(path)
    if isinstance(schema, str):
        schema = CsvSchema.parse(schema)
    if not path.exists():
        raise SchemaError(f"CSV file not found: {path}")

    frame = pd.read_csv(path, float_precision="round_trip", encoding="utf-8")
    header = [str(c) for c in frame.columns]
    for column in (schema.sensitive, schema.label, schema.domain):
        if column is not None and column not in header:
            raise SchemaError(f"missing column {column!r} in {path.name}", column=column)
    feature_columns = schema.resolve_features(header)

    x = np.column_stack([_numeric(frame[c], c) for c in feature_columns])
    z = _two_valued(frame[schema.sensitive], schema.sensitive, negative=-1, positive=1)
    y = _two_valued(frame[schema.label], schema.label, negative=0, positive=1)

    if schema.domain is not None:
        domains = tuple(str(d) for d in frame[schema.domain])
    else:
        domains = (path.stem,) * len(frame)
    unique = sorted(set(domains))
    domain_id = unique[0] if len(unique) == 1 else path.stem

    batch = ExampleBatch(
        x=x,
        z=z,
        y=y,
        record_ids=tuple(f"{path.stem}:{i}" for i in range(len(frame))),
        domains=domains,
    )
    logger.debug("CSV 로드 완료", path=str(path), rows=len(batch), features=len(feature_columns))
    return DomainDataset(domain_id=domain_id, batch=batch)


def split_by_domain(dataset: DomainDataset) -> list[DomainDataset]:
    """domain 태그별로 나눕니다. 처음 등장한 순서를 유지합니다."""
    order: list[str] = []
    for d in dataset.batch.domains:
        key = d if d is not None else dataset.domain_id
        if key not in order:
            order.append(key)
    tags = np.array([d if d is not None else dataset.domain_id for d in dataset.batch.domains])
    result = []
    for domain_id in order:
        idx = np.flatnonzero(tags == domain_id)
        part = dataset.take(idx)
        result.append(DomainDataset(domain_id=domain_id, batch=part.batch, latents=part.latents))
    return result


def load_domains(path: str | Path, schema: str | CsvSchema) -> list[DomainDataset]:
    return split_by_domain(load_csv(path, schema))


def _frame(dataset: DomainDataset) -> pd.DataFrame:
    batch = dataset.batch
    columns: dict[str, object] = {f"x{j}": batch.x[:, j] for j in range(batch.feature_dim)}
    columns["z"] = batch.z
    columns["y"] = batch.y
    columns["domain"] = [d if d is not None else dataset.domain_id for d in batch.domains]
    return pd.DataFrame(columns)


def write_csv(datasets: DomainDataset | Sequence[DomainDataset], path: str | Path) -> Path:
    """WRITTEN_SCHEMA 로 다시 읽을 수 있는 CSV 를 씁니다."""
    path = Path(path)
    if isinstance(datasets, DomainDataset):
        datasets = [datasets]
    frame = pd.concat([_frame(d) for d in datasets], ignore_index=True)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def write_latents(dataset: DomainDataset, path: str | Path) -> Path | None:
    """ground-truth 잠재변수 sidecar. 합성 데이터가 아니면 아무것도 쓰지 않습니다."""
    if dataset.latents is None:
        return None
    path = Path(path)
    latents = dataset.latents
    columns: dict[str, object] = {"record_id": list(dataset.batch.record_ids)}
    for prefix, values in (("c", latents.c), ("s", latents.s), ("a", latents.a)):
        for j in range(values.shape[1]):
            columns[f"{prefix}{j}"] = values[:, j]
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(columns).to_csv(path, index=False, lineterminator="\n")
    return path
