from __future__ import annotations

from loguru import logger

from fair_meta_dg.domain.config import DataConfig
from fair_meta_dg.domain.exceptions import DatasetError
from fair_meta_dg.domain.model import DomainDataset
from fair_meta_dg.infrastructure.datasets.csv_io import load_domains
from fair_meta_dg.infrastructure.datasets.synthetic import generate_synthetic


def load_datasets(data: DataConfig, seed: int) -> list[DomainDataset]:
    """설정에 따라 합성 도메인을 생성하거나 CSV 를 domain 태그별로 나눠 읽습니다."""
    if data.source == "csv":
        if not data.csv_path or not data.schema:
            raise DatasetError("csv source needs data.csv_path and data.schema")
        datasets = load_domains(data.csv_path, data.schema)
    else:
        datasets = generate_synthetic(data.synth, data.per_domain_count, seed)
    logger.info(
        "데이터셋 준비 완료",
        source=data.source,
        domains=[d.domain_id for d in datasets],
        sizes=[len(d) for d in datasets],
    )
    return datasets


class DatasetProvider:
    """(data 설정, seed) 별로 한 번만 로드하고 fold 들이 공유합니다."""

    def __init__(self) -> None:
        self._cache: dict[tuple[DataConfig, int], list[DomainDataset]] = {}

    def load(self, data: DataConfig, seed: int) -> list[DomainDataset]:
        key = (data, seed)
        if key not in self._cache:
            self._cache[key] = load_datasets(data, seed)
        return self._cache[key]

    def clear(self) -> None:
        self._cache.clear()
