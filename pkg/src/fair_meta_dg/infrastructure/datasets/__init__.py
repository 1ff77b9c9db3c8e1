from fair_meta_dg.infrastructure.datasets.csv_io import (
    WRITTEN_SCHEMA,
    CsvSchema,
    load_csv,
    load_domains,
    write_csv,
    write_latents,
)
from fair_meta_dg.infrastructure.datasets.source import DatasetProvider, load_datasets
from fair_meta_dg.infrastructure.datasets.synthetic import SyntheticGenerator, generate_synthetic

__all__ = [
    "WRITTEN_SCHEMA",
    "CsvSchema",
    "DatasetProvider",
    "SyntheticGenerator",
    "generate_synthetic",
    "load_csv",
    "load_datasets",
    "load_domains",
    "write_csv",
    "write_latents",
]
