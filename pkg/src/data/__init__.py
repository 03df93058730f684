"""Paired dataset ingestion and sampling."""
from src.data.dataset import (
    DatasetIndex,
    PairedSample,
    PrefetchLoader,
    augment,
    derive_seed,
    random_patch_pair,
    scan_dataset,
)

__all__ = [
    "DatasetIndex",
    "PairedSample",
    "PrefetchLoader",
    "augment",
    "derive_seed",
    "random_patch_pair",
    "scan_dataset",
]
