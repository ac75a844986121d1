from .store import RunStore
from .datasets import DatasetManifest, ingest_dataset

__all__ = ["RunStore", "DatasetManifest", "ingest_dataset"]
