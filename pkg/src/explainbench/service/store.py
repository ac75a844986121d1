"""Filesystem run store: content-addressed blobs plus an append-only ledger.

Blobs are keyed by the SHA-256 of their bytes and written atomically
(temp file, then rename), so a key can never point at partial content.
The ledger is a line-delimited JSON file with monotonically increasing
record ids; appends serialize through a single writer lock.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from pathlib import Path
from typing import Iterator, Optional

from ..errors import (
    BlobCorrupted,
    StoreUnwritable,
    UnknownBlob,
    UnknownRecord,
)


class RunStore:
    def __init__(self, root):
        self.root = Path(root)
        try:
            (self.root / "blobs").mkdir(parents=True, exist_ok=True)
            (self.root / "datasets").mkdir(parents=True, exist_ok=True)
            probe = self.root / ".writable"
            probe.write_text("ok")
            probe.unlink()
        except OSError as exc:
            raise StoreUnwritable(f"{self.root}: {exc}") from exc
        self._ledger_path = self.root / "ledger.jsonl"
        self._write_lock = threading.Lock()
        self._next_id = self._scan_next_id()

    def _scan_next_id(self) -> int:
        last = 0
        if self._ledger_path.exists():
            with open(self._ledger_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        last = max(last, json.loads(line)["record_id"])
        return last + 1

    # blobs ---------------------------------------------------------------

    def _blob_path(self, key: str) -> Path:
        return self.root / "blobs" / key[:2] / key

    def put_blob(self, data: bytes) -> str:
        key = hashlib.sha256(data).hexdigest()
        path = self._blob_path(key)
        if path.exists():
            return key
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return key

    def get_blob(self, key: str) -> bytes:
        path = self._blob_path(key)
        if not path.exists():
            raise UnknownBlob(key)
        data = path.read_bytes()
        if hashlib.sha256(data).hexdigest() != key:
            raise BlobCorrupted(key)
        return data

    def has_blob(self, key: str) -> bool:
        return self._blob_path(key).exists()

    # ledger ---------------------------------------------------------------

    def append_record(self, kind: str, payload: dict) -> int:
        with self._write_lock:
            record_id = self._next_id
            entry = {"record_id": record_id, "kind": kind, "payload": payload}
            line = json.dumps(entry, sort_keys=True)
            with open(self._ledger_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._next_id += 1
        return record_id

    def get_record(self, record_id: int) -> dict:
        for entry in self.iter_records():
            if entry["record_id"] == record_id:
                return entry
        raise UnknownRecord(str(record_id))

    def iter_records(self, kind: Optional[str] = None) -> Iterator[dict]:
        if not self._ledger_path.exists():
            return
        with open(self._ledger_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if kind is None or entry["kind"] == kind:
                    yield entry

    def list_records(self, kind: Optional[str] = None,
                     task: Optional[str] = None,
                     limit: Optional[int] = None) -> list:
        out = []
        for entry in self.iter_records(kind):
            if task is not None:
                payload = entry["payload"]
                entry_task = payload.get("task") or \
                    payload.get("request", {}).get("task")
                if entry_task != task:
                    continue
            out.append(entry)
        out.sort(key=lambda e: e["record_id"], reverse=True)
        if limit is not None:
            out = out[:limit]
        return out

    def record_count(self) -> int:
        return sum(1 for _ in self.iter_records())

    # dataset manifests ----------------------------------------------------

    def save_manifest(self, manifest_json: dict) -> None:
        path = self.root / "datasets" / f"{manifest_json['dataset_id']}.json"
        path.write_text(json.dumps(manifest_json, indent=2, sort_keys=True))

    def load_manifest(self, dataset_id: str) -> dict:
        path = self.root / "datasets" / f"{dataset_id}.json"
        if not path.exists():
            from ..errors import UnknownDataset
            raise UnknownDataset(dataset_id)
        return json.loads(path.read_text())
