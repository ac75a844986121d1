import hashlib
import threading

import pytest

from explainbench.errors import BlobCorrupted, UnknownBlob, UnknownRecord
from explainbench.service.store import RunStore


class TestBlobs:
    def test_put_get_round_trip(self, tmp_path):
        store = RunStore(tmp_path)
        data = b"some bytes"
        key = store.put_blob(data)
        assert key == hashlib.sha256(data).hexdigest()
        assert store.get_blob(key) == data

    def test_idempotent_put(self, tmp_path):
        store = RunStore(tmp_path)
        assert store.put_blob(b"x") == store.put_blob(b"x")

    def test_unknown_blob(self, tmp_path):
        with pytest.raises(UnknownBlob):
            RunStore(tmp_path).get_blob("00" * 32)

    def test_hash_verified_on_read(self, tmp_path):
        store = RunStore(tmp_path)
        key = store.put_blob(b"original")
        store._blob_path(key).write_bytes(b"tampered")
        with pytest.raises(BlobCorrupted):
            store.get_blob(key)

    def test_has_blob(self, tmp_path):
        store = RunStore(tmp_path)
        key = store.put_blob(b"y")
        assert store.has_blob(key)
        assert not store.has_blob("ff" * 32)


class TestLedger:
    def test_monotone_ids(self, tmp_path):
        store = RunStore(tmp_path)
        ids = [store.append_record("explanation", {"n": i}) for i in range(5)]
        assert ids == [1, 2, 3, 4, 5]

    def test_survives_reopen(self, tmp_path):
        store = RunStore(tmp_path)
        store.append_record("explanation", {"n": 1})
        store.append_record("metric_report", {"n": 2})
        reopened = RunStore(tmp_path)
        assert reopened.append_record("explanation", {"n": 3}) == 3
        assert reopened.record_count() == 3

    def test_get_record(self, tmp_path):
        store = RunStore(tmp_path)
        rid = store.append_record("explanation", {"task": "classification"})
        entry = store.get_record(rid)
        assert entry["kind"] == "explanation"
        assert entry["payload"]["task"] == "classification"
        with pytest.raises(UnknownRecord):
            store.get_record(999)

    def test_list_filtered_by_task_and_limit(self, tmp_path):
        store = RunStore(tmp_path)
        for i in range(4):
            task = "classification" if i % 2 == 0 else "detection"
            store.append_record("explanation",
                                {"request": {"task": task}, "n": i})
        cls = store.list_records(task="classification")
        assert [e["payload"]["n"] for e in cls] == [2, 0]
        limited = store.list_records(limit=2)
        assert [e["record_id"] for e in limited] == [4, 3]

    def test_concurrent_appends_stay_monotone(self, tmp_path):
        store = RunStore(tmp_path)
        ids = []
        lock = threading.Lock()

        def work():
            for _ in range(20):
                rid = store.append_record("explanation", {})
                with lock:
                    ids.append(rid)

        threads = [threading.Thread(target=work) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(ids) == list(range(1, 81))
        assert store.record_count() == 80


class TestStoreGuards:
    def test_unwritable_root_rejected(self, tmp_path):
        from explainbench.errors import StoreUnwritable
        blocker = tmp_path / "blocker"
        blocker.write_text("a file, not a directory")
        with pytest.raises(StoreUnwritable):
            RunStore(blocker / "store")


class TestManifests:
    def test_save_load(self, tmp_path):
        store = RunStore(tmp_path)
        store.save_manifest({"dataset_id": "d1", "task": "classification",
                             "items": [], "label_set": []})
        loaded = store.load_manifest("d1")
        assert loaded["dataset_id"] == "d1"

    def test_unknown_dataset(self, tmp_path):
        from explainbench.errors import UnknownDataset
        with pytest.raises(UnknownDataset):
            RunStore(tmp_path).load_manifest("missing")
