import pytest

from loomxai.demo import BadConfig, DemoConfig, class_pools, demo_data, demo_rows, write_demo_jsonl
from loomxai.dataset import ingest


class TestDemoData:
    def test_same_seed_gives_byte_identical_files(self, tmp_path):
        config = DemoConfig(n_records=50, seed=7)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_demo_jsonl(config, a)
        write_demo_jsonl(config, b)
        assert a.read_bytes() == b.read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_demo_jsonl(DemoConfig(n_records=50, seed=1), a)
        write_demo_jsonl(DemoConfig(n_records=50, seed=2), b)
        assert a.read_bytes() != b.read_bytes()

    def test_round_robin_labels_even_split(self):
        rows = demo_rows(DemoConfig(n_records=100, classes=("pos", "neg")))
        assert sum(1 for r in rows if r["label"] == "pos") == 50
        assert rows[0]["label"] == "pos" and rows[1]["label"] == "neg"

    def test_zero_records_is_bad_config(self):
        with pytest.raises(BadConfig):
            demo_rows(DemoConfig(n_records=0))

    def test_empty_classes_is_bad_config(self):
        with pytest.raises(BadConfig):
            demo_rows(DemoConfig(classes=()))

    def test_duplicate_classes_is_bad_config(self):
        with pytest.raises(BadConfig):
            demo_rows(DemoConfig(classes=("a", "a")))

    def test_token_pools_disjoint(self):
        pools = class_pools(DemoConfig(classes=("a", "b", "c"), vocab_size=40))
        seen = set()
        for pool in pools.values():
            assert len(pool) == 40
            assert not seen & set(pool)
            seen |= set(pool)

    def test_texts_use_only_own_class_pool(self):
        config = DemoConfig(n_records=60)
        pools = class_pools(config)
        for row in demo_rows(config):
            assert set(row["text"].split()) <= set(pools[row["label"]])

    def test_file_ingests_back_identically(self, tmp_path):
        config = DemoConfig(n_records=30)
        path = tmp_path / "demo.jsonl"
        ds_written = write_demo_jsonl(config, path)
        ds_read = ingest(path, format="jsonl")
        assert ds_read.records == ds_written.records

    def test_words_column_is_number_kind(self):
        ds = demo_data(DemoConfig(n_records=10))
        assert ds.column_schema["words"] == "number"
