import struct

import numpy as np
import pytest

from entrocl import ConfigError, FormatError
from entrocl.streams import (
    StreamConfig,
    batches,
    load_csv_stream,
    load_idx_stream,
    make_synthetic_stream,
    parse_idx_images,
    parse_idx_labels,
    save_stream_csv,
)


def small_cfg(**overrides):
    base = dict(
        num_tasks=3,
        classes_per_task=2,
        train_per_class=25,
        test_per_class=5,
        input_dim=4,
        seed=11,
    )
    base.update(overrides)
    return StreamConfig(**base)


class TestSyntheticStream:
    def test_zero_noise_collapses_to_class_means(self):
        tasks = make_synthetic_stream(small_cfg(noise_scale=0.0))
        for task in tasks:
            for c in task.class_ids:
                rows = task.train_x[task.train_y == c]
                assert np.allclose(rows, rows[0])
        # nearest-mean rule is exact when noise vanishes
        means = {
            c: task.train_x[task.train_y == c][0]
            for task in tasks
            for c in task.class_ids
        }
        for task in tasks:
            for x, y in zip(task.test_x, task.test_y):
                dists = {c: np.linalg.norm(x - m) for c, m in means.items()}
                assert min(dists, key=dists.get) == y

    def test_same_seed_is_bitwise_identical(self):
        a = make_synthetic_stream(small_cfg())
        b = make_synthetic_stream(small_cfg())
        for ta, tb in zip(a, b):
            assert np.array_equal(ta.train_x, tb.train_x)
            assert np.array_equal(ta.test_y, tb.test_y)

    def test_ordered_class_split(self):
        tasks = make_synthetic_stream(
            StreamConfig(num_tasks=5, classes_per_task=2, train_per_class=5,
                         test_per_class=2, input_dim=3, seed=0)
        )
        assert [t.class_ids for t in tasks] == [
            (0, 1), (2, 3), (4, 5), (6, 7), (8, 9)
        ]

    def test_disjoint_and_exhaustive(self):
        tasks = make_synthetic_stream(small_cfg())
        seen = set()
        for task in tasks:
            assert not (seen & set(task.class_ids))
            seen |= set(task.class_ids)
        assert seen == set(range(6))

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            make_synthetic_stream(small_cfg(noise_scale=-1.0))
        with pytest.raises(ConfigError):
            make_synthetic_stream(small_cfg(num_tasks=0))


class TestBatches:
    def test_chunk_sizes(self):
        task = make_synthetic_stream(small_cfg())[0]  # 50 train examples
        sizes = [len(y) for _, y in batches(task, 20, np.random.default_rng(0))]
        assert sizes == [20, 20, 10]

    def test_single_example_batches(self):
        task = make_synthetic_stream(small_cfg())[0]
        sizes = [len(y) for _, y in batches(task, 1, np.random.default_rng(0))]
        assert sizes == [1] * 50

    def test_deterministic_order(self):
        task = make_synthetic_stream(small_cfg())[0]
        a = [y.tolist() for _, y in batches(task, 7, np.random.default_rng(5))]
        b = [y.tolist() for _, y in batches(task, 7, np.random.default_rng(5))]
        assert a == b

    def test_single_epoch_coverage(self):
        task = make_synthetic_stream(small_cfg())[0]
        collected = []
        for x, y in batches(task, 8, np.random.default_rng(2)):
            collected.extend(x[:, 0].tolist())
        assert sorted(collected) == sorted(task.train_x[:, 0].tolist())

    def test_batch_size_must_be_positive(self):
        task = make_synthetic_stream(small_cfg())[0]
        with pytest.raises(ValueError):
            list(batches(task, 0, np.random.default_rng(0)))


def write_idx_pair(tmp_path, images, labels):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    image_path = tmp_path / "images.idx"
    label_path = tmp_path / "labels.idx"
    image_path.write_bytes(
        struct.pack(">IIII", 0x00000803, n, rows, cols) + images.tobytes()
    )
    label_path.write_bytes(struct.pack(">II", 0x00000801, n) + labels.tobytes())
    return image_path, label_path


class TestIdx:
    def test_two_image_fixture(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(2, 28, 28))
        image_path, label_path = write_idx_pair(tmp_path, images, [3, 7])
        x = parse_idx_images(image_path)
        y = parse_idx_labels(label_path)
        assert x.shape == (2, 784)
        assert np.all((x >= 0.0) & (x <= 1.0))
        assert np.allclose(x[0], images[0].reshape(-1) / 255.0)
        assert y.tolist() == [3, 7]

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(struct.pack(">IIII", 0xDEADBEEF, 1, 2, 2) + bytes(4))
        with pytest.raises(FormatError, match="magic"):
            parse_idx_images(path)

    def test_truncated_images(self, tmp_path):
        path = tmp_path / "short.idx"
        path.write_bytes(struct.pack(">IIII", 0x00000803, 2, 2, 2) + bytes(5))
        with pytest.raises(FormatError, match="byte offset"):
            parse_idx_images(path)

    def test_label_count_mismatch(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(4, 2, 2))
        image_path, _ = write_idx_pair(tmp_path, images, [0, 1, 0, 1])
        label_path = tmp_path / "labels2.idx"
        label_path.write_bytes(struct.pack(">II", 0x00000801, 3) + bytes([0, 1, 0]))
        cfg = StreamConfig(source="idx", num_tasks=1, classes_per_task=2,
                           idx_images=str(image_path), idx_labels=str(label_path))
        with pytest.raises(FormatError, match="label count"):
            load_idx_stream(image_path, label_path, cfg)

    def test_stream_assembly(self, tmp_path):
        rng = np.random.default_rng(1)
        images = rng.integers(0, 256, size=(40, 2, 2))
        labels = np.tile([0, 1, 2, 3], 10)
        image_path, label_path = write_idx_pair(tmp_path, images, labels)
        cfg = StreamConfig(source="idx", num_tasks=2, classes_per_task=2, seed=3,
                           idx_images=str(image_path), idx_labels=str(label_path))
        tasks = load_idx_stream(image_path, label_path, cfg)
        assert [t.class_ids for t in tasks] == [(0, 1), (2, 3)]
        for task in tasks:
            # 10 per class, 80/20 split
            assert task.train_size == 16
            assert len(task.test_y) == 4


class TestCsvRoundTrip:
    def test_save_load_identical(self, tmp_path):
        tasks = make_synthetic_stream(small_cfg())
        save_stream_csv(tasks, tmp_path / "stream")
        cfg = small_cfg()
        cfg.source = "csv"
        cfg.csv_path = str(tmp_path / "stream")
        reloaded = load_csv_stream(tmp_path / "stream", cfg)
        assert len(reloaded) == len(tasks)
        for a, b in zip(tasks, reloaded):
            assert a.task_id == b.task_id
            assert a.class_ids == b.class_ids
            assert np.array_equal(a.train_x, b.train_x)
            assert np.array_equal(a.train_y, b.train_y)
            assert np.array_equal(a.test_x, b.test_x)
            assert np.array_equal(a.test_y, b.test_y)

    def test_class_count_mismatch(self, tmp_path):
        tasks = make_synthetic_stream(small_cfg())
        save_stream_csv(tasks, tmp_path / "stream")
        cfg = small_cfg(num_tasks=2)
        with pytest.raises(ConfigError):
            load_csv_stream(tmp_path / "stream", cfg)
