"""Task-sequence construction for class-incremental training.

A stream is an ordered list of tasks with disjoint class sets over one global
label space: the model always classifies over all classes and never sees a
task id at test time. Sources: a seeded Gaussian-blob generator, IDX image/
label file pairs, and CSV directories written by ``save_stream_csv``.
"""

import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

STREAM_SOURCES = ("synthetic", "idx", "csv")


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    class_ids: tuple
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray

    def __post_init__(self):
        seen = set(np.unique(self.train_y)) | set(np.unique(self.test_y))
        if not seen <= set(self.class_ids):
            raise ConfigError(
                f"task {self.task_id} holds labels {sorted(seen)} outside its "
                f"class set {sorted(self.class_ids)}"
            )

    @property
    def train_size(self):
        return len(self.train_y)


@dataclass
class StreamConfig:
    source: str = "synthetic"
    num_tasks: int = 5
    classes_per_task: int = 2
    train_per_class: int = 500
    test_per_class: int = 100
    input_dim: int = 32
    noise_scale: float = 1.0
    separation: float = 3.0
    seed: int = 0
    idx_images: str = ""
    idx_labels: str = ""
    csv_path: str = ""

    @property
    def num_classes(self):
        return self.num_tasks * self.classes_per_task

    def validate(self):
        if self.source not in STREAM_SOURCES:
            raise ConfigError(f"unknown stream source {self.source!r}")
        if self.num_tasks < 1 or self.classes_per_task < 1:
            raise ConfigError("num_tasks and classes_per_task must be positive")
        if self.source == "synthetic":
            if self.train_per_class < 1 or self.test_per_class < 1:
                raise ConfigError("train/test per-class counts must be positive")
            if self.input_dim < 1:
                raise ConfigError("input_dim must be positive")
            if self.noise_scale < 0:
                raise ConfigError("noise_scale must be nonnegative")
        if self.source == "idx" and not (self.idx_images and self.idx_labels):
            raise ConfigError("idx source needs --idx-images and --idx-labels")
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("csv source needs --csv-path")

    def to_dict(self):
        return asdict(self)


def make_stream(cfg):
    cfg.validate()
    if cfg.source == "synthetic":
        return make_synthetic_stream(cfg)
    if cfg.source == "idx":
        return load_idx_stream(cfg.idx_images, cfg.idx_labels, cfg)
    return load_csv_stream(cfg.csv_path, cfg)


def make_synthetic_stream(cfg):
    """Gaussian blobs: one seeded mean per class, isotropic noise around it.

    Class means are standard-normal draws scaled by separation/sqrt(input_dim),
    so `separation` is the typical inter-class distance in noise units and the
    benchmark difficulty does not wash out with dimension.
    """
    cfg.validate()
    if cfg.source != "synthetic":
        raise ConfigError(f"synthetic stream requested from source {cfg.source!r}")
    rng = np.random.default_rng(cfg.seed)
    num_classes = cfg.num_classes
    means = (cfg.separation / np.sqrt(cfg.input_dim)) * rng.standard_normal(
        (num_classes, cfg.input_dim)
    )

    per_class = []
    for c in range(num_classes):
        train = means[c] + cfg.noise_scale * rng.standard_normal(
            (cfg.train_per_class, cfg.input_dim)
        )
        test = means[c] + cfg.noise_scale * rng.standard_normal(
            (cfg.test_per_class, cfg.input_dim)
        )
        per_class.append((train, test))

    return _assemble_tasks(per_class, cfg)


def _assemble_tasks(per_class, cfg):
    """Group consecutive classes into tasks; labels are global class indices."""
    num_classes = len(per_class)
    if num_classes != cfg.num_tasks * cfg.classes_per_task:
        raise ConfigError(
            f"{num_classes} classes cannot be split into {cfg.num_tasks} tasks "
            f"of {cfg.classes_per_task}"
        )
    tasks = []
    for t in range(cfg.num_tasks):
        class_ids = tuple(
            range(t * cfg.classes_per_task, (t + 1) * cfg.classes_per_task)
        )
        train_x = np.concatenate([per_class[c][0] for c in class_ids], axis=0)
        train_y = np.concatenate(
            [np.full(len(per_class[c][0]), c, dtype=np.int64) for c in class_ids]
        )
        test_x = np.concatenate([per_class[c][1] for c in class_ids], axis=0)
        test_y = np.concatenate(
            [np.full(len(per_class[c][1]), c, dtype=np.int64) for c in class_ids]
        )
        tasks.append(
            TaskSpec(
                task_id=t + 1,
                class_ids=class_ids,
                train_x=train_x,
                train_y=train_y,
                test_x=test_x,
                test_y=test_y,
            )
        )
    return tasks


def batches(task, batch_size, rng):
    """One seeded shuffle of the train split, then contiguous chunks.

    The final partial chunk is kept, so every example appears exactly once.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be positive, got {batch_size}")
    order = rng.permutation(task.train_size)
    for start in range(0, task.train_size, batch_size):
        idx = order[start : start + batch_size]
        yield task.train_x[idx], task.train_y[idx]


def parse_idx_images(path):
    """Parse an IDX image file into a (count, rows*cols) float matrix in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise FormatError(f"{path}: truncated IDX image header", offset=len(data))
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(
            f"{path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}",
            offset=0,
        )
    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for {count} images of "
            f"{rows}x{cols}, got {len(data)}",
            offset=min(len(data), expected),
        )
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0


def parse_idx_labels(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise FormatError(f"{path}: truncated IDX label header", offset=len(data))
    magic, count = struct.unpack(">II", data[:8])
    if magic != IDX_LABEL_MAGIC:
        raise FormatError(
            f"{path}: bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}",
            offset=0,
        )
    expected = 8 + count
    if len(data) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for {count} labels, got {len(data)}",
            offset=min(len(data), expected),
        )
    return np.frombuffer(data, dtype=np.uint8, offset=8).astype(np.int64)


def load_idx_stream(images_path, labels_path, cfg):
    """Load an IDX image/label pair and split classes into tasks by label order."""
    images = parse_idx_images(images_path)
    labels = parse_idx_labels(labels_path)
    if len(images) != len(labels):
        raise FormatError(
            f"label count {len(labels)} does not match image count {len(images)}",
            offset=0,
        )
    return _split_labeled_pool(images, labels, cfg)


def _split_labeled_pool(inputs, labels, cfg):
    """Per-class deterministic 80/20 train/test split, then task assembly."""
    classes = np.unique(labels)
    if len(classes) != cfg.num_tasks * cfg.classes_per_task:
        raise ConfigError(
            f"found {len(classes)} classes, need exactly "
            f"{cfg.num_tasks * cfg.classes_per_task}"
        )
    if not np.array_equal(classes, np.arange(len(classes))):
        raise ConfigError(f"class labels must be 0..{len(classes) - 1}, got {classes}")
    rng = np.random.default_rng(cfg.seed)
    per_class = []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        order = rng.permutation(len(idx))
        n_train = int(round(0.8 * len(idx)))
        train_idx = idx[order[:n_train]]
        test_idx = idx[order[n_train:]]
        per_class.append((inputs[train_idx], inputs[test_idx]))
    return _assemble_tasks(per_class, cfg)


def save_stream_csv(tasks, directory):
    """Write a stream as train.csv/test.csv (header label,f0,f1,...).

    Floats are written with repr, so reloading reproduces the arrays exactly.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dim = tasks[0].train_x.shape[1]
    header = "label," + ",".join(f"f{i}" for i in range(dim))
    for name, xs, ys in (
        ("train.csv", [t.train_x for t in tasks], [t.train_y for t in tasks]),
        ("test.csv", [t.test_x for t in tasks], [t.test_y for t in tasks]),
    ):
        with open(directory / name, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for x_block, y_block in zip(xs, ys):
                for row, label in zip(x_block, y_block):
                    fh.write(
                        str(int(label))
                        + ","
                        + ",".join(repr(float(v)) for v in row)
                        + "\n"
                    )


def _read_examples_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        fields = header.split(",")
        if not fields or fields[0] != "label":
            raise FormatError(f"{path}: header must start with 'label', got {header!r}")
        dim = len(fields) - 1
        xs, ys = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != dim + 1:
                raise FormatError(
                    f"{path}:{lineno}: expected {dim + 1} fields, got {len(parts)}"
                )
            ys.append(int(parts[0]))
            xs.append([float(v) for v in parts[1:]])
    if not ys:
        raise FormatError(f"{path}: no data rows")
    return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.int64)


def load_csv_stream(directory, cfg):
    """Load train.csv/test.csv from a directory and assemble tasks.

    Row order within each class is preserved, so a stream saved with
    ``save_stream_csv`` reloads into identical TaskSpecs.
    """
    directory = Path(directory)
    train_x, train_y = _read_examples_csv(directory / "train.csv")
    test_x, test_y = _read_examples_csv(directory / "test.csv")
    classes = np.unique(np.concatenate([train_y, test_y]))
    if len(classes) != cfg.num_tasks * cfg.classes_per_task:
        raise ConfigError(
            f"found {len(classes)} classes, need exactly "
            f"{cfg.num_tasks * cfg.classes_per_task}"
        )
    if not np.array_equal(classes, np.arange(len(classes))):
        raise ConfigError(f"class labels must be 0..{len(classes) - 1}, got {classes}")
    per_class = []
    for c in classes:
        per_class.append(
            (train_x[np.flatnonzero(train_y == c)], test_x[np.flatnonzero(test_y == c)])
        )
    return _assemble_tasks(per_class, cfg)
