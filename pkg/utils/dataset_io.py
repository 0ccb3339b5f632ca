"""
Dataset readers and writers.

Two formats are supported:

- EVGS binary: little-endian header {magic "EVGS", version u32, count u32,
  flat_length u32} followed by count x flat_length float32 values. Version 2
  appends one uint8 split code per sample (0 none, 1 train, 2 test).
- CSV for tiny fixtures: a header row, optional `sample_id` and `split`
  columns, every other column numeric.
"""
import csv
from dataclasses import dataclass, field
import logging
from pathlib import Path
from typing import Tuple

import numpy as np

from services.errors import DatasetError

logger = logging.getLogger(__name__)

MAGIC = b"EVGS"
HEADER = np.dtype([("magic", "S4"), ("version", "<u4"), ("count", "<u4"), ("flat_length", "<u4")])
SPLITS = ("none", "train", "test")


@dataclass(frozen=True)
class Dataset:
    """Samples as rows of a float64 matrix, with ids and split tags."""
    samples: np.ndarray
    sample_ids: Tuple[int, ...] = field(default=())
    splits: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] == 0:
            raise DatasetError(f"dataset must hold at least one sample row, got shape {samples.shape}")
        object.__setattr__(self, "samples", samples)
        count = samples.shape[0]
        ids = tuple(int(i) for i in self.sample_ids) or tuple(range(count))
        splits = tuple(self.splits) or ("none",) * count
        if len(ids) != count or len(splits) != count:
            raise DatasetError(f"{count} samples but {len(ids)} ids and {len(splits)} split tags")
        if any(i < 0 for i in ids):
            raise DatasetError(f"sample ids must be non-negative, got {min(ids)}")
        if len(set(ids)) != count:
            raise DatasetError("sample ids must be unique")
        unknown = sorted(set(splits) - set(SPLITS))
        if unknown:
            raise DatasetError(f"unknown split tags {unknown}")
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "splits", splits)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def flat_length(self):
        return self.samples.shape[1]

    @property
    def has_splits(self):
        return any(s != "none" for s in self.splits)

    def sample(self, index):
        return self.samples[index]


def load_dataset(path):
    """
    Load a dataset file, dispatching on the extension (.csv, anything else EVGS).

    Raises:
        DatasetError: The file is empty, truncated or has a malformed header.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    dataset = _load_csv(path) if path.suffix.lower() == ".csv" else _load_evgs(path)
    logger.info(f"Loaded {len(dataset)} samples of length {dataset.flat_length} from {path}")
    return dataset


def save_dataset(dataset, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".csv":
        _save_csv(dataset, path)
    else:
        _save_evgs(dataset, path)
    logger.debug(f"Wrote {len(dataset)} samples to {path}")
    return path


def _load_evgs(path):
    raw = path.read_bytes()
    if len(raw) < HEADER.itemsize:
        raise DatasetError(f"{path}: file too short for an EVGS header")
    header = np.frombuffer(raw, dtype=HEADER, count=1)[0]
    if bytes(header["magic"]) != MAGIC:
        raise DatasetError(f"{path}: bad magic {bytes(header['magic'])!r}")
    version, count, flat_length = int(header["version"]), int(header["count"]), int(header["flat_length"])
    if version not in (1, 2):
        raise DatasetError(f"{path}: unsupported EVGS version {version}")
    if count == 0 or flat_length == 0:
        raise DatasetError(f"{path}: empty dataset (count={count}, flat_length={flat_length})")

    body = count * flat_length * 4
    tags = count if version == 2 else 0
    if len(raw) != HEADER.itemsize + body + tags:
        raise DatasetError(f"{path}: expected {HEADER.itemsize + body + tags} bytes, found {len(raw)}")
    samples = np.frombuffer(raw, dtype="<f4", count=count * flat_length, offset=HEADER.itemsize)
    splits = ()
    if version == 2:
        codes = np.frombuffer(raw, dtype=np.uint8, count=count, offset=HEADER.itemsize + body)
        if np.any(codes >= len(SPLITS)):
            raise DatasetError(f"{path}: invalid split code")
        splits = tuple(SPLITS[c] for c in codes)
    return Dataset(samples.reshape(count, flat_length).astype(np.float64), splits=splits)


def _save_evgs(dataset, path):
    version = 2 if dataset.has_splits else 1
    header = np.array([(MAGIC, version, len(dataset), dataset.flat_length)], dtype=HEADER)
    payload = header.tobytes() + dataset.samples.astype("<f4").tobytes()
    if version == 2:
        payload += np.array([SPLITS.index(s) for s in dataset.splits], dtype=np.uint8).tobytes()
    path.write_bytes(payload)


def _load_csv(path):
    with path.open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [(line_no, r) for line_no, r in enumerate(rows[1:], start=2) if any(cell.strip() for cell in r)]
    if not body:
        raise DatasetError(f"{path}: no sample rows")

    id_col = header.index("sample_id") if "sample_id" in header else None
    split_col = header.index("split") if "split" in header else None
    value_cols = [i for i in range(len(header)) if i not in (id_col, split_col)]
    if not value_cols:
        raise DatasetError(f"{path}: header has no value columns")

    samples, ids, splits = [], [], []
    for line_no, row in body:
        if len(row) != len(header):
            raise DatasetError(f"{path}:{line_no}: expected {len(header)} cells, found {len(row)}")
        try:
            samples.append([float(row[i]) for i in value_cols])
            if id_col is not None:
                ids.append(int(row[id_col]))
        except ValueError as e:
            raise DatasetError(f"{path}:{line_no}: {e}") from e
        if split_col is not None:
            splits.append(row[split_col].strip() or "none")
    return Dataset(np.array(samples), sample_ids=tuple(ids), splits=tuple(splits))


def _save_csv(dataset, path):
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["sample_id", "split"] + [f"x{i}" for i in range(dataset.flat_length)])
        for sample_id, split, row in zip(dataset.sample_ids, dataset.splits, dataset.samples):
            writer.writerow([sample_id, split] + [repr(float(v)) for v in row])
