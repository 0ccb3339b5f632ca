import numpy as np
import pytest

from services.errors import DatasetError
from utils.dataset_io import HEADER, MAGIC, Dataset, load_dataset, save_dataset


def test_evgs_without_splits(tmp_path):
    samples = np.array([[0.5, -0.25, 1.0], [0.0, 2.0, -1.5]])
    path = save_dataset(Dataset(samples), tmp_path / "plain.evgs")
    header = np.frombuffer(path.read_bytes(), dtype=HEADER, count=1)[0]
    assert int(header["version"]) == 1
    loaded = load_dataset(path)
    np.testing.assert_array_equal(loaded.samples, samples)
    assert loaded.sample_ids == (0, 1)
    assert not loaded.has_splits


def test_evgs_with_splits(tmp_path):
    dataset = Dataset(np.zeros((3, 2)), splits=("train", "test", "none"))
    path = save_dataset(dataset, tmp_path / "split.evgs")
    assert len(path.read_bytes()) == HEADER.itemsize + 3 * 2 * 4 + 3
    assert load_dataset(path).splits == ("train", "test", "none")


def test_shipped_csv_samples(repo_root):
    dataset = load_dataset(repo_root / "fixtures" / "affine_dim4_samples.csv")
    assert len(dataset) == 3
    assert dataset.flat_length == 8
    assert dataset.has_splits


def test_csv_round_trip_keeps_ids(tmp_path):
    dataset = Dataset(np.array([[0.1, 0.2], [0.3, 0.4]]), sample_ids=(7, 3), splits=("test", "train"))
    loaded = load_dataset(save_dataset(dataset, tmp_path / "d.csv"))
    assert loaded.sample_ids == (7, 3)
    assert loaded.splits == ("test", "train")
    np.testing.assert_array_equal(loaded.samples, dataset.samples)


def test_csv_without_id_column(tmp_path):
    path = tmp_path / "bare.csv"
    path.write_text("a,b\n1,2\n3,4\n\n")
    loaded = load_dataset(path)
    assert loaded.sample_ids == (0, 1)
    np.testing.assert_array_equal(loaded.samples, [[1.0, 2.0], [3.0, 4.0]])


@pytest.mark.parametrize("content", [
    b"",
    b"NOPE" + bytes(12),
    np.array([(MAGIC, 1, 0, 4)], dtype=HEADER).tobytes(),
    np.array([(MAGIC, 1, 2, 4)], dtype=HEADER).tobytes() + bytes(8),
    np.array([(MAGIC, 3, 1, 1)], dtype=HEADER).tobytes() + bytes(4),
])
def test_malformed_evgs_is_rejected(tmp_path, content):
    path = tmp_path / "bad.evgs"
    path.write_bytes(content)
    with pytest.raises(DatasetError):
        load_dataset(path)


def test_bad_csv_is_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x0,x1\n1,oops\n")
    with pytest.raises(DatasetError):
        load_dataset(path)
    path.write_text("x0,x1\n")
    with pytest.raises(DatasetError):
        load_dataset(path)
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "missing.csv")


def test_dataset_invariants():
    with pytest.raises(DatasetError):
        Dataset(np.zeros((0, 3)))
    with pytest.raises(DatasetError):
        Dataset(np.zeros((2, 3)), sample_ids=(1, 1))
    with pytest.raises(DatasetError):
        Dataset(np.zeros((1, 3)), splits=("validation",))
    with pytest.raises(DatasetError, match="non-negative"):
        Dataset(np.zeros((2, 3)), sample_ids=(-1, 0))


def test_negative_csv_ids_are_rejected(tmp_path):
    path = tmp_path / "neg.csv"
    path.write_text("sample_id,x0\n-1,0.5\n0,0.25\n")
    with pytest.raises(DatasetError, match="non-negative"):
        load_dataset(path)


def test_csv_errors_report_the_file_line_after_blank_rows(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text("x0,x1\n1,2\n\n\n3,oops\n")
    with pytest.raises(DatasetError, match=r"gap\.csv:5:"):
        load_dataset(path)
