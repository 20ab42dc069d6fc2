import numpy as np
import numpy.testing as npt
import pytest

from podlearn.datasets import (
    Dataset,
    SyntheticSpec,
    class_templates,
    dataset_from_templates,
    generate_synthetic_dataset,
    ingest_cifar_binary,
    load_dataset,
    save_dataset,
)
from podlearn.errors import ContractError, FormatError


def test_spec_validation():
    with pytest.raises(ContractError):
        SyntheticSpec(classes=1)
    with pytest.raises(ContractError):
        SyntheticSpec(noise_sigma=-0.1)
    with pytest.raises(ContractError):
        SyntheticSpec(width=0)


def test_split_is_80_20_per_class():
    ds = generate_synthetic_dataset(SyntheticSpec(classes=3, samples_per_class=50), seed=0)
    for c in range(3):
        assert (ds.train_y == c).sum() == 40
        assert (ds.test_y == c).sum() == 10
    assert ds.train_x.shape == (120, 3, 8, 8)


def test_noiseless_spec_gives_identical_samples():
    spec = SyntheticSpec(classes=2, samples_per_class=10, noise_sigma=0.0)
    ds = generate_synthetic_dataset(spec, seed=0)
    for c in range(2):
        rows = ds.train_x[ds.train_y == c]
        assert (rows == rows[0]).all()
    # and train samples equal test samples exactly
    npt.assert_array_equal(ds.train_x[ds.train_y == 0][0], ds.test_x[ds.test_y == 0][0])


def test_generation_is_seeded():
    spec = SyntheticSpec()
    a = generate_synthetic_dataset(spec, seed=3)
    b = generate_synthetic_dataset(spec, seed=3)
    assert (a.train_x == b.train_x).all()
    c = generate_synthetic_dataset(spec, seed=4)
    assert not np.allclose(a.train_x, c.train_x)
    # templates depend on the pattern seed, not the noise seed
    t1 = class_templates(spec)
    t2 = class_templates(SyntheticSpec(pattern_seed=999))
    assert not np.allclose(t1, t2)


def test_templates_shape_guard():
    spec = SyntheticSpec(classes=4)
    with pytest.raises(ContractError):
        dataset_from_templates(np.zeros((3, 3, 8, 8)), spec, seed=0)


def test_dataset_roundtrip_npz(tmp_path):
    ds = generate_synthetic_dataset(SyntheticSpec(classes=2, samples_per_class=10), seed=1)
    path = str(tmp_path / "data.npz")
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert (loaded.train_x == ds.train_x).all()
    assert (loaded.test_y == ds.test_y).all()


# -- CIFAR binary ingestion ---------------------------------------------------------


def _record(fine_label, pixel=0, coarse=0):
    return bytes([coarse, fine_label]) + bytes([pixel] * 3072)


def test_cifar_empty_file_rejected(tmp_path):
    path = tmp_path / "train.bin"
    path.write_bytes(b"")
    with pytest.raises(FormatError):
        ingest_cifar_binary(str(path))


def test_cifar_bad_record_size_rejected(tmp_path):
    path = tmp_path / "train.bin"
    path.write_bytes(b"\x00" * 100)
    with pytest.raises(FormatError):
        ingest_cifar_binary(str(path))


def test_cifar_label_out_of_range_rejected(tmp_path):
    path = tmp_path / "train.bin"
    path.write_bytes(_record(200))
    with pytest.raises(FormatError):
        ingest_cifar_binary(str(path))


def test_cifar_single_record_label_seven(tmp_path):
    train = tmp_path / "train.bin"
    test = tmp_path / "test.bin"
    train.write_bytes(_record(7, pixel=128))
    test.write_bytes(_record(7, pixel=128))
    ds = ingest_cifar_binary(str(train), str(test))
    assert ds.train_y.tolist() == [7]
    assert ds.train_x.shape == (1, 3, 32, 32)


def test_cifar_full_intensity_scales_to_one(tmp_path):
    # two records so the split keeps one for test; std=0 falls back to 1,
    # so standardized values are (1.0 - 1.0) = 0 but the scaling path is
    # observable through the mean
    train = tmp_path / "train.bin"
    train.write_bytes(_record(1, pixel=255) + _record(2, pixel=0))
    ds = ingest_cifar_binary(str(train))
    # records were [1.0, 0.0] before standardization; mean 0.5, std 0.5
    values = np.unique(np.concatenate([ds.train_x.ravel(), ds.test_x.ravel()]))
    npt.assert_allclose(sorted(values), [-1.0, 1.0], atol=1e-12)


def test_cifar_directory_layout_and_split(tmp_path):
    blob = b"".join(_record(c % 3, pixel=c) for c in range(30))
    (tmp_path / "train.bin").write_bytes(blob)
    ds = ingest_cifar_binary(str(tmp_path))  # no test.bin: 80/20 per class
    for c in range(3):
        assert (ds.train_y == c).sum() == 8
        assert (ds.test_y == c).sum() == 2


def test_cifar_class_subset(tmp_path):
    blob = b"".join(_record(c % 5, pixel=(10 * c) % 256) for c in range(50))
    (tmp_path / "train.bin").write_bytes(blob)
    ds = ingest_cifar_binary(str(tmp_path), classes=2)
    assert set(ds.train_y.tolist()) == {0, 1}
    assert set(ds.test_y.tolist()) == {0, 1}


def test_cifar_standardization_uses_train_stats(tmp_path):
    rng = np.random.default_rng(0)
    recs = []
    for i in range(20):
        px = bytes(rng.integers(0, 256, size=3072, dtype=np.uint8).tolist())
        recs.append(bytes([0, i % 2]) + px)
    (tmp_path / "train.bin").write_bytes(b"".join(recs))
    ds = ingest_cifar_binary(str(tmp_path))
    means = ds.train_x.mean(axis=(0, 2, 3))
    stds = ds.train_x.std(axis=(0, 2, 3))
    npt.assert_allclose(means, 0.0, atol=1e-12)
    npt.assert_allclose(stds, 1.0, atol=1e-12)
    # test split standardized with the same (train) statistics: nonzero mean
    assert abs(ds.test_x.mean()) > 0


def test_dataset_helpers():
    ds = Dataset(
        np.zeros((4, 1, 2, 2)), np.array([0, 0, 1, 1]),
        np.zeros((2, 1, 2, 2)), np.array([0, 1]),
    )
    assert ds.class_count == 2
    assert ds.input_shape == (1, 2, 2)
    npt.assert_array_equal(ds.train_indices_of(1), [2, 3])
