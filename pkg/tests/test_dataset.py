"""IDX files, binarization, subsets, and the synthetic digit generator."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from topolayer import (
    Dataset,
    IdxFormatError,
    binarize,
    binarize_dataset,
    build_rips,
    compute_persistence,
    load_idx,
    pairwise_distances,
    rasterize,
    subset,
    synthetic_digits,
    write_idx,
)
from topolayer.dataset import POINT_CAP


def _toy_dataset(n: int = 7, seed: int = 3) -> Dataset:
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(n, 28, 28)).astype(np.float64) / 255.0
    labels = rng.integers(0, 10, size=n).astype(np.int64)
    return Dataset(pixels, labels, "toy")


def test_dataset_validation() -> None:
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 28)), np.zeros(3, dtype=np.int64))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 28, 28)), np.zeros(4, dtype=np.int64))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 28, 28)), np.array([0, 5, 10]))
    with pytest.raises(ValueError):
        Dataset(np.full((3, 28, 28), 2.0), np.zeros(3, dtype=np.int64))


def test_dataset_image_access() -> None:
    ds = _toy_dataset()
    assert len(ds) == 7
    assert ds.frame.width == 28 and ds.frame.height == 28
    np.testing.assert_array_equal(ds.image(2).pixels, ds.pixels[2])


@pytest.mark.parametrize("gz", [False, True], ids=["plain", "gzip"])
def test_idx_round_trip(tmp_path: Path, gz: bool) -> None:
    ds = _toy_dataset()
    suffix = ".gz" if gz else ""
    img_path = tmp_path / f"train-images-idx3-ubyte{suffix}"
    lbl_path = tmp_path / f"train-labels-idx1-ubyte{suffix}"
    write_idx(ds, img_path, lbl_path)
    back = load_idx(img_path, lbl_path)
    assert len(back) == len(ds)
    np.testing.assert_array_equal(back.labels, ds.labels)
    # pixels survive up to the uint8 quantization grid
    np.testing.assert_allclose(back.pixels, ds.pixels, atol=0.5 / 255.0 + 1e-12)

    # a second write of the loaded data is byte-identical
    img2 = tmp_path / f"again-images-idx3-ubyte{suffix}"
    lbl2 = tmp_path / f"again-labels-idx1-ubyte{suffix}"
    write_idx(back, img2, lbl2)
    if not gz:
        assert img2.read_bytes() == img_path.read_bytes()
        assert lbl2.read_bytes() == lbl_path.read_bytes()
    else:
        assert load_idx(img2, lbl2).pixels.tobytes() == back.pixels.tobytes()


def test_idx_wrong_magic_names_file_and_offset(tmp_path: Path) -> None:
    ds = _toy_dataset()
    img_path = tmp_path / "images-idx3-ubyte"
    lbl_path = tmp_path / "labels-idx1-ubyte"
    write_idx(ds, img_path, lbl_path)
    with pytest.raises(IdxFormatError, match="offset 0"):
        load_idx(lbl_path, img_path)  # swapped on purpose


def test_idx_truncation_detected(tmp_path: Path) -> None:
    ds = _toy_dataset()
    img_path = tmp_path / "images-idx3-ubyte"
    lbl_path = tmp_path / "labels-idx1-ubyte"
    write_idx(ds, img_path, lbl_path)
    data = img_path.read_bytes()
    img_path.write_bytes(data[: len(data) - 100])
    with pytest.raises(IdxFormatError, match="truncated"):
        load_idx(img_path, lbl_path)


def test_idx_trailing_data_detected(tmp_path: Path) -> None:
    ds = _toy_dataset()
    img_path = tmp_path / "images-idx3-ubyte"
    lbl_path = tmp_path / "labels-idx1-ubyte"
    write_idx(ds, img_path, lbl_path)
    img_path.write_bytes(img_path.read_bytes() + b"\x00")
    with pytest.raises(IdxFormatError, match="trailing"):
        load_idx(img_path, lbl_path)


def test_idx_count_mismatch_detected(tmp_path: Path) -> None:
    ds = _toy_dataset(n=7)
    other = _toy_dataset(n=5)
    img_path = tmp_path / "images-idx3-ubyte"
    lbl_path = tmp_path / "labels-idx1-ubyte"
    lbl5_path = tmp_path / "labels5-idx1-ubyte"
    write_idx(ds, img_path, lbl_path)
    write_idx(other, tmp_path / "im5-idx3-ubyte", lbl5_path)
    with pytest.raises(IdxFormatError, match="count mismatch"):
        load_idx(img_path, lbl5_path)


def test_binarize_uses_row_major_columns_as_x() -> None:
    pixels = np.zeros((28, 28))
    pixels[3, 7] = 1.0  # row 3 (y), column 7 (x)
    pixels[9, 2] = 0.8
    ds = Dataset(pixels[None], np.zeros(1, dtype=np.int64))
    cloud = binarize(ds.image(0), 0.5)
    np.testing.assert_array_equal(cloud.coords, [[7.0, 3.0], [2.0, 9.0]])


def test_binarize_threshold_is_inclusive() -> None:
    pixels = np.zeros((28, 28))
    pixels[0, 0] = 0.5
    pixels[0, 1] = 0.499
    ds = Dataset(pixels[None], np.zeros(1, dtype=np.int64))
    cloud = binarize(ds.image(0), 0.5)
    assert len(cloud) == 1
    np.testing.assert_array_equal(cloud.coords, [[0.0, 0.0]])


def test_binarize_caps_at_brightest_points() -> None:
    rng = np.random.default_rng(107)
    pixels = np.full((28, 28), 0.6)
    bright = rng.permutation(28 * 28)[:50]
    flat = pixels.reshape(-1)
    flat[bright] = 1.0
    ds = Dataset(pixels[None], np.zeros(1, dtype=np.int64))
    cloud = binarize(ds.image(0), 0.5)
    assert len(cloud) == POINT_CAP

    # all 50 brightest pixels survive; the rest fill in row-major order
    kept = {(float(x), float(y)) for x, y in cloud.coords}
    for f in bright:
        r, c = divmod(int(f), 28)
        assert (float(c), float(r)) in kept
    order = cloud.coords[:, 1] * 28 + cloud.coords[:, 0]
    assert np.all(np.diff(order) > 0)


def test_binarize_dataset_matches_per_image_path() -> None:
    rng = np.random.default_rng(109)
    pixels = rng.random((5, 28, 28))
    pixels[4] = 0.9  # 784 lit pixels: forces the cap branch
    ds = Dataset(pixels, np.arange(5, dtype=np.int64) % 10, "mixed")
    out = binarize_dataset(ds, 0.5)
    for i in range(5):
        expected = rasterize(binarize(ds.image(i), 0.5))
        np.testing.assert_array_equal(out.pixels[i], expected.pixels)
    np.testing.assert_array_equal(out.labels, ds.labels)


def test_subset_is_deterministic_sampling_without_replacement() -> None:
    ds = synthetic_digits(60, seed=42)
    a = subset(ds, 20, seed=7)
    b = subset(ds, 20, seed=7)
    np.testing.assert_array_equal(a.pixels, b.pixels)
    np.testing.assert_array_equal(a.labels, b.labels)
    c = subset(ds, 20, seed=8)
    assert not np.array_equal(a.labels, c.labels) or not np.array_equal(
        a.pixels, c.pixels
    )
    with pytest.raises(ValueError):
        subset(ds, 61, seed=0)

    # every sampled image exists in the source exactly once
    src = {ds.pixels[i].tobytes() for i in range(len(ds))}
    picked = [a.pixels[i].tobytes() for i in range(len(a))]
    assert len(set(picked)) == len(picked)
    assert all(p in src for p in picked)


def test_synthetic_digits_deterministic_and_balanced() -> None:
    a = synthetic_digits(100, seed=5)
    b = synthetic_digits(100, seed=5)
    np.testing.assert_array_equal(a.pixels, b.pixels)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.pixels.shape == (100, 28, 28)
    assert a.pixels.min() >= 0.0 and a.pixels.max() <= 1.0
    counts = np.bincount(a.labels, minlength=10)
    np.testing.assert_array_equal(counts, 10)
    assert not np.array_equal(a.pixels, synthetic_digits(100, seed=6).pixels)


def _prominent_loops(img, threshold: float = 2.0) -> int:
    bc = compute_persistence(build_rips(pairwise_distances(binarize(img, 0.5))))
    h1 = bc.select(1)
    return int(np.sum(bc.deaths[h1] - bc.births[h1] > threshold))


def test_eights_have_more_loops_than_ones() -> None:
    pool = synthetic_digits(600, seed=1000001)
    eights = np.flatnonzero(pool.labels == 8)[:50]
    ones = np.flatnonzero(pool.labels == 1)[:50]
    eight_counts = [_prominent_loops(pool.image(int(i))) for i in eights]
    one_counts = [_prominent_loops(pool.image(int(i))) for i in ones]
    # the double loop of an eight survives rasterization almost always; a
    # one never produces a prominent cycle
    assert np.mean(eight_counts) > 1.5
    assert np.mean(one_counts) < 0.5
    assert sum(c >= 2 for c in eight_counts) >= 45
    assert sum(c == 0 for c in one_counts) >= 45
