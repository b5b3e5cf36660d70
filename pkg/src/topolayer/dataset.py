"""MNIST-family datasets: IDX loading/writing, binarization, subsetting.

IDX is the big-endian binary container: magic 0x00000803 for image files
(dims: count, rows, cols) and 0x00000801 for label files (dims: count),
with uint8 payloads. Files whose name ends in a gzip suffix are
decompressed transparently. Pixels normalize to [0, 1] by dividing by 255.

``synthetic_digits`` renders deterministic digit-shaped images (per-class
stroke skeletons, seeded affine jitter, soft stroke thickness) so the full
experiment pipeline can run without downloaded data.
"""
from __future__ import annotations

import gzip
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .geometry import Frame, Image, PointCloud, rasterize

log = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
POINT_CAP = 400
GZIP_SUFFIXES = (".gz", ".gzip")


class IdxFormatError(ValueError):
    """Malformed IDX container; the message names the file and byte offset."""


@dataclass(frozen=True)
class Dataset:
    """Image stack with labels; pixels is (N, H, W) float64 in [0, 1]."""

    pixels: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float64)
        lb = np.asarray(self.labels, dtype=np.int64)
        if px.ndim != 3:
            raise ValueError(f"pixels must be (N, H, W), got shape {px.shape}")
        if len(px) != len(lb):
            raise ValueError(f"{len(px)} images but {len(lb)} labels")
        if lb.size and (lb.min() < 0 or lb.max() > 9):
            raise ValueError("labels must lie in 0..9")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "labels", lb)

    def __len__(self) -> int:
        return len(self.pixels)

    @property
    def frame(self) -> Frame:
        return Frame(self.pixels.shape[2], self.pixels.shape[1])

    def image(self, i: int) -> Image:
        return Image(self.pixels[i], self.frame)

    @cached_property
    def images(self) -> tuple[Image, ...]:
        return tuple(self.image(i) for i in range(len(self)))

    def with_pixels(self, pixels: np.ndarray, name: str | None = None) -> "Dataset":
        return Dataset(pixels, self.labels, name or self.name)


def _open_maybe_gzip(path: Path):
    if path.suffix.lower() in GZIP_SUFFIXES:
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, n: int, path: Path, offset: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise IdxFormatError(
            f"truncated IDX file {path}: wanted {n} bytes at offset {offset}, got {len(data)}"
        )
    return data


def _read_idx_array(path: Path, expect_magic: int, expect_ndim: int) -> np.ndarray:
    with _open_maybe_gzip(path) as fh:
        magic = int.from_bytes(_read_exact(fh, 4, path, 0), "big")
        if magic != expect_magic:
            raise IdxFormatError(
                f"wrong IDX magic in {path} at offset 0: got {magic:#010x}, "
                f"expected {expect_magic:#010x}"
            )
        dims = []
        for k in range(expect_ndim):
            dims.append(int.from_bytes(_read_exact(fh, 4, path, 4 + 4 * k), "big"))
        count = int(np.prod(dims)) if dims else 0
        payload = _read_exact(fh, count, path, 4 + 4 * expect_ndim)
        extra = fh.read(1)
        if extra:
            raise IdxFormatError(
                f"trailing data in IDX file {path} at offset {4 + 4 * expect_ndim + count}"
            )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path: str | Path, labels_path: str | Path, name: str | None = None) -> Dataset:
    """Load an IDX image/label file pair into a normalized Dataset."""
    images_path = Path(images_path)
    labels_path = Path(labels_path)
    raw = _read_idx_array(images_path, IMAGE_MAGIC, 3)
    labels = _read_idx_array(labels_path, LABEL_MAGIC, 1)
    if len(raw) != len(labels):
        raise IdxFormatError(
            f"count mismatch: {images_path} has {len(raw)} images but "
            f"{labels_path} has {len(labels)} labels"
        )
    return Dataset(raw.astype(np.float64) / 255.0, labels.astype(np.int64),
                   name or images_path.stem)


def write_idx(ds: Dataset, images_path: str | Path, labels_path: str | Path) -> None:
    """Write a Dataset back to an IDX pair (quantizing pixels to uint8)."""
    images_path = Path(images_path)
    labels_path = Path(labels_path)
    n, h, w = ds.pixels.shape
    img_bytes = np.floor(ds.pixels * 255.0 + 0.5).astype(np.uint8)

    def _writer(path: Path):
        if path.suffix.lower() in GZIP_SUFFIXES:
            return gzip.open(path, "wb")
        return open(path, "wb")

    with _writer(images_path) as fh:
        fh.write(IMAGE_MAGIC.to_bytes(4, "big"))
        fh.write(n.to_bytes(4, "big"))
        fh.write(h.to_bytes(4, "big"))
        fh.write(w.to_bytes(4, "big"))
        fh.write(img_bytes.tobytes())
    with _writer(labels_path) as fh:
        fh.write(LABEL_MAGIC.to_bytes(4, "big"))
        fh.write(n.to_bytes(4, "big"))
        fh.write(ds.labels.astype(np.uint8).tobytes())


def binarize(img: Image, threshold: float = 0.5) -> PointCloud:
    """One point per pixel >= threshold, scanned in row-major order.

    If more than POINT_CAP pixels qualify, the brightest POINT_CAP are kept
    (stable tie-break), preserving row-major order among the survivors.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    px = img.pixels
    rows, cols = np.nonzero(px >= threshold)
    if len(rows) > POINT_CAP:
        intensities = px[rows, cols]
        bright = np.argsort(-intensities, kind="stable")[:POINT_CAP]
        bright.sort()
        rows, cols = rows[bright], cols[bright]
    coords = np.stack((cols, rows), axis=1).astype(np.float64)
    return PointCloud(coords.reshape(-1, 2), img.frame)


def binarize_dataset(ds: Dataset, threshold: float = 0.5) -> Dataset:
    """Binarize every image through the same point-cloud path as topologization.

    Each image goes binarize -> rasterize, so the result is exactly the
    pixel set a zero-movement topologization would produce (including the
    brightest-POINT_CAP rule). Keeps training inputs comparable across
    preprocessed and unpreprocessed runs.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    lit = ds.pixels >= threshold
    out = lit.astype(np.float64)
    # images over the point cap need the brightest-POINT_CAP selection
    for i in np.flatnonzero(lit.sum(axis=(1, 2)) > POINT_CAP):
        cloud = binarize(ds.image(i), threshold)
        out[i] = rasterize(cloud).pixels
    return Dataset(out, ds.labels, f"{ds.name}-bin")


def subset(ds: Dataset, n: int, seed: int) -> Dataset:
    """First n under a seeded shuffle of the whole dataset."""
    if n > len(ds):
        raise ValueError(f"requested subset of {n} from a dataset of {len(ds)}")
    perm = np.random.default_rng(seed).permutation(len(ds))[:n]
    out = Dataset(ds.pixels[perm], ds.labels[perm], f"{ds.name}-{n}")
    counts = np.bincount(out.labels, minlength=10)
    log.info("subset %s label distribution: %s", out.name, counts.tolist())
    return out


# --- synthetic digit rendering ------------------------------------------------

# per-class stroke skeletons in a unit box (x right, y down)
def _ellipse(cx: float, cy: float, rx: float, ry: float, k: int = 10) -> list[tuple[float, float]]:
    ang = np.linspace(0.0, 2.0 * np.pi, k + 1)
    return [(cx + rx * float(np.sin(a)), cy - ry * float(np.cos(a))) for a in ang]


_SKELETONS: dict[int, list[list[tuple[float, float]]]] = {
    0: [_ellipse(0.5, 0.5, 0.26, 0.38)],
    1: [[(0.38, 0.28), (0.56, 0.12), (0.56, 0.88)]],
    2: [[(0.28, 0.30), (0.36, 0.14), (0.62, 0.12), (0.72, 0.30),
         (0.58, 0.52), (0.32, 0.72), (0.26, 0.88), (0.76, 0.88)]],
    3: [[(0.28, 0.18), (0.52, 0.12), (0.70, 0.27), (0.48, 0.46),
         (0.70, 0.66), (0.50, 0.87), (0.27, 0.80)]],
    4: [[(0.58, 0.12), (0.24, 0.60), (0.78, 0.60)], [(0.62, 0.34), (0.62, 0.88)]],
    5: [[(0.72, 0.12), (0.30, 0.12), (0.28, 0.46), (0.56, 0.42),
         (0.72, 0.58), (0.66, 0.78), (0.44, 0.88), (0.28, 0.80)]],
    6: [[(0.64, 0.12), (0.42, 0.30), (0.30, 0.55), (0.33, 0.78),
         (0.52, 0.88), (0.68, 0.74), (0.60, 0.55), (0.40, 0.54), (0.31, 0.66)]],
    7: [[(0.25, 0.14), (0.76, 0.12), (0.45, 0.88)]],
    8: [_ellipse(0.5, 0.30, 0.20, 0.18, 8), _ellipse(0.5, 0.68, 0.24, 0.20, 8)],
    9: [_ellipse(0.52, 0.32, 0.20, 0.19, 8), [(0.71, 0.36), (0.66, 0.62), (0.54, 0.88)]],
}


def synthetic_digits(n: int, seed: int, name: str = "synthetic") -> Dataset:
    """Render n digit-shaped 28x28 images with balanced, shuffled labels.

    Deterministic in (n, seed). Strokes get a seeded affine jitter
    (rotation, anisotropic scale, translation) plus per-vertex noise, then a
    soft-thickness rasterization; a typical digit lights ~90-160 pixels at
    the 0.5 threshold.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % 10
    rng.shuffle(labels)

    yy, xx = np.mgrid[0:28, 0:28]
    grid = np.stack((xx.ravel(), yy.ravel()), axis=1).astype(np.float64)  # (784, 2)
    pixels = np.empty((n, 28, 28), dtype=np.float64)

    for cls in range(10):
        idx = np.flatnonzero(labels == cls)
        s = len(idx)
        if s == 0:
            continue
        theta = rng.uniform(-0.16, 0.16, s)
        scale = rng.uniform(0.82, 1.04, (s, 2))
        shift = rng.uniform(-1.4, 1.4, (s, 2))
        field = np.zeros((s, 784))
        cos, sin = np.cos(theta), np.sin(theta)
        for stroke in _SKELETONS[cls]:
            verts = np.asarray(stroke)  # (V, 2) in unit box
            jitter = rng.normal(0.0, 0.012, (s, len(verts), 2))
            pts = verts[None] + jitter  # (s, V, 2)
            # center, rotate, scale, map to pixels (20 px span), translate
            pts = pts - 0.5
            rot = np.empty_like(pts)
            rot[..., 0] = cos[:, None] * pts[..., 0] - sin[:, None] * pts[..., 1]
            rot[..., 1] = sin[:, None] * pts[..., 0] + cos[:, None] * pts[..., 1]
            pts = rot * scale[:, None, :] * 20.0 + 13.5 + shift[:, None, :]
            for v in range(len(verts) - 1):
                a = pts[:, v]      # (s, 2)
                b = pts[:, v + 1]  # (s, 2)
                ab = b - a
                denom = np.maximum((ab * ab).sum(1), 1e-12)  # (s,)
                ap = grid[None] - a[:, None]  # (s, 784, 2)
                t = np.clip((ap * ab[:, None]).sum(2) / denom[:, None], 0.0, 1.0)
                proj = a[:, None] + t[..., None] * ab[:, None]
                d = np.sqrt(((grid[None] - proj) ** 2).sum(2))  # (s, 784)
                seg_field = np.clip(1.55 - d / 1.05, 0.0, 1.0)
                np.maximum(field, seg_field, out=field)
        pixels[idx] = field.reshape(s, 28, 28)

    return Dataset(pixels, labels, name)
