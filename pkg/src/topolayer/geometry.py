"""Point clouds, frames, pairwise distances, and pixel-grid rasterization.

Coordinates are in pixel units with ``x`` = column and ``y`` = row, origin at
the top-left corner, matching the image layout used throughout the package.
All types are immutable values; operations are pure functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Frame:
    """Rectangular pixel frame; points live in [0, width-1] x [0, height-1]."""

    width: int = 28
    height: int = 28

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame dimensions must be >= 1, got {self.width}x{self.height}")


@dataclass(frozen=True)
class Image:
    """Grayscale image with values in [0, 1] laid out as (height, width)."""

    pixels: np.ndarray
    frame: Frame = field(default_factory=Frame)

    def __post_init__(self) -> None:
        px = np.array(self.pixels, dtype=np.float64, copy=True)
        if px.ndim != 2 or px.shape != (self.frame.height, self.frame.width):
            raise ValueError(
                f"pixel array shape {px.shape} does not match frame "
                f"{self.frame.height}x{self.frame.width}"
            )
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class PointCloud:
    """Ordered 2-D points inside a frame; index identifies a point.

    ``coords`` is an (n, 2) float64 array of (x, y) rows. The array is frozen;
    derive new clouds instead of mutating.
    """

    coords: np.ndarray
    frame: Frame = field(default_factory=Frame)

    def __post_init__(self) -> None:
        c = np.asarray(self.coords, dtype=np.float64)
        if c.size == 0:
            c = c.reshape(0, 2)
        if c.ndim != 2 or c.shape[1] != 2:
            raise ValueError(f"coords must be an (n, 2) array, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coordinates must be finite")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)

    @classmethod
    def from_points(cls, points: Iterable[tuple[float, float]], frame: Frame | None = None) -> "PointCloud":
        pts = list(points)
        arr = np.asarray(pts, dtype=np.float64).reshape(len(pts), 2)
        return cls(arr, frame or Frame())

    @property
    def points(self) -> tuple[Point2, ...]:
        return tuple(Point2(float(x), float(y)) for x, y in self.coords)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def with_coords(self, coords: np.ndarray) -> "PointCloud":
        return PointCloud(coords, self.frame)


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric matrix of Euclidean distances with a zero diagonal."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.entries, dtype=np.float64)
        if m.size == 0:
            m = m.reshape(0, 0)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {m.shape}")
        if not np.array_equal(m, m.T):
            raise ValueError("distance matrix must be symmetric")
        if m.size and (np.any(np.diag(m) != 0.0) or np.any(m < 0.0)):
            raise ValueError(
                "distance matrix needs a zero diagonal and non-negative entries"
            )
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "entries", m)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def pairwise_distances(cloud: PointCloud) -> DistanceMatrix:
    """Euclidean distance between every pair of points."""
    c = cloud.coords
    diff = c[:, None, :] - c[None, :, :]
    dm = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dm, 0.0)
    return DistanceMatrix(dm)


def rasterize(cloud: PointCloud) -> Image:
    """Round each point to its nearest pixel (half-up ties) and light it.

    Raises ValueError for points outside the frame; clamp upstream.
    """
    w, h = cloud.frame.width, cloud.frame.height
    c = cloud.coords
    if c.size and (
        c[:, 0].min() < 0.0 or c[:, 0].max() > w - 1 or c[:, 1].min() < 0.0 or c[:, 1].max() > h - 1
    ):
        bad = c[
            (c[:, 0] < 0.0) | (c[:, 0] > w - 1) | (c[:, 1] < 0.0) | (c[:, 1] > h - 1)
        ][0]
        raise ValueError(f"point ({bad[0]}, {bad[1]}) lies outside the {w}x{h} frame")
    pixels = np.zeros((h, w), dtype=np.float64)
    if c.size:
        # floor(x + 0.5): half-up rounding, unlike np.round's half-to-even
        cols = np.floor(c[:, 0] + 0.5).astype(np.intp)
        rows = np.floor(c[:, 1] + 0.5).astype(np.intp)
        np.clip(cols, 0, w - 1, out=cols)
        np.clip(rows, 0, h - 1, out=rows)
        pixels[rows, cols] = 1.0
    return Image(pixels, cloud.frame)


def clamp_to_frame(cloud: PointCloud) -> PointCloud:
    """Clamp every coordinate into [0, width-1] x [0, height-1]; order kept."""
    w, h = cloud.frame.width, cloud.frame.height
    c = cloud.coords.copy()
    np.clip(c[:, 0], 0.0, float(w - 1), out=c[:, 0])
    np.clip(c[:, 1], 0.0, float(h - 1), out=c[:, 1])
    return PointCloud(c, cloud.frame)
