"""Gradient-descent optimization of point clouds under a topological loss.

The "topologization" step moves binarized image points along the loss
gradient before classification: x <- x - lr * grad, where the gradient
already carries the promote/discount sign from the loss spec. Images go
through binarize -> optimize -> rasterize; different images are independent
and may be processed by a worker pool.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import binarize
from .geometry import Frame, Image, PointCloud, clamp_to_frame, rasterize
from .signature import LossReport, LossSpec, evaluate_loss, loss_gradient


@dataclass(frozen=True)
class TopologizeConfig:
    spec: LossSpec = field(default_factory=LossSpec)
    steps: int = 10
    learning_rate: float = 0.1
    clamp: bool = True

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.learning_rate < 0:
            raise ValueError(
                f"learning_rate must be >= 0, got {self.learning_rate}"
            )


@dataclass(frozen=True)
class TopologizeTrace:
    """Per-step losses (recorded before each step), end-state loss, timing.

    ``space_reduction_ratio`` is the lit-pixel reduction through the
    binarize -> optimize -> rasterize round trip; it is filled by
    ``topologize_image`` and stays 0.0 for bare point-cloud runs. ``note``
    flags degenerate inputs (e.g. an all-dark image).
    """

    losses: tuple[float, ...]
    duration: float
    space_reduction_ratio: float = 0.0
    final_loss: float = 0.0
    note: str = ""


def topologize(cloud: PointCloud, cfg: TopologizeConfig) -> tuple[PointCloud, TopologizeTrace]:
    """Descend on the configured loss for cfg.steps steps.

    Point count and order are conserved; with clamp, every output
    coordinate lies inside the frame. An empty cloud returns unchanged with
    an empty trace.
    """
    t0 = time.perf_counter()
    if len(cloud) == 0:
        return cloud, TopologizeTrace((), time.perf_counter() - t0, 0.0, 0.0, "empty input")
    losses = []
    for _ in range(cfg.steps):
        report: LossReport = loss_gradient(cloud, cfg.spec)
        losses.append(report.value)
        coords = cloud.coords - cfg.learning_rate * report.grad_points
        cloud = cloud.with_coords(coords)
        if cfg.clamp:
            cloud = clamp_to_frame(cloud)
    final = evaluate_loss(cloud, cfg.spec)
    return cloud, TopologizeTrace(tuple(losses), time.perf_counter() - t0, 0.0, final)


def topologize_image(
    img: Image, cfg: TopologizeConfig, threshold: float = 0.5
) -> tuple[Image, TopologizeTrace]:
    """binarize -> topologize -> rasterize, with the lit-pixel ratio."""
    t0 = time.perf_counter()
    cloud = binarize(img, threshold)
    if len(cloud) == 0:
        return img, TopologizeTrace((), time.perf_counter() - t0, 0.0, 0.0, "empty input")
    lit_before = len(cloud)
    out_cloud, trace = topologize(cloud, cfg)
    out = rasterize(out_cloud)
    lit_after = int(out.pixels.sum())
    ratio = 1.0 - lit_after / lit_before
    return out, TopologizeTrace(
        trace.losses, time.perf_counter() - t0, ratio, trace.final_loss, trace.note
    )


def _worker(args: tuple[np.ndarray, int, int, TopologizeConfig, float]):
    pixels, width, height, cfg, threshold = args
    img = Image(pixels, Frame(width, height))
    out, trace = topologize_image(img, cfg, threshold)
    return np.asarray(out.pixels), trace


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # non-Linux
        return os.cpu_count() or 1


def topologize_batch(
    images: np.ndarray,
    cfg: TopologizeConfig,
    threshold: float = 0.5,
    workers: int | None = None,
    frame: Frame | None = None,
) -> tuple[np.ndarray, list[TopologizeTrace]]:
    """Topologize a stack of images (N, H, W), one worker per image.

    ``workers=None`` uses the machine's CPU count; a width of 1 runs inline
    (a one-wide process pool would only add IPC and startup overhead).
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise ValueError(f"expected an (N, H, W) stack, got shape {images.shape}")
    frame = frame or Frame(images.shape[2], images.shape[1])
    if workers is None:
        workers = default_workers()
    jobs = [(images[i], frame.width, frame.height, cfg, threshold) for i in range(len(images))]
    if workers <= 1 or len(images) <= 1:
        results = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(jobs) // (workers * 4))
            results = list(pool.map(_worker, jobs, chunksize=chunk))
    out = np.stack([r[0] for r in results]) if results else images.copy()
    traces = [r[1] for r in results]
    return out, traces
