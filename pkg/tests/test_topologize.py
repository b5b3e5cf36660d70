"""Gradient-descent topologization of clouds, images, and batches."""
from __future__ import annotations

import numpy as np
import pytest

from topolayer import (
    Frame,
    Image,
    LossSpec,
    PointCloud,
    TopologizeConfig,
    binarize,
    evaluate_loss,
    loss_gradient,
    rasterize,
    topologize,
    topologize_batch,
    topologize_image,
)

from conftest import FIGURE_EIGHT_POINTS, random_cloud


def _centered_eight(noise: float = 0.0, seed: int = 0) -> PointCloud:
    coords = np.array(FIGURE_EIGHT_POINTS) + 10.0
    if noise:
        coords = coords + np.random.default_rng(seed).normal(0, noise, coords.shape)
    return PointCloud(coords, Frame(28, 28))


def test_config_validation() -> None:
    with pytest.raises(ValueError):
        TopologizeConfig(steps=0)
    with pytest.raises(ValueError):
        TopologizeConfig(learning_rate=-0.1)


def test_zero_rate_is_identity_on_clouds() -> None:
    cloud = _centered_eight()
    cfg = TopologizeConfig(steps=1, learning_rate=0.0)
    out, trace = topologize(cloud, cfg)
    np.testing.assert_array_equal(out.coords, cloud.coords)
    assert len(trace.losses) == 1
    assert trace.final_loss == trace.losses[0]


def test_zero_rate_image_round_trip_is_binarization() -> None:
    rng = np.random.default_rng(83)
    pixels = np.where(rng.random((28, 28)) < 0.1, 0.9, 0.2)
    img = Image(pixels)
    cfg = TopologizeConfig(steps=1, learning_rate=0.0)
    out, trace = topologize_image(img, cfg)
    np.testing.assert_array_equal(
        out.pixels, rasterize(binarize(img, 0.5)).pixels
    )
    assert trace.space_reduction_ratio == 0.0


def test_discount_step_reduces_loss_at_ties() -> None:
    # the exact figure eight is full of tied distances; the discounted loss
    # still descends because min/max pull the attained argument inward
    cloud = _centered_eight()
    spec = LossSpec(kind="nonparametric", sign=-1)
    cfg = TopologizeConfig(spec=spec, steps=1, learning_rate=1e-5)
    before = evaluate_loss(cloud, spec)
    out, _ = topologize(cloud, cfg)
    after = evaluate_loss(out, spec)
    assert after < before


def test_promote_step_reduces_loss_off_ties() -> None:
    cloud = _centered_eight(noise=1e-3, seed=5)
    spec = LossSpec(kind="nonparametric", sign=1)
    cfg = TopologizeConfig(spec=spec, steps=1, learning_rate=1e-5)
    before = evaluate_loss(cloud, spec)
    out, _ = topologize(cloud, cfg)
    after = evaluate_loss(out, spec)
    assert after < before


def test_small_first_step_never_increases_loss() -> None:
    rng = np.random.default_rng(89)
    spec = LossSpec(kind="nonparametric", sign=1)
    cfg = TopologizeConfig(spec=spec, steps=1, learning_rate=1e-3, clamp=False)
    for trial in range(30):
        cloud = random_cloud(rng, int(rng.integers(5, 20)), lo=4.0, hi=24.0)
        before = evaluate_loss(cloud, spec)
        out, _ = topologize(cloud, cfg)
        assert evaluate_loss(out, spec) <= before + 1e-9, f"trial {trial}"


def test_single_step_applies_exact_gradient_update() -> None:
    cloud = _centered_eight(noise=0.01, seed=9)
    spec = LossSpec(kind="parametrized", n=1, p=1.0, q=1.0)
    lr = 1e-6
    cfg = TopologizeConfig(spec=spec, steps=1, learning_rate=lr)
    out, _ = topologize(cloud, cfg)
    grad = loss_gradient(cloud, spec).grad_points
    np.testing.assert_allclose(
        out.coords, cloud.coords - lr * grad, rtol=0, atol=1e-15
    )


def test_trace_losses_track_descent() -> None:
    cloud = _centered_eight(noise=0.02, seed=13)
    cfg = TopologizeConfig(steps=6, learning_rate=1e-4)
    out, trace = topologize(cloud, cfg)
    assert len(trace.losses) == 6
    assert trace.losses[0] == pytest.approx(evaluate_loss(cloud, cfg.spec))
    assert trace.final_loss == pytest.approx(evaluate_loss(out, cfg.spec))
    assert trace.duration >= 0.0


def test_clamped_descent_stays_in_frame() -> None:
    rng = np.random.default_rng(97)
    coords = rng.uniform(0.0, 27.0, size=(30, 2))
    cloud = PointCloud(coords, Frame(28, 28))
    cfg = TopologizeConfig(steps=10, learning_rate=0.5)
    out, _ = topologize(cloud, cfg)
    assert len(out) == 30
    assert out.coords.min() >= 0.0
    assert out.coords.max() <= 27.0


def test_all_dark_image_passes_through_with_note() -> None:
    img = Image(np.zeros((28, 28)))
    out, trace = topologize_image(img, TopologizeConfig())
    np.testing.assert_array_equal(out.pixels, img.pixels)
    assert trace.note != ""
    assert trace.space_reduction_ratio == 0.0


def test_space_reduction_ratio_matches_lit_pixel_counts() -> None:
    rng = np.random.default_rng(101)
    pixels = np.zeros((28, 28))
    lit = rng.integers(4, 24, size=(60, 2))
    pixels[lit[:, 0], lit[:, 1]] = 1.0
    img = Image(pixels)
    out, trace = topologize_image(img, TopologizeConfig())
    before = float(img.pixels.sum())
    after = float(out.pixels.sum())
    assert trace.space_reduction_ratio == pytest.approx(
        (before - after) / before, abs=1e-12
    )


def test_batch_results_do_not_depend_on_worker_count() -> None:
    rng = np.random.default_rng(103)
    images = np.zeros((6, 28, 28))
    for i in range(6):
        lit = rng.integers(4, 24, size=(40, 2))
        images[i, lit[:, 0], lit[:, 1]] = 1.0
    cfg = TopologizeConfig(steps=3)
    out1, traces1 = topologize_batch(images, cfg, workers=1)
    out2, traces2 = topologize_batch(images, cfg, workers=2)
    np.testing.assert_array_equal(out1, out2)
    assert [t.losses for t in traces1] == [t.losses for t in traces2]
    assert [t.final_loss for t in traces1] == [t.final_loss for t in traces2]


def test_batch_handles_empty_input() -> None:
    out, traces = topologize_batch(np.zeros((0, 28, 28)), TopologizeConfig())
    assert out.shape == (0, 28, 28)
    assert traces == []
