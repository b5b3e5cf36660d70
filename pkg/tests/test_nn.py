"""Convolutional classifier: forward pass, gradients, training, checkpoints."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from topolayer import (
    ClassifierModel,
    Dataset,
    LossSpec,
    TopologizeConfig,
    TrainConfig,
    binarize_dataset,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    synthetic_digits,
    train,
)
from topolayer.nn import PARAM_ORDER, PARAM_SHAPES


def _batch(n: int = 4, seed: int = 13) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    x = rng.random((n, 28, 28))
    y = rng.integers(0, 10, size=n)
    return x, y


def test_parameter_shapes() -> None:
    model = ClassifierModel(seed=0)
    assert set(model.params) == set(PARAM_ORDER)
    for name in PARAM_ORDER:
        assert model.params[name].shape == PARAM_SHAPES[name]


def test_forward_log_probabilities_normalized() -> None:
    model = ClassifierModel(seed=1)
    x, _ = _batch(6)
    logp = model.forward(x)
    assert logp.shape == (6, 10)
    np.testing.assert_allclose(np.exp(logp).sum(axis=1), 1.0, atol=1e-6)
    assert np.all(logp <= 0)


def test_forward_without_dropout_is_deterministic() -> None:
    model = ClassifierModel(seed=2)
    x, _ = _batch(3)
    np.testing.assert_array_equal(model.forward(x), model.forward(x))


def test_dropout_reproduces_under_reseeded_rng() -> None:
    model = ClassifierModel(seed=3)
    x, y = _batch(5)
    loss_a, _ = model.loss_and_grads(x, y, np.random.default_rng(99))
    loss_b, _ = model.loss_and_grads(x, y, np.random.default_rng(99))
    loss_c, _ = model.loss_and_grads(x, y, np.random.default_rng(100))
    assert loss_a == loss_b
    assert loss_a != loss_c


def test_input_shape_errors_name_the_layer() -> None:
    model = ClassifierModel(seed=0)
    with pytest.raises(ValueError, match="conv1"):
        model.forward(np.zeros((2, 27, 27)))
    with pytest.raises(ValueError, match="labels"):
        model.loss_and_grads(np.zeros((2, 28, 28)), np.zeros(3, dtype=np.int64))


def _fd_layer_error(model: ClassifierModel, name: str, x: np.ndarray,
                    y: np.ndarray, rng: np.random.Generator,
                    h: float = 1e-4, probes: int = 4) -> float:
    """Worst relative FD error over random entries of one parameter tensor.

    The network is piecewise linear, so a finite-difference step that hops
    a ReLU or max-pool kink produces a spurious mismatch. Comparing the
    h and h/10 quotients detects those crossings so callers can redraw.
    """
    _, grads = model.loss_and_grads(x, y)
    flat = model.params[name].reshape(-1)
    gflat = grads[name].reshape(-1)
    worst = 0.0
    for _ in range(probes):
        k = int(rng.integers(0, flat.size))
        orig = flat[k]
        quotients = []
        for step in (h, h / 10.0):
            flat[k] = orig + step
            up, _ = model.loss_and_grads(x, y)
            flat[k] = orig - step
            down, _ = model.loss_and_grads(x, y)
            flat[k] = orig
            quotients.append((up - down) / (2.0 * step))
        if abs(quotients[0] - quotients[1]) > 1e-4 * max(
            1.0, abs(quotients[0])
        ):
            return float("nan")  # kink crossing: caller redraws
        err = abs(quotients[0] - gflat[k]) / max(1.0, abs(quotients[0]))
        worst = max(worst, err)
    return worst


@pytest.mark.parametrize("name", PARAM_ORDER)
def test_gradients_match_finite_differences(name: str) -> None:
    rng = np.random.default_rng(127)
    for attempt in range(6):
        model = ClassifierModel(seed=17 + attempt, dtype=np.float64)
        x, y = _batch(4, seed=300 + attempt)
        err = _fd_layer_error(model, name, x, y, rng)
        if not np.isnan(err):
            break
    assert not np.isnan(err), "kink crossings on every draw"
    assert err < 1e-3, f"{name}: relative error {err}"


def test_adam_first_step_is_signed_unit_step() -> None:
    model = ClassifierModel(seed=5, dtype=np.float64)
    cfg = TrainConfig(learning_rate=0.01)
    grads = {
        name: np.full(PARAM_SHAPES[name], (-1.0) ** i)
        for i, name in enumerate(PARAM_ORDER)
    }
    before = {name: model.params[name].copy() for name in PARAM_ORDER}
    model.adam_step(grads, cfg)
    for name in PARAM_ORDER:
        delta = model.params[name] - before[name]
        expected = -cfg.learning_rate * np.sign(grads[name])
        np.testing.assert_allclose(delta, expected, atol=1e-6)


def test_train_config_validation() -> None:
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)


def test_training_is_deterministic() -> None:
    ds = synthetic_digits(60, seed=21)
    test_ds = synthetic_digits(40, seed=22)
    cfg = TrainConfig(batch_size=20, epochs=2, seed=4)
    runs = []
    for _ in range(2):
        model = ClassifierModel(seed=6)
        history = train(model, ds, cfg, test_ds=test_ds)
        runs.append((history, {k: v.copy() for k, v in model.params.items()}))
    assert runs[0][0] == runs[1][0]
    for name in PARAM_ORDER:
        np.testing.assert_array_equal(runs[0][1][name], runs[1][1][name])


def test_training_reduces_loss() -> None:
    ds = binarize_dataset(synthetic_digits(100, seed=23))
    model = ClassifierModel(seed=7)
    cfg = TrainConfig(batch_size=25, epochs=3, seed=5)
    history = train(model, ds, cfg)
    assert len(history) == 3
    assert [m.epoch for m in history] == [1, 2, 3]
    assert history[-1].train_loss < history[0].train_loss


def test_zero_rate_preprocess_equals_pre_binarized_training() -> None:
    ds = synthetic_digits(40, seed=29)
    test_ds = synthetic_digits(30, seed=31)
    cfg = TrainConfig(batch_size=20, epochs=1, seed=8)
    identity = TopologizeConfig(
        spec=LossSpec(kind="nonparametric"), steps=1, learning_rate=0.0
    )

    model_a = ClassifierModel(seed=9)
    history_a = train(model_a, binarize_dataset(ds), cfg,
                      test_ds=binarize_dataset(test_ds))
    model_b = ClassifierModel(seed=9)
    history_b = train(model_b, ds, cfg, preprocess=identity, test_ds=test_ds)
    assert history_a == history_b
    for name in PARAM_ORDER:
        np.testing.assert_array_equal(
            model_a.params[name], model_b.params[name]
        )


def test_evaluate_ignores_batch_size() -> None:
    ds = synthetic_digits(30, seed=37)
    model = ClassifierModel(seed=10)
    assert evaluate(model, ds, batch_size=7) == evaluate(model, ds, batch_size=200)


def test_evaluate_single_image_is_binary() -> None:
    ds = synthetic_digits(1, seed=41)
    model = ClassifierModel(seed=11)
    assert evaluate(model, ds) in (0.0, 1.0)


def test_checkpoint_round_trip(tmp_path: Path) -> None:
    ds = synthetic_digits(40, seed=43)
    model = ClassifierModel(seed=12)
    train(model, ds, TrainConfig(batch_size=20, epochs=1, seed=13))
    path = tmp_path / "model.bin"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    for name in PARAM_ORDER:
        np.testing.assert_array_equal(model.params[name], back.params[name])
    x, _ = _batch(3)
    np.testing.assert_array_equal(model.forward(x), back.forward(x))


def test_checkpoint_rejects_corruption(tmp_path: Path) -> None:
    model = ClassifierModel(seed=14)
    path = tmp_path / "model.bin"
    save_checkpoint(model, path)

    bad_magic = tmp_path / "magic.bin"
    bad_magic.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(bad_magic)

    truncated = tmp_path / "short.bin"
    truncated.write_bytes(path.read_bytes()[:-200])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(truncated)
