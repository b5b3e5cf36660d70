"""Command-line interface: barcodes, topologization, training, sweeps, bench.

All commands are deterministic given their config and seed; rerunning with
identical settings reproduces every output byte except duration columns.
Each CSV embeds its effective config as `# key=value` comment lines.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal error.
"""
from __future__ import annotations

import json
import sys
import time
from functools import lru_cache
from pathlib import Path

import click
import numpy as np

from . import __version__
from .dataset import (Dataset, binarize, binarize_dataset, load_idx,
                      subset, synthetic_digits, write_idx)
from .geometry import Frame, Image, PointCloud
from .filtration import build_rips
from .nn import ClassifierModel, TrainConfig, save_checkpoint, train
from .persistence import compute_persistence, warmup
from .geometry import pairwise_distances
from .signature import EPS_LEN, LossSpec
from .topologize import TopologizeConfig, topologize_image

DATA_ROOT_ENV = "TOPOLAYER_DATA_ROOT"
DATASET_NAMES = ("synthetic", "mnist", "kmnist", "fashion-mnist")
SYNTHETIC_TRAIN_POOL = 2000
SYNTHETIC_TEST_POOL = 10000
FETCH_HINT = (
    "expected IDX files under <data-root>/<dataset>/: "
    "train-images-idx3-ubyte[.gz], train-labels-idx1-ubyte[.gz], "
    "t10k-images-idx3-ubyte[.gz], t10k-labels-idx1-ubyte[.gz]; "
    "fetch them from the dataset's official distribution and place them there, "
    "or use --dataset synthetic which needs no files"
)


class DataError(click.ClickException):
    exit_code = 3


def _fail_config(message: str) -> None:
    raise click.UsageError(message)  # exit code 2


@lru_cache(maxsize=4)
def _synthetic_pool(n: int, seed: int, name: str) -> Dataset:
    # Dataset is frozen, so the memoized pools are safe to share
    return synthetic_digits(n, seed=seed, name=name)


def _load_split(dataset: str, data_root: str | None, split: str) -> Dataset:
    if dataset == "synthetic":
        if split == "train":
            return _synthetic_pool(SYNTHETIC_TRAIN_POOL, 1000001,
                                   "synthetic-train")
        return _synthetic_pool(SYNTHETIC_TEST_POOL, 1000002, "synthetic-test")
    root = Path(data_root) if data_root else None
    if root is None:
        raise DataError(
            f"dataset {dataset!r} needs --data-root or ${DATA_ROOT_ENV}; {FETCH_HINT}")
    prefix = "train" if split == "train" else "t10k"
    base = root / dataset
    paths = []
    for kind in (f"{prefix}-images-idx3-ubyte", f"{prefix}-labels-idx1-ubyte"):
        plain, gz = base / kind, base / f"{kind}.gz"
        if plain.exists():
            paths.append(plain)
        elif gz.exists():
            paths.append(gz)
        else:
            raise DataError(f"missing {plain} (or .gz); {FETCH_HINT}")
    return load_idx(paths[0], paths[1], name=f"{dataset}-{split}")


def _config_lines(command: str, items: dict) -> list[str]:
    lines = [f"# command={command}", f"# topolayer_version={__version__}"]
    for key in sorted(items):
        lines.append(f"# {key}={items[key]}")
    return lines


def _write_csv(path: Path, command: str, config: dict,
               header: str, rows: list[str]) -> None:
    text = "\n".join(_config_lines(command, config) + [header] + rows)
    path.write_text(text + "\n")


def _apply_config_file(ctx: click.Context, config_path: str | None) -> None:
    """Fill non-flag parameters from a flat key=value file."""
    if not config_path:
        return
    try:
        content = Path(config_path).read_text()
    except OSError as exc:
        _fail_config(f"cannot read config file {config_path}: {exc}")
    params = {p.name: p for p in ctx.command.params}
    for lineno, raw in enumerate(content.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            _fail_config(f"{config_path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key in ("config",) or key not in params:
            _fail_config(f"{config_path}:{lineno}: unknown config key {key!r}")
        if ctx.get_parameter_source(key) != click.core.ParameterSource.COMMANDLINE:
            param = params[key]
            ctx.params[key] = param.type.convert(value, param, ctx)


def _loss_spec(loss: str, dim: int, p: float, q: float,
               w0: float, w1: float, sign: int) -> LossSpec:
    try:
        return LossSpec(kind=loss, n=dim, p=p, q=q, weights=(w0, w1), sign=sign)
    except ValueError as exc:
        _fail_config(str(exc))


def _topo_config(spec: LossSpec, steps: int, learning_rate: float) -> TopologizeConfig:
    try:
        return TopologizeConfig(spec=spec, steps=steps, learning_rate=learning_rate)
    except ValueError as exc:
        _fail_config(str(exc))


def _prepared_sets(dataset: str, data_root: str | None, subset_n: int,
                   seed: int, threshold: float,
                   test_size: int | None) -> tuple[Dataset, Dataset]:
    """Binarized train subset and binarized test set (truncated if asked)."""
    train_full = _load_split(dataset, data_root, "train")
    if subset_n > len(train_full):
        raise DataError(
            f"subset size {subset_n} exceeds the {len(train_full)}-image train split")
    train_ds = binarize_dataset(subset(train_full, subset_n, seed), threshold)
    test_full = _load_split(dataset, data_root, "test")
    if test_size is not None:
        if not 1 <= test_size <= len(test_full):
            raise DataError(
                f"test size {test_size} out of range for the "
                f"{len(test_full)}-image test split")
        test_full = Dataset(test_full.pixels[:test_size],
                            test_full.labels[:test_size], test_full.name)
    test_ds = binarize_dataset(test_full, threshold)
    return train_ds, test_ds


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Topology-aware preprocessing and experiments for 28x28 image data."""


def _run_guard(fn):
    """Translate unexpected failures into exit code 4."""
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except click.exceptions.Exit:
            raise
        except Exception as exc:  # noqa: BLE001 - single reporting point
            click.echo(f"internal error: {exc!r}", err=True)
            sys.exit(4)
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# --- barcode ---------------------------------------------------------------

def _read_point_list(path: Path) -> PointCloud:
    points = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'x y', got {raw!r}")
        try:
            points.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric coordinates in {raw!r}")
    return PointCloud.from_points(points)


def _barcode_input(path_str: str, threshold: float) -> PointCloud:
    path = Path(path_str)
    if not path.exists():
        raise DataError(f"input file {path} does not exist")
    if path.suffix.lower() == ".npy":
        try:
            arr = np.load(path)
        except Exception as exc:
            raise DataError(f"cannot load {path} as a numpy array: {exc}")
        if arr.ndim != 2:
            raise DataError(f"{path}: expected a 2-D image array, got shape {arr.shape}")
        img = Image(np.clip(arr.astype(np.float64), 0.0, 1.0),
                    Frame(arr.shape[1], arr.shape[0]))
        return binarize(img, threshold)
    return _read_point_list(path)


@main.command()
@click.argument("input_path", type=click.Path())
@click.option("--threshold", type=float, default=0.5, show_default=True,
              help="Binarization threshold for .npy image inputs.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output JSON path (default: stdout).")
@_run_guard
def barcode(input_path: str, threshold: float, out_path: str | None) -> None:
    """Persistence barcode of an image (.npy) or point-list file as JSON.

    Point-list files hold one 'x y' pair per line; '#' starts a comment.
    The output lists visible bars only (positive length or essential),
    sorted by (dim, birth, death).
    """
    if not 0.0 < threshold < 1.0:
        _fail_config(f"threshold must lie in (0, 1), got {threshold}")
    cloud = _barcode_input(input_path, threshold)
    bc = compute_persistence(build_rips(pairwise_distances(cloud)))
    visible = [
        {"dim": int(bc.dims[i]), "birth": float(bc.births[i]),
         "death": float(bc.deaths[i]), "essential": bool(bc.death_sids[i] < 0)}
        for i in range(len(bc.dims))
        if bc.deaths[i] - bc.births[i] > EPS_LEN or bc.death_sids[i] < 0
    ]
    visible.sort(key=lambda b: (b["dim"], b["birth"], b["death"]))
    text = json.dumps(visible, indent=2)
    if out_path is None:
        click.echo(text)
    else:
        Path(out_path).write_text(text + "\n")


# --- topologize --------------------------------------------------------------

@main.command("topologize")
@click.option("--dataset", type=click.Choice(DATASET_NAMES), default="synthetic",
              show_default=True)
@click.option("--data-root", envvar=DATA_ROOT_ENV, default=None,
              help=f"Directory holding IDX datasets (or ${DATA_ROOT_ENV}).")
@click.option("--subset-n", type=int, default=400, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--loss", type=click.Choice(["nonparametric", "parametrized", "weighted"]),
              default="nonparametric", show_default=True)
@click.option("--dim", type=int, default=1, show_default=True)
@click.option("--p", type=float, default=1.0, show_default=True)
@click.option("--q", type=float, default=1.0, show_default=True)
@click.option("--w0", type=float, default=0.0, show_default=True)
@click.option("--w1", type=float, default=0.0, show_default=True)
@click.option("--sign", type=click.IntRange(-1, 1), default=1, show_default=True,
              help="+1 optimizes the loss as written, -1 its negation.")
@click.option("--steps", type=int, default=10, show_default=True)
@click.option("--learning-rate", type=float, default=0.1, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--workers", type=int, default=None,
              help="Worker processes (default: CPU count).")
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None,
              help="Flat key=value config file; explicit flags win.")
@click.pass_context
@_run_guard
def topologize_cmd(ctx: click.Context, **kw) -> None:
    """Topologize a dataset subset; write transformed IDX plus a trace CSV."""
    _apply_config_file(ctx, kw.pop("config"))
    kw = ctx.params
    kw.pop("config", None)
    spec = _loss_spec(kw["loss"], kw["dim"], kw["p"], kw["q"],
                      kw["w0"], kw["w1"], kw["sign"])
    cfg = _topo_config(spec, kw["steps"], kw["learning_rate"])
    train_full = _load_split(kw["dataset"], kw["data_root"], "train")
    if kw["subset_n"] > len(train_full):
        raise DataError(
            f"subset size {kw['subset_n']} exceeds the "
            f"{len(train_full)}-image train split")
    ds = subset(train_full, kw["subset_n"], kw["seed"])

    warmup()
    out_dir = Path(kw["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    pixels = np.zeros_like(ds.pixels)
    t_total = time.perf_counter()
    for i in range(len(ds)):
        t0 = time.perf_counter()
        img, trace = topologize_image(ds.image(i), cfg, threshold=kw["threshold"])
        duration = time.perf_counter() - t0
        pixels[i] = img.pixels
        initial = trace.losses[0] if trace.losses else float("nan")
        rows.append(",".join((
            repr(i), repr(int(ds.labels[i])), f"{duration:.6f}",
            repr(trace.space_reduction_ratio), repr(initial),
            repr(trace.final_loss))))
    total = time.perf_counter() - t_total
    out = Dataset(pixels, ds.labels, f"{ds.name}-topologized")
    write_idx(out, out_dir / "topologized-images-idx3-ubyte",
              out_dir / "topologized-labels-idx1-ubyte")
    config = {k: v for k, v in sorted(kw.items()) if k != "out_dir"}
    _write_csv(out_dir / "trace.csv", "topologize", config,
               "index,label,duration_s,space_reduction_ratio,initial_loss,final_loss",
               rows)
    click.echo(f"topologized {len(ds)} images in {total:.2f}s "
               f"-> {out_dir / 'trace.csv'}")


# --- train -------------------------------------------------------------------

PRESETS = ("baseline", "parametrized", "nonparametric")


def _preset_preprocess(preset: str, steps: int, learning_rate: float,
                       sign: int) -> TopologizeConfig | None:
    if preset == "baseline":
        return None
    if preset == "parametrized":
        spec = LossSpec(kind="parametrized", n=1, p=1.0, q=1.0, sign=sign)
    else:
        spec = LossSpec(kind="nonparametric", n=1, sign=sign)
    return _topo_config(spec, steps, learning_rate)


@main.command("train")
@click.option("--dataset", type=click.Choice(DATASET_NAMES), default="synthetic",
              show_default=True)
@click.option("--data-root", envvar=DATA_ROOT_ENV, default=None)
@click.option("--subset-n", type=int, default=400, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for subset selection and training shuffles/dropout.")
@click.option("--model-seed", type=int, default=0, show_default=True)
@click.option("--preset", type=click.Choice(PRESETS), default="baseline",
              show_default=True)
@click.option("--epochs", type=int, default=9, show_default=True)
@click.option("--batch-size", type=int, default=100, show_default=True)
@click.option("--learning-rate", type=float, default=0.01, show_default=True)
@click.option("--steps", type=int, default=10, show_default=True,
              help="Topologization steps for non-baseline presets.")
@click.option("--topo-learning-rate", type=float, default=0.005, show_default=True,
              help="Step size of the preprocessing topologization layer.")
@click.option("--sign", type=click.IntRange(-1, 1), default=1, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--test-size", type=int, default=None,
              help="Evaluate on the first N test images (default: all).")
@click.option("--workers", type=int, default=None)
@click.option("--save-model", type=click.Path(), default=None,
              help="Write the trained checkpoint here.")
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
@_run_guard
def train_cmd(ctx: click.Context, **kw) -> None:
    """Train the classifier on a binarized subset; write per-epoch metrics.

    Presets: baseline trains on the binarized images as-is; parametrized and
    nonparametric topologize every training image once before epoch 1.
    """
    _apply_config_file(ctx, kw.pop("config"))
    kw = ctx.params
    kw.pop("config", None)
    if kw["sign"] == 0:
        _fail_config("sign must be +1 or -1")
    preprocess = _preset_preprocess(kw["preset"], kw["steps"],
                                    kw["topo_learning_rate"], kw["sign"])
    try:
        cfg = TrainConfig(batch_size=kw["batch_size"], epochs=kw["epochs"],
                          learning_rate=kw["learning_rate"], seed=kw["seed"])
    except ValueError as exc:
        _fail_config(str(exc))
    train_ds, test_ds = _prepared_sets(kw["dataset"], kw["data_root"],
                                       kw["subset_n"], kw["seed"],
                                       kw["threshold"], kw["test_size"])
    if preprocess is not None:
        warmup()
    model = ClassifierModel(seed=kw["model_seed"])
    t0 = time.perf_counter()
    history = train(model, train_ds, cfg, preprocess=preprocess,
                    test_ds=test_ds, threshold=kw["threshold"],
                    workers=kw["workers"])
    duration = time.perf_counter() - t0

    out_dir = Path(kw["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [",".join((repr(m.epoch), repr(m.train_loss), repr(m.test_accuracy)))
            for m in history]
    config = {k: v for k, v in sorted(kw.items())
              if k not in ("out_dir", "save_model")}
    _write_csv(out_dir / "metrics.csv", "train", config,
               "epoch,train_loss,test_accuracy", rows)
    if kw["save_model"]:
        save_checkpoint(model, kw["save_model"])
    click.echo(f"trained {kw['epochs']} epochs in {duration:.1f}s; "
               f"final test accuracy {history[-1].test_accuracy:.4f} "
               f"-> {out_dir / 'metrics.csv'}")


# --- sweep ---------------------------------------------------------------

@main.command("sweep")
@click.option("--dataset", type=click.Choice(DATASET_NAMES), default="synthetic",
              show_default=True)
@click.option("--data-root", envvar=DATA_ROOT_ENV, default=None)
@click.option("--subset-n", type=int, default=40, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--model-seed", type=int, default=0, show_default=True)
@click.option("--w0-min", type=int, default=-1, show_default=True)
@click.option("--w0-max", type=int, default=1, show_default=True)
@click.option("--w1-min", type=int, default=-1, show_default=True)
@click.option("--w1-max", type=int, default=1, show_default=True)
@click.option("--epochs", type=int, default=9, show_default=True)
@click.option("--batch-size", type=int, default=100, show_default=True)
@click.option("--learning-rate", type=float, default=0.01, show_default=True)
@click.option("--steps", type=int, default=10, show_default=True)
@click.option("--topo-learning-rate", type=float, default=0.005, show_default=True,
              help="Step size of the preprocessing topologization layer.")
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--test-size", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
@_run_guard
def sweep_cmd(ctx: click.Context, **kw) -> None:
    """Grid of weighted-loss topologization runs; one accuracy per cell.

    For every integer pair (w0, w1) in the ranges, topologize the training
    subset under the weighted loss, train a fresh classifier, and record the
    final-epoch test accuracy.
    """
    _apply_config_file(ctx, kw.pop("config"))
    kw = ctx.params
    kw.pop("config", None)
    if kw["w0_min"] > kw["w0_max"] or kw["w1_min"] > kw["w1_max"]:
        _fail_config("empty weight range: need w0-min <= w0-max and w1-min <= w1-max")
    train_ds, test_ds = _prepared_sets(kw["dataset"], kw["data_root"],
                                       kw["subset_n"], kw["seed"],
                                       kw["threshold"], kw["test_size"])
    warmup()
    try:
        cfg = TrainConfig(batch_size=kw["batch_size"], epochs=kw["epochs"],
                          learning_rate=kw["learning_rate"], seed=kw["seed"])
    except ValueError as exc:
        _fail_config(str(exc))
    rows = []
    t0 = time.perf_counter()
    for w0 in range(kw["w0_min"], kw["w0_max"] + 1):
        for w1 in range(kw["w1_min"], kw["w1_max"] + 1):
            spec = LossSpec(kind="weighted", n=1, weights=(float(w0), float(w1)),
                            sign=1)
            preprocess = _topo_config(spec, kw["steps"], kw["topo_learning_rate"])
            model = ClassifierModel(seed=kw["model_seed"])
            history = train(model, train_ds, cfg, preprocess=preprocess,
                            test_ds=test_ds, threshold=kw["threshold"],
                            workers=kw["workers"])
            rows.append(",".join((repr(w0), repr(w1),
                                  repr(history[-1].test_accuracy))))
    duration = time.perf_counter() - t0
    out_path = Path(kw["out_path"])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in sorted(kw.items()) if k != "out_path"}
    _write_csv(out_path, "sweep", config, "w0,w1,final_accuracy", rows)
    click.echo(f"swept {len(rows)} cells in {duration:.1f}s -> {out_path}")


# --- bench ---------------------------------------------------------------

@main.command("bench")
@click.option("--dataset", type=click.Choice(DATASET_NAMES), default="synthetic",
              show_default=True)
@click.option("--data-root", envvar=DATA_ROOT_ENV, default=None)
@click.option("--subset-n", type=int, default=16, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--repetitions", type=int, default=64, show_default=True,
              help="Experiment k uses image k mod subset-n and threshold "
                   "thresholds[k // subset-n mod len(thresholds)].")
@click.option("--thresholds", type=str, default="0.3,0.4,0.5,0.6",
              show_default=True, help="Comma-separated binarization thresholds.")
@click.option("--loss", type=click.Choice(["nonparametric", "parametrized", "weighted"]),
              default="nonparametric", show_default=True)
@click.option("--dim", type=int, default=1, show_default=True)
@click.option("--steps", type=int, default=10, show_default=True)
@click.option("--learning-rate", type=float, default=0.1, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None)
@click.pass_context
@_run_guard
def bench_cmd(ctx: click.Context, **kw) -> None:
    """Time-versus-space benchmark over repeated topologizations.

    The default preset runs 64 experiments: 16 subset images crossed with
    four binarization thresholds.
    """
    _apply_config_file(ctx, kw.pop("config"))
    kw = ctx.params
    kw.pop("config", None)
    if kw["repetitions"] < 0:
        _fail_config(f"repetitions must be >= 0, got {kw['repetitions']}")
    thresholds = []
    for part in kw["thresholds"].split(","):
        try:
            value = float(part)
        except ValueError:
            _fail_config(f"bad threshold {part!r} in --thresholds")
        if not 0.0 < value < 1.0:
            _fail_config(f"threshold {value} must lie in (0, 1)")
        thresholds.append(value)
    spec = _loss_spec(kw["loss"], kw["dim"], 1.0, 1.0, 0.0, 0.0, 1)
    cfg = _topo_config(spec, kw["steps"], kw["learning_rate"])
    train_full = _load_split(kw["dataset"], kw["data_root"], "train")
    if kw["subset_n"] > len(train_full):
        raise DataError(
            f"subset size {kw['subset_n']} exceeds the "
            f"{len(train_full)}-image train split")
    ds = subset(train_full, kw["subset_n"], kw["seed"])
    warmup()
    rows = []
    for k in range(kw["repetitions"]):
        index = k % len(ds)
        threshold = thresholds[(k // len(ds)) % len(thresholds)]
        t0 = time.perf_counter()
        _, trace = topologize_image(ds.image(index), cfg, threshold=threshold)
        duration = time.perf_counter() - t0
        rows.append(",".join((repr(index), f"{duration:.6f}",
                              repr(trace.space_reduction_ratio))))
    out_path = Path(kw["out_path"])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in sorted(kw.items()) if k != "out_path"}
    _write_csv(out_path, "bench", config,
               "image_index,duration_s,space_reduction_ratio", rows)
    click.echo(f"ran {len(rows)} topologization experiments -> {out_path}")


if __name__ == "__main__":
    main()
