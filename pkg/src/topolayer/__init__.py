"""Persistent-homology toolkit for 2-D point clouds and 28x28 image data.

The pipeline: images binarize into point clouds, clouds build Vietoris-Rips
filtrations, filtrations yield persistence barcodes with simplex
attribution, barcodes yield differentiable topological losses, and losses
drive gradient-descent topologization of the underlying points. A small
numpy convolutional classifier and an IDX dataset layer support end-to-end
experiments; the `topolayer` CLI wires them together.
"""
from .geometry import (Frame, Image, Point2, PointCloud, DistanceMatrix,
                       clamp_to_frame, pairwise_distances, rasterize)
from .filtration import Filtration, build_rips, simplex_count
from .persistence import (Bar, Barcode, compute_h0_unionfind,
                          compute_persistence, reduce_naive, warmup)
from .signature import (EPS_LEN, LossReport, LossSpec, Signature,
                        evaluate_loss, extract_signature, inner_product,
                        loss_gradient, loss_nonparametric, loss_parametrized,
                        loss_weighted)
from .topologize import (TopologizeConfig, TopologizeTrace, default_workers,
                         topologize, topologize_batch, topologize_image)
from .dataset import (Dataset, IdxFormatError, binarize, binarize_dataset,
                      load_idx, subset, synthetic_digits, write_idx)
from .nn import (ClassifierModel, EpochMetrics, TrainConfig, evaluate,
                 load_checkpoint, save_checkpoint, train)
from .estimators import ConvNetClassifier, TopologyTransformer

__version__ = "0.1.0"

__all__ = [
    "Frame", "Image", "Point2", "PointCloud", "DistanceMatrix",
    "clamp_to_frame", "pairwise_distances", "rasterize",
    "Filtration", "build_rips", "simplex_count",
    "Bar", "Barcode", "compute_h0_unionfind", "compute_persistence",
    "reduce_naive", "warmup",
    "EPS_LEN", "LossReport", "LossSpec", "Signature", "evaluate_loss",
    "extract_signature", "inner_product", "loss_gradient",
    "loss_nonparametric", "loss_parametrized", "loss_weighted",
    "TopologizeConfig", "TopologizeTrace", "default_workers", "topologize",
    "topologize_batch", "topologize_image",
    "Dataset", "IdxFormatError", "binarize", "binarize_dataset", "load_idx",
    "subset", "synthetic_digits", "write_idx",
    "ClassifierModel", "EpochMetrics", "TrainConfig", "evaluate",
    "load_checkpoint", "save_checkpoint", "train",
    "ConvNetClassifier", "TopologyTransformer",
    "__version__",
]
