"""Barcode signatures (L, M) and the three topological losses.

For bars (b_j, d_j) of one dimension, L_j = d_j - b_j and M_j = (d_j + b_j)/2.
The inner product <L, M> = sum L_j*M_j = sum (d_j^2 - b_j^2)/2 feeds:

- nonparametric:  sum_i (-1)^i * (1 + count_i) * <L_i, M_i>,
  where count_i is the number of bars in the dim-i signature,
- parametrized:   -sum_j (d_j - b_j)^p * ((d_j + b_j)/2)^q over one dimension,
- weighted:       sum_i w_i * <L_i, M_i>.

Gradients flow from bar endpoints to point coordinates through each bar's
birth/death critical edge (u, v): d(value)/dx_u = (x_u - x_v)/|u - v|.
Vertex births (dim 0) contribute nothing; a zero-length critical edge
contributes nothing (subgradient choice); bar counts are treated as locally
constant. Zero-length bars (length <= EPS_LEN) are excluded everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filtration import build_rips
from .geometry import PointCloud, pairwise_distances
from .persistence import Barcode, compute_persistence

EPS_LEN = 1e-12

KINDS = ("nonparametric", "parametrized", "weighted")


@dataclass(frozen=True)
class Signature:
    """Per-dimension bar lengths and means, with links back to the bars."""

    dim: int
    lengths: np.ndarray
    means: np.ndarray
    bar_indices: np.ndarray

    @property
    def count(self) -> int:
        return len(self.lengths)


@dataclass(frozen=True)
class LossSpec:
    """Which loss to evaluate and how.

    ``n`` is the maximum homology dimension for the nonparametric and
    weighted kinds, and the single target dimension for the parametrized
    kind. ``sign`` is +1 to promote features (descend on the loss) or -1 to
    discount them; it multiplies the reported value and gradient.
    """

    kind: str = "nonparametric"
    n: int = 1
    p: float = 1.0
    q: float = 1.0
    weights: tuple[float, ...] = (0.0, 0.0)
    sign: int = 1

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not 0 <= self.n <= 1:
            raise ValueError(f"homology dimension n must be 0 or 1, got {self.n}")
        if self.kind == "parametrized" and (self.p < 0 or self.q < 0):
            raise ValueError(f"p and q must be >= 0, got p={self.p}, q={self.q}")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if self.kind == "weighted" and len(self.weights) < self.n + 1:
            raise ValueError(
                f"weighted loss over dims 0..{self.n} needs {self.n + 1} weights, "
                f"got {len(self.weights)}"
            )


@dataclass(frozen=True)
class LossReport:
    """Sign-adjusted loss value with gradients.

    ``grad_points`` is (n_points, 2); ``grad_bars`` is (n_bars, 2) rows of
    (d/d birth, d/d death) aligned with the barcode passed around the
    pipeline, zero for bars excluded from the signature.
    """

    value: float
    grad_points: np.ndarray
    grad_bars: np.ndarray


def extract_signature(bc: Barcode, dim: int) -> Signature:
    """Signature of one dimension; keeps bars with length > EPS_LEN."""
    if dim not in (0, 1):
        raise ValueError(f"dim must be 0 or 1, got {dim}")
    idx = bc.select(dim)
    lengths = bc.deaths[idx] - bc.births[idx]
    keep = lengths > EPS_LEN
    idx = idx[keep]
    return Signature(
        dim=dim,
        lengths=lengths[keep],
        means=(bc.deaths[idx] + bc.births[idx]) / 2.0,
        bar_indices=idx,
    )


def inner_product(s: Signature) -> float:
    """<L, M> = sum_j L_j * M_j."""
    return float(np.dot(s.lengths, s.means))


def _dim_weight(s: Signature) -> float:
    """The (1 + count) factor of the nonparametric loss.

    Isolated here because "count" is a committed interpretation of the
    signature's dimension; swap this function to change it.
    """
    return 1.0 + s.count


def loss_nonparametric(signatures: list[Signature] | tuple[Signature, ...], n: int = 1) -> float:
    """sum_i (-1)^i (1 + count_i) <L_i, M_i> over dims 0..n."""
    total = 0.0
    for i in range(n + 1):
        s = signatures[i]
        if s.dim != i:
            raise ValueError(f"signatures[{i}] has dim {s.dim}, expected {i}")
        total += (-1.0) ** i * _dim_weight(s) * inner_product(s)
    return total


def loss_parametrized(bc: Barcode, dim: int, p: float, q: float) -> float:
    """-sum_j (d_j - b_j)^p ((d_j + b_j)/2)^q over dim's nonzero bars."""
    if p < 0 or q < 0:
        raise ValueError(f"p and q must be >= 0, got p={p}, q={q}")
    s = extract_signature(bc, dim)
    if s.count == 0:
        return 0.0
    return float(-np.sum(s.lengths**p * s.means**q))


def loss_weighted(
    signatures: list[Signature] | tuple[Signature, ...], weights: tuple[float, ...]
) -> float:
    """sum_i w_i <L_i, M_i> over dims 0..len(weights)-1."""
    total = 0.0
    for i, w in enumerate(weights):
        s = signatures[i]
        if s.dim != i:
            raise ValueError(f"signatures[{i}] has dim {s.dim}, expected {i}")
        total += w * inner_product(s)
    return total


def _bar_gradients(bc: Barcode, spec: LossSpec) -> tuple[float, np.ndarray]:
    """Raw (unsigned) loss value and per-bar (d/db, d/dd) array."""
    grad_bars = np.zeros((len(bc), 2))
    signatures = [extract_signature(bc, d) for d in (0, 1)]

    if spec.kind == "parametrized":
        s = signatures[spec.n]
        value = loss_parametrized(bc, spec.n, spec.p, spec.q)
        if s.count:
            ln, mn = s.lengths, s.means
            term_p = spec.p * ln ** (spec.p - 1.0) * mn**spec.q if spec.p != 0 else 0.0
            term_q = ln**spec.p * spec.q * mn ** (spec.q - 1.0) * 0.5 if spec.q != 0 else 0.0
            grad_bars[s.bar_indices, 0] = -(-term_p + term_q)
            grad_bars[s.bar_indices, 1] = -(term_p + term_q)
        return value, grad_bars

    if spec.kind == "nonparametric":
        value = loss_nonparametric(signatures, spec.n)
        coeffs = [(-1.0) ** i * _dim_weight(signatures[i]) for i in range(spec.n + 1)]
    else:
        value = loss_weighted(signatures, spec.weights[: spec.n + 1])
        coeffs = list(spec.weights[: spec.n + 1])

    # d<L,M>/dd_j = d_j and d<L,M>/db_j = -b_j, scaled by the dim coefficient
    for i in range(spec.n + 1):
        s = signatures[i]
        if s.count:
            grad_bars[s.bar_indices, 0] = -coeffs[i] * bc.births[s.bar_indices]
            grad_bars[s.bar_indices, 1] = coeffs[i] * bc.deaths[s.bar_indices]
    return value, grad_bars


def _push_to_points(
    coords: np.ndarray,
    dm: np.ndarray,
    edges: np.ndarray,
    coefs: np.ndarray,
    grad: np.ndarray,
) -> None:
    """Accumulate coef * d(edge length)/d(coords) for each (bar, edge) row."""
    mask = (edges[:, 0] >= 0) & (coefs != 0.0)
    if not np.any(mask):
        return
    u = edges[mask, 0]
    v = edges[mask, 1]
    c = coefs[mask]
    dist = dm[u, v]
    ok = dist > 0.0
    u, v, c, dist = u[ok], v[ok], c[ok], dist[ok]
    unit = (coords[u] - coords[v]) / dist[:, None]
    contrib = c[:, None] * unit
    np.add.at(grad, u, contrib)
    np.add.at(grad, v, -contrib)


def loss_gradient(cloud: PointCloud, spec: LossSpec) -> LossReport:
    """Full pipeline: distances -> filtration -> persistence -> loss + grad."""
    n = len(cloud)
    if n == 0:
        return LossReport(0.0, np.zeros((0, 2)), np.zeros((0, 2)))
    dmat = pairwise_distances(cloud)
    f = build_rips(dmat)
    bc = compute_persistence(f)
    value, grad_bars = _bar_gradients(bc, spec)
    if spec.sign == -1:
        value = -value
        grad_bars = -grad_bars
    grad = np.zeros((n, 2))
    _push_to_points(cloud.coords, dmat.entries, bc.birth_edges, grad_bars[:, 0], grad)
    _push_to_points(cloud.coords, dmat.entries, bc.death_edges, grad_bars[:, 1], grad)
    return LossReport(value, grad, grad_bars)


def evaluate_loss(cloud: PointCloud, spec: LossSpec) -> float:
    """Sign-adjusted loss value of a cloud (no gradient)."""
    if len(cloud) == 0:
        return 0.0
    bc = compute_persistence(build_rips(pairwise_distances(cloud)))
    value, _ = _bar_gradients(bc, spec)
    return spec.sign * value
