"""Cross-entropy losses over embedding inner products and their gradients.

Two surfaces: the stochastic loss of a single subsample (pairs realized,
penalty over the vertices the pairs touch) and the weighted empirical risk
(every ordered vertex pair, weighted by the scheme's pair and vertex weight
functions). Both return (value, gradient) with the gradient computed
analytically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .formulas import RiskWeights
from .graphon import LatentGraph, SpecError
from .sampler import Subsample


def sigmoid(y):
    y = np.asarray(y, dtype=float)
    z = np.exp(-np.abs(y))
    out = np.where(y >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return float(out) if out.ndim == 0 else out


def cross_entropy(y, x):
    """-x*log(sigmoid(y)) - (1-x)*log(1-sigmoid(y)), stable for large |y|.

    Written as softplus(y) - x*y, which never overflows and stays exact in
    the saturated tails.
    """
    ya = np.asarray(y, dtype=float)
    xa = np.asarray(x, dtype=float)
    out = np.logaddexp(0.0, ya) - xa * ya
    return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class EmbeddingMatrix:
    """n embedding rows of dimension d, every coordinate inside [-A, A]."""

    rows: np.ndarray
    box_bound: float = 10.0

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim != 2:
            raise SpecError("embedding rows must form an (n, d) matrix")
        if self.box_bound <= 0:
            raise SpecError("box bound must be positive")
        if self.rows.size and np.abs(self.rows).max() > self.box_bound:
            raise SpecError("embedding coordinates exceed the box bound")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class RiskConfig:
    """Penalty weight and normalization mode for the weighted risk.

    "per-graph" divides pair terms by n^2 and vertex terms by n (the scale
    on which the weight functions are defined); "raw" leaves the sums as
    is, which is what Monte Carlo rescaled weights expect when reproducing
    the exact-probability risk.
    """

    xi: float = 0.0
    normalization: str = "per-graph"

    def __post_init__(self):
        if self.xi < 0:
            raise SpecError(f"penalty weight must satisfy xi >= 0, got {self.xi}")
        if self.normalization not in ("per-graph", "raw"):
            raise SpecError(f"unknown normalization {self.normalization!r}")


def _pair_terms(rows: np.ndarray, pairs: np.ndarray, x: int, grad: np.ndarray) -> float:
    if pairs.size == 0:
        return 0.0
    u, v = pairs[:, 0], pairs[:, 1]
    y = np.einsum("ij,ij->i", rows[u], rows[v])
    value = float(np.sum(cross_entropy(y, x)))
    c = sigmoid(y) - x
    np.add.at(grad, u, c[:, None] * rows[v])
    np.add.at(grad, v, c[:, None] * rows[u])
    return value


def stochastic_loss(
    emb: EmbeddingMatrix, sub: Subsample, cfg: RiskConfig
) -> tuple[float, np.ndarray]:
    """Loss of one subsample: pair cross-entropies plus the l2 penalty over
    the vertices its pairs touch."""
    rows = emb.rows
    grad = np.zeros_like(rows)
    value = _pair_terms(rows, sub.positives, 1, grad)
    value += _pair_terms(rows, sub.negatives, 0, grad)
    if cfg.xi > 0:
        touched = sub.pair_vertices()
        if touched.size:
            value += cfg.xi * float(np.sum(rows[touched] ** 2))
            grad[touched] += 2.0 * cfg.xi * rows[touched]
    return value, grad


def weighted_risk_fn(
    weights: RiskWeights, graph: LatentGraph, cfg: RiskConfig
) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    """Precompute the weight matrices and return rows -> (value, gradient).

    The returned closure is what the full-batch trainer iterates on; the
    public ``empirical_risk`` wraps it for one-shot evaluation.
    """
    n = graph.n
    adjacency = graph.dense_adjacency()
    fmat = weights.pair_matrix(adjacency)
    gvec = weights.vertex_array(n)
    a = adjacency.astype(float)
    if cfg.normalization == "per-graph":
        pair_scale, vertex_scale = 1.0 / n**2, 1.0 / n
    else:
        pair_scale, vertex_scale = 1.0, 1.0
    xi = cfg.xi

    def fn(rows: np.ndarray) -> tuple[float, np.ndarray]:
        y = rows @ rows.T
        losses = np.logaddexp(0.0, y) - a * y
        value = pair_scale * float(np.sum(fmat * losses))
        value += xi * vertex_scale * float(np.sum(gvec * np.sum(rows**2, axis=1)))
        coefs = fmat * (sigmoid(y) - a)
        grad = (2.0 * pair_scale) * (coefs @ rows)
        grad += (2.0 * xi * vertex_scale) * gvec[:, None] * rows
        return value, grad

    return fn


def empirical_risk(
    emb: EmbeddingMatrix, weights: RiskWeights, graph: LatentGraph, cfg: RiskConfig
) -> tuple[float, np.ndarray]:
    """Weighted risk over all ordered vertex pairs (diagonal excluded)."""
    if emb.n != graph.n:
        raise SpecError(f"embeddings have {emb.n} rows but the graph has {graph.n} vertices")
    return weighted_risk_fn(weights, graph, cfg)(emb.rows)
