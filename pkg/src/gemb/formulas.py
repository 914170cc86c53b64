"""Closed-form pair and vertex weight functions for each subsampling scheme.

Every scheme admits limit functions f (for pairs) and g (for vertices) such
that n^2 * P(pair included | graph) tracks f(lam_i, lam_j, a_ij) and
n * P(vertex included | graph) tracks g(lam_i) as the graph grows. The
weighted empirical risk built from these is what the trainer minimizes, and
cell averages of the same functions define the discretized population
problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphon import Constant, DegreeFunction, SpecError, StepBlock, _cell_index, family_values
from .sampler import InclusionProbabilities, RandomWalk, SchemeConfig, UniformEdge, UniformVertex


def bracket_alpha(f, g, alpha: float):
    """Symmetrized power pairing f**alpha * g + f * g**alpha."""
    return f**alpha * g + f * g**alpha


def tn_integral(deg: DegreeFunction, rho: float, lam):
    """Integral over y of (1 - rho * W(lam, y)) * rowmean(W(y, .)).

    Exact for the constant and step families; quadrature on the degree grid
    otherwise.
    """
    fam = deg.spec.family
    lam_arr = np.asarray(lam, dtype=float)
    if isinstance(fam, Constant):
        out = np.full(lam_arr.shape, fam.p * (1.0 - rho * fam.p))
    elif isinstance(fam, StepBlock):
        B = fam.values
        row_means = B.mean(axis=1)
        per_cell = ((1.0 - rho * B) * row_means[None, :]).mean(axis=1)
        out = per_cell[_cell_index(lam_arr, B.shape[0])]
    else:
        wly = family_values(fam, lam_arr[..., None], deg.grid)
        out = ((1.0 - rho * wly) * deg.values) @ deg.weights
    return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class RiskWeights:
    """Pair and vertex weights for the subsampling-weighted risk.

    Formula-backed weights store the positive-pair constant and the
    negative-pair decomposition (a scale times the symmetrized degree
    pairing); Monte Carlo rescaled weights carry dense matrices instead.
    Pair weights are symmetric by construction.
    """

    source: str
    f_pos: float | None = None
    f_neg_const: float | None = None
    f_neg_scale: float | None = None
    alpha: float = 1.0
    deg_vals: np.ndarray | None = None
    g_const: float | None = None
    g_vals: np.ndarray | None = None
    pair_vals: np.ndarray | None = None

    def __post_init__(self):
        for name in ("f_pos", "f_neg_const", "f_neg_scale", "g_const"):
            v = getattr(self, name)
            if v is not None and (not np.isfinite(v) or v < 0):
                raise SpecError(f"{name} must be finite and non-negative, got {v}")
        for name in ("deg_vals", "g_vals"):
            v = getattr(self, name)
            if v is not None and (not np.all(np.isfinite(v)) or np.any(v < 0)):
                raise SpecError(f"{name} must be finite and non-negative")

    def pair_weight(self, i: int, j: int, x: int) -> float:
        """f(lam_i, lam_j, x); the Monte Carlo source stores the weight at
        the pair's observed label and ignores x."""
        if self.pair_vals is not None:
            return float(self.pair_vals[i, j])
        if x == 1:
            return float(self.f_pos)
        if self.f_neg_const is not None:
            return float(self.f_neg_const)
        return float(
            self.f_neg_scale * bracket_alpha(self.deg_vals[i], self.deg_vals[j], self.alpha)
        )

    def pair_values(self, i_idx, j_idx, x_arr) -> np.ndarray:
        """Vectorized f at index arrays (the binned-verification fast path)."""
        i_idx = np.asarray(i_idx)
        j_idx = np.asarray(j_idx)
        x_arr = np.asarray(x_arr)
        if self.pair_vals is not None:
            return self.pair_vals[i_idx, j_idx]
        if self.f_neg_const is not None:
            neg = np.full(i_idx.shape, float(self.f_neg_const))
        else:
            neg = self.f_neg_scale * bracket_alpha(
                self.deg_vals[i_idx], self.deg_vals[j_idx], self.alpha
            )
        return np.where(x_arr == 1, float(self.f_pos), neg)

    def vertex_weight(self, i: int) -> float:
        if self.g_vals is not None:
            return float(self.g_vals[i])
        return float(self.g_const)

    def vertex_array(self, n: int) -> np.ndarray:
        if self.g_vals is not None:
            if self.g_vals.shape[0] != n:
                raise SpecError("vertex weights sized for a different graph")
            return self.g_vals
        return np.full(n, float(self.g_const))

    def neg_matrix(self, n: int) -> np.ndarray:
        """Dense f(., ., 0) matrix (eager mode, desk scale)."""
        if self.pair_vals is not None:
            return self.pair_vals
        if self.f_neg_const is not None:
            return np.full((n, n), float(self.f_neg_const))
        dv = self.deg_vals
        if dv is None or dv.shape[0] != n:
            raise SpecError("degree values sized for a different graph")
        da = dv**self.alpha
        return self.f_neg_scale * (np.outer(da, dv) + np.outer(dv, da))

    def pair_matrix(self, adjacency: np.ndarray) -> np.ndarray:
        """Dense weight matrix at the observed labels, zero diagonal."""
        n = adjacency.shape[0]
        if self.pair_vals is not None:
            out = self.pair_vals.copy()
        else:
            out = np.where(adjacency.astype(bool), float(self.f_pos), self.neg_matrix(n))
        np.fill_diagonal(out, 0.0)
        return out


def weights_uniform_vertex(k: int) -> RiskWeights:
    """Pair weight k(k-1) at either label; vertex weight k."""
    if k < 1:
        raise SpecError("vertex sample size k must be >= 1")
    c = float(k * (k - 1))
    return RiskWeights(
        source="uniform-vertex", f_pos=c, f_neg_const=c, g_const=float(k)
    )


def weights_uniform_edge(
    cfg: UniformEdge, deg: DegreeFunction, rho: float, latents
) -> RiskWeights:
    """Weight functions for uniform edge sampling with unigram negatives."""
    lam = np.asarray(latents, dtype=float)
    ew = deg.moment(1.0)
    ewa = deg.moment(cfg.alpha)
    dv = np.asarray(deg.value_at(lam))
    tv = np.asarray(tn_integral(deg, rho, lam))
    f_pos = 2.0 * cfg.k / (ew * rho)
    f_neg_scale = 2.0 * cfg.k * cfg.l / (ew * ewa)
    g_vals = 2.0 * cfg.k * dv / ew + f_neg_scale * dv**cfg.alpha * tv
    return RiskWeights(
        source="uniform-edge",
        f_pos=f_pos,
        f_neg_scale=f_neg_scale,
        alpha=cfg.alpha,
        deg_vals=dv,
        g_vals=g_vals,
    )


def weights_random_walk(
    cfg: RandomWalk, deg: DegreeFunction, rho: float, latents
) -> RiskWeights:
    """Weight functions for stationary random walks with unigram negatives."""
    lam = np.asarray(latents, dtype=float)
    ew = deg.moment(1.0)
    ewa = deg.moment(cfg.alpha)
    dv = np.asarray(deg.value_at(lam))
    tv = np.asarray(tn_integral(deg, rho, lam))
    f_pos = 2.0 * cfg.k / (ew * rho)
    f_neg_scale = cfg.l * (cfg.k + 1) / (ew * ewa)
    g_vals = cfg.k * dv / ew + f_neg_scale * dv**cfg.alpha * tv
    return RiskWeights(
        source="random-walk",
        f_pos=f_pos,
        f_neg_scale=f_neg_scale,
        alpha=cfg.alpha,
        deg_vals=dv,
        g_vals=g_vals,
    )


def scheme_weights(
    scheme: SchemeConfig, deg: DegreeFunction, rho: float, latents
) -> RiskWeights:
    """Dispatch on the scheme kind."""
    if isinstance(scheme, UniformVertex):
        return weights_uniform_vertex(scheme.k)
    if isinstance(scheme, UniformEdge):
        return weights_uniform_edge(scheme, deg, rho, latents)
    if isinstance(scheme, RandomWalk):
        return weights_random_walk(scheme, deg, rho, latents)
    raise SpecError(f"unknown scheme {type(scheme).__name__}")


def weights_from_inclusion(ip: InclusionProbabilities) -> RiskWeights:
    """Rescale Monte Carlo inclusion frequencies into risk weights.

    Pair frequencies are multiplied by n^2 and vertex frequencies by n, so
    the weighted risk built from them reproduces the exact-probability risk
    through the same code path as the formula weights.
    """
    n = ip.vertex_counts.shape[0]
    pair_vals = ip.pair_prob_matrix() * float(n) ** 2
    g_vals = ip.vertex_probs() * float(n)
    return RiskWeights(source="monte-carlo", pair_vals=pair_vals, g_vals=g_vals)
