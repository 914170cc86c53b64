"""Graphon families, their degree functions, and latent-position graph sampling.

A graphon here is a symmetric map W: [0,1]^2 -> (0,1) bounded away from 0
and 1. A graph on n vertices is drawn by giving every vertex an independent
uniform latent position and connecting i < j with probability
rho_n * W(latent_i, latent_j), where rho_n in (0, 1] is a density factor
that may decay with n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .utils import composite_simpson, piecewise_simpson, rng_stream

# Dense adjacency matrices are only materialized at desk scale.
DENSE_LIMIT = 6000


class SpecError(ValueError):
    """A graphon, sparsity rule, or sampling request violates its constraints."""


@dataclass(frozen=True)
class Constant:
    """W(x, y) = p."""

    p: float


@dataclass(frozen=True, eq=False)
class StepBlock:
    """Piecewise-constant graphon on an m x m grid of equal-width cells."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.array(self.values, dtype=float))


@dataclass(frozen=True)
class SmoothProduct:
    """W(x, y) = a + b * x * y."""

    a: float
    b: float


Family = Constant | StepBlock | SmoothProduct


def _cell_index(x: np.ndarray, m: int) -> np.ndarray:
    return np.minimum((x * m).astype(int), m - 1)


def family_values(family: Family, x, y) -> np.ndarray:
    """Vectorized W(x, y) without range checks (internal fast path)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if isinstance(family, Constant):
        shape = np.broadcast_shapes(x.shape, y.shape)
        return np.full(shape, float(family.p))
    if isinstance(family, StepBlock):
        m = family.values.shape[0]
        return family.values[_cell_index(x, m), _cell_index(y, m)]
    if isinstance(family, SmoothProduct):
        return family.a + family.b * x * y
    raise SpecError(f"unknown graphon family {type(family).__name__}")


def _family_bounds(family: Family) -> tuple[float, float]:
    if isinstance(family, Constant):
        return float(family.p), float(family.p)
    if isinstance(family, StepBlock):
        return float(family.values.min()), float(family.values.max())
    # Smooth families: dense-grid check.
    t = np.linspace(0.0, 1.0, 513)
    vals = family_values(family, t[:, None], t[None, :])
    return float(vals.min()), float(vals.max())


def _family_breakpoints(family: Family) -> np.ndarray:
    if isinstance(family, StepBlock):
        m = family.values.shape[0]
        return np.arange(1, m) / m
    return np.empty(0)


@dataclass(frozen=True)
class ConstantSparsity:
    """rho_n = rho for every n."""

    rho: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise SpecError(f"density factor must lie in (0, 1], got {self.rho}")

    def at(self, n: int) -> float:
        return float(self.rho)


@dataclass(frozen=True)
class DecayingSparsity:
    """rho_n = c * (log(n)/n)**gamma with gamma < 1.

    gamma < 1 keeps rho_n well above log(n)/n, so sampled degrees stay
    regular enough for the closed-form weight functions to apply.
    """

    c: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        if self.c <= 0:
            raise SpecError(f"density scale must be positive, got {self.c}")
        if not 0.0 <= self.gamma < 1.0:
            raise SpecError(f"decay exponent must satisfy 0 <= gamma < 1, got {self.gamma}")

    def at(self, n: int) -> float:
        if n < 2:
            raise SpecError("density schedule needs n >= 2")
        rho = self.c * (math.log(n) / n) ** self.gamma
        if not 0.0 < rho <= 1.0:
            raise SpecError(f"rho at n={n} is {rho:.6g}, outside (0, 1]; adjust c or gamma")
        return float(rho)


Sparsity = ConstantSparsity | DecayingSparsity


@dataclass(frozen=True)
class Holder:
    """Smoothness metadata (exponent, constant) carried for reporting."""

    beta: float = 1.0
    constant: float = 1.0


@dataclass(frozen=True)
class GraphonSpec:
    """A graphon family plus its density schedule and smoothness metadata."""

    family: Family
    sparsity: Sparsity = ConstantSparsity(1.0)
    holder: Holder = Holder()

    def __post_init__(self):
        if isinstance(self.family, StepBlock):
            B = self.family.values
            if B.ndim != 2 or B.shape[0] != B.shape[1]:
                raise SpecError("block-value matrix must be square")
            if not np.allclose(B, B.T):
                raise SpecError("block-value matrix must be symmetric")
        lo, hi = self.bounds
        if not lo > 0.0:
            raise SpecError(f"graphon must be bounded away from 0, found minimum {lo}")
        if not hi < 1.0:
            raise SpecError(f"graphon must be bounded away from 1, found maximum {hi}")

    @cached_property
    def bounds(self) -> tuple[float, float]:
        return _family_bounds(self.family)

    def rho_at(self, n: int) -> float:
        rho = self.sparsity.at(n)
        if rho * self.bounds[1] >= 1.0:
            raise SpecError(f"rho * max W = {rho * self.bounds[1]:.6g} must stay below 1")
        return rho


def evaluate(spec: GraphonSpec, x, y):
    """W(x, y) for coordinates in [0, 1]; symmetric in its arguments."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if np.any((xa < 0.0) | (xa > 1.0)) or np.any((ya < 0.0) | (ya > 1.0)):
        raise SpecError("graphon coordinates must lie in [0, 1]")
    out = family_values(spec.family, xa, ya)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class DegreeFunction:
    """Row integrals of a graphon on a grid, plus moments of their law.

    ``values[j]`` is the integral of W(grid[j], y) over y. ``moment(alpha)``
    is the integral over lam of values(lam)**alpha. Closed forms are used
    for the constant and step families; smooth families go through
    quadrature with nodes split at any discontinuity.
    """

    spec: GraphonSpec
    grid: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    moments: dict[float, float]
    exact: bool

    def value_at(self, lam):
        lam_arr = np.asarray(lam, dtype=float)
        fam = self.spec.family
        if isinstance(fam, Constant):
            out = np.full(lam_arr.shape, float(fam.p))
        elif isinstance(fam, StepBlock):
            row_means = fam.values.mean(axis=1)
            out = row_means[_cell_index(lam_arr, fam.values.shape[0])]
        else:
            out = np.interp(lam_arr, self.grid, self.values)
        return float(out) if out.ndim == 0 else out

    def moment(self, alpha: float) -> float:
        key = float(alpha)
        if key in self.moments:
            return self.moments[key]
        fam = self.spec.family
        if isinstance(fam, Constant):
            return float(fam.p) ** key
        if isinstance(fam, StepBlock):
            return float((fam.values.mean(axis=1) ** key).mean())
        return float(np.dot(self.weights, self.values**key))


def degree_function(
    spec: GraphonSpec,
    alphas=(1.0,),
    quadrature_points: int = 1024,
    force_quadrature: bool = False,
) -> DegreeFunction:
    """Degree function of a graphon with the requested moments precomputed."""
    if quadrature_points < 2:
        raise SpecError("need at least two quadrature points")
    fam = spec.family
    breaks = np.concatenate(([0.0], _family_breakpoints(fam), [1.0]))
    if isinstance(fam, (Constant, StepBlock)) and not force_quadrature:
        grid, weights = piecewise_simpson(breaks, min(quadrature_points, 64))
        if isinstance(fam, Constant):
            values = np.full(grid.shape, float(fam.p))
            moments = {float(a): float(fam.p) ** float(a) for a in alphas}
        else:
            row_means = fam.values.mean(axis=1)
            values = row_means[_cell_index(grid, fam.values.shape[0])]
            moments = {float(a): float((row_means ** float(a)).mean()) for a in alphas}
        return DegreeFunction(spec, grid, values, weights, moments, True)
    nodes, weights = piecewise_simpson(breaks, quadrature_points)
    wmat = family_values(fam, nodes[:, None], nodes[None, :])
    values = wmat @ weights
    moments = {float(a): float(np.dot(weights, values ** float(a))) for a in alphas}
    return DegreeFunction(spec, nodes, values, weights, moments, False)


@dataclass(eq=False)
class LatentGraph:
    """A sampled graph: latent positions, adjacency, and degree caches.

    Adjacency is stored as sorted neighbor lists (and a canonical u < v edge
    array), giving O(deg) walk steps and O(log deg) membership tests.
    Latents are ``None`` for ingested real graphs, which disables the
    operations that need them.
    """

    n: int
    latents: np.ndarray | None
    rho: float
    edges: np.ndarray
    neighbors: list[np.ndarray]
    degrees: np.ndarray
    edge_count: int
    _dense: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def build(cls, n: int, edges: np.ndarray, latents=None, rho: float = 1.0) -> "LatentGraph":
        """Assemble a graph from unique, self-loop-free u < v edge pairs."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
            src = np.concatenate([edges[:, 0], edges[:, 1]])
            dst = np.concatenate([edges[:, 1], edges[:, 0]])
            by = np.lexsort((dst, src))
            src, dst = src[by], dst[by]
            degrees = np.bincount(src, minlength=n)
            neighbors = np.split(dst, np.cumsum(degrees)[:-1])
        else:
            degrees = np.zeros(n, dtype=np.int64)
            neighbors = [np.empty(0, dtype=np.int64) for _ in range(n)]
        if latents is not None:
            latents = np.asarray(latents, dtype=float)
            if latents.shape != (n,):
                raise SpecError("latents must have one entry per vertex")
        return cls(
            n=n,
            latents=latents,
            rho=float(rho),
            edges=edges,
            neighbors=list(neighbors),
            degrees=np.asarray(degrees, dtype=np.int64),
            edge_count=int(edges.shape[0]),
        )

    def has_edge(self, u: int, v: int) -> bool:
        if u == v:
            return False
        if self.degrees[u] > self.degrees[v]:
            u, v = v, u
        nb = self.neighbors[u]
        i = np.searchsorted(nb, v)
        return bool(i < nb.size and nb[i] == v)

    def dense_adjacency(self) -> np.ndarray:
        """Symmetric uint8 adjacency matrix, cached; desk scale only."""
        if self._dense is None:
            if self.n > DENSE_LIMIT:
                raise SpecError(f"dense adjacency limited to n <= {DENSE_LIMIT}")
            a = np.zeros((self.n, self.n), dtype=np.uint8)
            if self.edge_count:
                a[self.edges[:, 0], self.edges[:, 1]] = 1
                a[self.edges[:, 1], self.edges[:, 0]] = 1
            self._dense = a
        return self._dense

    def edge_density(self) -> float:
        return 2.0 * self.edge_count / (self.n * (self.n - 1))

    def require_latents(self, operation: str) -> np.ndarray:
        if self.latents is None:
            raise SpecError(f"{operation} needs latent positions, which this graph does not carry")
        return self.latents

    def validate(self) -> None:
        """Check structural invariants; used by tests."""
        if self.edges.size:
            assert np.all(self.edges[:, 0] < self.edges[:, 1])
            flat = self.edges[:, 0] * self.n + self.edges[:, 1]
            assert np.unique(flat).size == flat.size
        assert self.edge_count == self.edges.shape[0]
        deg = np.zeros(self.n, dtype=np.int64)
        if self.edges.size:
            deg = np.bincount(self.edges[:, 0], minlength=self.n) + np.bincount(
                self.edges[:, 1], minlength=self.n
            )
        assert np.array_equal(deg, self.degrees)
        for i, nb in enumerate(self.neighbors):
            assert np.all(np.diff(nb) > 0) if nb.size > 1 else True
            assert nb.size == self.degrees[i]


def sample_graph(spec: GraphonSpec, n: int, seed: int) -> LatentGraph:
    """Draw a graph of size n; deterministic given the seed.

    Latents and every adjacency row consume their own RNG streams, so the
    draw is reproducible row by row and later sampling cannot perturb it.
    """
    if n < 2:
        raise SpecError("need at least two vertices")
    rho = spec.rho_at(n)
    latents = rng_stream(seed, 0).random(n)
    us, vs = [], []
    for i in range(n - 1):
        tail = latents[i + 1 :]
        p = rho * family_values(spec.family, latents[i], tail)
        hits = np.nonzero(rng_stream(seed, 1, i).random(n - 1 - i) < p)[0]
        if hits.size:
            us.append(np.full(hits.size, i, dtype=np.int64))
            vs.append(i + 1 + hits.astype(np.int64))
    if us:
        edges = np.column_stack((np.concatenate(us), np.concatenate(vs)))
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    return LatentGraph.build(n, edges, latents=latents, rho=rho)


def write_edge_list(graph: LatentGraph, path) -> None:
    """One "u v" pair per line, 0-indexed, u < v."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def write_latents(graph: LatentGraph, path) -> None:
    """Sidecar latents file, one position per line."""
    lat = graph.require_latents("latents export")
    with open(path, "w", encoding="utf-8") as fh:
        for x in lat:
            fh.write(f"{float(x)!r}\n")
