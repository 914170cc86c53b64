"""Subsampling schemes over latent-position graphs.

Three schemes are implemented: uniform vertex sampling (the induced
subgraph), uniform edge sampling with unigram negatives, and a stationary
simple random walk with unigram negatives. A subsample is a vertex set plus
disjoint sets of positive (edge) and negative (non-edge) vertex pairs;
pairs are deduplicated, so membership is all that matters downstream.

A Monte Carlo estimator of per-pair and per-vertex inclusion probabilities
doubles as the verification oracle for the closed-form weight functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphon import DENSE_LIMIT, LatentGraph, SpecError
from .utils import rng_stream

_EMPTY_PAIRS = np.empty((0, 2), dtype=np.int64)


@dataclass(frozen=True)
class DegreePower:
    """Unigram weights proportional to deg(v)**alpha."""


@dataclass(frozen=True)
class ExactCombinatorial:
    """Unigram weights from the exact edge-draw inclusion probability."""


@dataclass(frozen=True)
class MonteCarlo:
    """Unigram weights from estimated stage-one inclusion probabilities."""

    reps: int = 1000
    seed: int = 0


UnigramBackend = DegreePower | ExactCombinatorial | MonteCarlo


@dataclass(frozen=True)
class UniformVertex:
    """Draw k vertices without replacement; report the induced subgraph."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise SpecError("vertex sample size k must be >= 1")


@dataclass(frozen=True)
class UniformEdge:
    """Draw k edges without replacement, then l unigram negatives per endpoint."""

    k: int
    l: int
    alpha: float = 1.0
    unigram: UnigramBackend = DegreePower()

    def __post_init__(self):
        if self.k < 1:
            raise SpecError("edge sample size k must be >= 1")
        if self.l < 0:
            raise SpecError("negative sample count l must be >= 0")
        if self.alpha <= 0:
            raise SpecError("unigram exponent alpha must be positive")


@dataclass(frozen=True)
class RandomWalk:
    """Walk k steps from stationarity, then l unigram negatives per position."""

    k: int
    l: int
    alpha: float = 1.0
    unigram: UnigramBackend = DegreePower()

    def __post_init__(self):
        if self.k < 1:
            raise SpecError("walk length k must be >= 1")
        if self.l < 0:
            raise SpecError("negative sample count l must be >= 0")
        if self.alpha <= 0:
            raise SpecError("unigram exponent alpha must be positive")


SchemeConfig = UniformVertex | UniformEdge | RandomWalk


@dataclass(eq=False)
class Subsample:
    """Vertex set plus deduplicated positive and negative pair sets.

    Pairs are stored canonically (u < v, unique rows); positives are edges
    of the source graph and negatives are non-edges, so the two sets are
    disjoint by construction.
    """

    vertices: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def pair_vertices(self) -> np.ndarray:
        """Endpoints of the positive and negative pairs (sorted, unique)."""
        both = np.concatenate([self.positives.ravel(), self.negatives.ravel()])
        return np.unique(both).astype(np.int64)

    def check(self, graph: LatentGraph) -> None:
        """Raise if any structural invariant fails; used by property tests."""
        vset = set(self.vertices.tolist())
        for u, v in self.positives:
            if not graph.has_edge(int(u), int(v)):
                raise AssertionError(f"positive pair ({u}, {v}) is not an edge")
        for u, v in self.negatives:
            if u == v or graph.has_edge(int(u), int(v)):
                raise AssertionError(f"negative pair ({u}, {v}) is not a non-edge")
        for pairs in (self.positives, self.negatives):
            if pairs.size:
                if not np.all(pairs[:, 0] < pairs[:, 1]):
                    raise AssertionError("pairs must be stored with u < v")
                flat = pairs[:, 0] * graph.n + pairs[:, 1]
                if np.unique(flat).size != flat.size:
                    raise AssertionError("pair sets must be deduplicated")
        for w in self.pair_vertices():
            if int(w) not in vset:
                raise AssertionError(f"pair endpoint {w} missing from the vertex set")
        pos = {(int(u), int(v)) for u, v in self.positives}
        neg = {(int(u), int(v)) for u, v in self.negatives}
        if pos & neg:
            raise AssertionError("positive and negative sets overlap")


def _draw_without_replacement(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Partial Fisher-Yates: k distinct indices from range(n), unbiased."""
    idx = np.arange(n, dtype=np.int64)
    for i in range(k):
        j = i + int(rng.integers(n - i))
        idx[i], idx[j] = idx[j], idx[i]
    return idx[:k].copy()


def _unique_pairs(u: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    if u.size == 0:
        return _EMPTY_PAIRS
    lo = np.minimum(u, v).astype(np.int64)
    hi = np.maximum(u, v).astype(np.int64)
    flat = np.unique(lo * n + hi)
    return np.column_stack((flat // n, flat % n))


@dataclass(eq=False)
class _UnigramSampler:
    """Categorical sampler over vertices with fixed weights (cdf + searchsorted)."""

    cum: np.ndarray

    @classmethod
    def from_weights(cls, weights: np.ndarray) -> "_UnigramSampler":
        total = float(weights.sum())
        if not total > 0:
            raise SpecError("unigram weights vanish everywhere")
        return cls(np.cumsum(weights))

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size) * self.cum[-1]
        return np.searchsorted(self.cum, u, side="right").astype(np.int64)


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _mc_stage_one_inclusion(
    graph: LatentGraph, scheme: UniformEdge | RandomWalk, reps: int, seed: int
) -> np.ndarray:
    """Estimate P(v in the stage-one vertex set) by replication."""
    counts = np.zeros(graph.n, dtype=np.int64)
    for r in range(reps):
        rng = rng_stream(seed, 3, r)
        if isinstance(scheme, UniformEdge):
            eidx = _draw_without_replacement(rng, graph.edge_count, scheme.k)
            counts[np.unique(graph.edges[eidx])] += 1
        else:
            path = _stationary_walk(graph, scheme.k, rng)
            # The walk unigram is defined through the first k positions.
            counts[np.unique(path[: scheme.k])] += 1
    return counts / reps


def unigram_weights(graph: LatentGraph, scheme: SchemeConfig) -> np.ndarray:
    """Per-vertex unigram weights under the scheme's backend (unnormalized)."""
    if isinstance(scheme, UniformVertex):
        raise SpecError("uniform vertex sampling draws no unigram negatives")
    backend = scheme.unigram
    deg = graph.degrees.astype(float)
    if isinstance(backend, DegreePower):
        w = deg**scheme.alpha
    elif isinstance(backend, ExactCombinatorial):
        if isinstance(scheme, RandomWalk):
            raise SpecError(
                "exact combinatorial weights exist only for uniform edge sampling; "
                "walk inclusion has no closed form"
            )
        m, k = graph.edge_count, scheme.k
        if k > m:
            raise SpecError(f"cannot draw {k} of {m} edges")
        log_cmk = _log_comb(m, k)
        miss = np.zeros(graph.n)
        for d in np.unique(graph.degrees):
            mask = graph.degrees == d
            miss[mask] = 0.0 if m - d < k else math.exp(_log_comb(m - int(d), k) - log_cmk)
        w = (1.0 - miss) ** scheme.alpha
    elif isinstance(backend, MonteCarlo):
        if backend.reps < 1:
            raise SpecError("Monte Carlo unigram backend needs reps >= 1")
        w = _mc_stage_one_inclusion(graph, scheme, backend.reps, backend.seed) ** scheme.alpha
    else:
        raise SpecError(f"unknown unigram backend {type(backend).__name__}")
    if not w.sum() > 0:
        raise SpecError("unigram weights vanish everywhere")
    return w


def _non_edge_mask(graph: LatentGraph, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    if graph.n <= DENSE_LIMIT:
        return graph.dense_adjacency()[us, vs] == 0
    return np.fromiter(
        (not graph.has_edge(int(a), int(b)) for a, b in zip(us, vs)), bool, us.size
    )


def _unigram_negatives(
    graph: LatentGraph,
    sources: np.ndarray,
    l: int,
    sampler: _UnigramSampler,
    rng: np.random.Generator,
) -> np.ndarray:
    """l unigram draws per source; self-draws are redrawn, edges dropped."""
    if l == 0 or sources.size == 0:
        return _EMPTY_PAIRS
    src = np.repeat(sources.astype(np.int64), l)
    draws = sampler.draw(rng, src.size)
    for _ in range(64):
        self_hit = draws == src
        if not self_hit.any():
            break
        draws[self_hit] = sampler.draw(rng, int(self_hit.sum()))
    else:
        raise SpecError("unigram distribution concentrates on the source vertex")
    keep = _non_edge_mask(graph, src, draws)
    return _unique_pairs(src[keep], draws[keep], graph.n)


def _stationary_walk(graph: LatentGraph, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-step simple random walk started from the degree-biased distribution."""
    cumdeg = np.cumsum(graph.degrees)
    cur = int(np.searchsorted(cumdeg, rng.integers(cumdeg[-1]), side="right"))
    path = np.empty(k + 1, dtype=np.int64)
    path[0] = cur
    for t in range(1, k + 1):
        nb = graph.neighbors[cur]
        cur = int(nb[rng.integers(nb.size)])
        path[t] = cur
    return path


def _walk_subsample(
    graph: LatentGraph,
    path: np.ndarray,
    l: int,
    sampler: _UnigramSampler | None,
    rng: np.random.Generator,
) -> Subsample:
    positives = _unique_pairs(path[:-1], path[1:], graph.n)
    if l > 0:
        negatives = _unigram_negatives(graph, path, l, sampler, rng)
    else:
        negatives = _EMPTY_PAIRS
    vertices = np.unique(np.concatenate([path, negatives.ravel()]))
    return Subsample(vertices, positives, negatives)


def _uniform_vertex_draw(graph: LatentGraph, k: int, rng: np.random.Generator) -> Subsample:
    if not 1 <= k <= graph.n:
        raise SpecError(f"cannot draw {k} of {graph.n} vertices")
    verts = np.sort(_draw_without_replacement(rng, graph.n, k))
    if k == 1:
        return Subsample(verts, _EMPTY_PAIRS, _EMPTY_PAIRS)
    sub = graph.dense_adjacency()[np.ix_(verts, verts)]
    iu, ju = np.triu_indices(k, 1)
    hit = sub[iu, ju].astype(bool)
    positives = np.column_stack((verts[iu[hit]], verts[ju[hit]]))
    negatives = np.column_stack((verts[iu[~hit]], verts[ju[~hit]]))
    return Subsample(verts, positives.astype(np.int64), negatives.astype(np.int64))


def _uniform_edge_draw(
    graph: LatentGraph, cfg: UniformEdge, rng: np.random.Generator, sampler: _UnigramSampler | None
) -> Subsample:
    if cfg.k > graph.edge_count:
        raise SpecError(f"cannot draw {cfg.k} of {graph.edge_count} edges")
    eidx = _draw_without_replacement(rng, graph.edge_count, cfg.k)
    positives = graph.edges[np.sort(eidx)]
    stage_one = np.unique(positives)
    if cfg.l > 0:
        negatives = _unigram_negatives(graph, stage_one, cfg.l, sampler, rng)
    else:
        negatives = _EMPTY_PAIRS
    vertices = np.unique(np.concatenate([stage_one, negatives.ravel()]))
    return Subsample(vertices, positives, negatives)


def _random_walk_draw(
    graph: LatentGraph, cfg: RandomWalk, rng: np.random.Generator, sampler: _UnigramSampler | None
) -> Subsample:
    if graph.edge_count < 1:
        raise SpecError("random walks need at least one edge")
    path = _stationary_walk(graph, cfg.k, rng)
    return _walk_subsample(graph, path, cfg.l, sampler, rng)


def _make_sampler(graph: LatentGraph, scheme: SchemeConfig) -> _UnigramSampler | None:
    if isinstance(scheme, UniformVertex) or scheme.l == 0:
        return None
    return _UnigramSampler.from_weights(unigram_weights(graph, scheme))


def _draw(
    graph: LatentGraph,
    scheme: SchemeConfig,
    rng: np.random.Generator,
    sampler: _UnigramSampler | None,
) -> Subsample:
    if isinstance(scheme, UniformVertex):
        return _uniform_vertex_draw(graph, scheme.k, rng)
    if isinstance(scheme, UniformEdge):
        return _uniform_edge_draw(graph, scheme, rng, sampler)
    if isinstance(scheme, RandomWalk):
        return _random_walk_draw(graph, scheme, rng, sampler)
    raise SpecError(f"unknown scheme {type(scheme).__name__}")


def uniform_vertex_sample(graph: LatentGraph, k: int, seed: int) -> Subsample:
    """Induced subgraph on k vertices drawn uniformly without replacement."""
    return _uniform_vertex_draw(graph, k, rng_stream(seed))


def uniform_edge_sample(graph: LatentGraph, cfg: UniformEdge, seed: int) -> Subsample:
    """k uniform edges plus l unigram negatives per sampled endpoint."""
    return _uniform_edge_draw(graph, cfg, rng_stream(seed), _make_sampler(graph, cfg))


def random_walk_sample(graph: LatentGraph, cfg: RandomWalk, seed: int) -> Subsample:
    """Stationary k-step walk plus l unigram negatives per path position."""
    return _random_walk_draw(graph, cfg, rng_stream(seed), _make_sampler(graph, cfg))


def draw_subsample(graph: LatentGraph, scheme: SchemeConfig, seed: int) -> Subsample:
    """Dispatch on the scheme kind."""
    return _draw(graph, scheme, rng_stream(seed), _make_sampler(graph, scheme))


@dataclass(eq=False)
class InclusionProbabilities:
    """Monte Carlo pair and vertex inclusion frequencies for a scheme.

    Pair counts are kept dense on the upper triangle (desk scale), which is
    what the binned verification checks consume.
    """

    pair_counts: np.ndarray
    vertex_counts: np.ndarray
    reps: int
    provenance: str

    def vertex_probs(self) -> np.ndarray:
        return self.vertex_counts / self.reps

    def pair_prob(self, i: int, j: int) -> float:
        lo, hi = (i, j) if i < j else (j, i)
        return float(self.pair_counts[lo, hi]) / self.reps

    def pair_prob_matrix(self) -> np.ndarray:
        sym = self.pair_counts + self.pair_counts.T
        return sym / self.reps

    def pair_probs(self) -> dict[tuple[int, int], float]:
        """Dict view of the nonzero pair frequencies (small graphs only)."""
        us, vs = np.nonzero(self.pair_counts)
        return {
            (int(u), int(v)): float(self.pair_counts[u, v]) / self.reps for u, v in zip(us, vs)
        }


def mc_inclusion_probabilities(
    graph: LatentGraph, scheme: SchemeConfig, reps: int, seed: int
) -> InclusionProbabilities:
    """Replicate the scheme and count pair / vertex memberships.

    Each replicate consumes its own derived stream, so results do not
    depend on evaluation order and are exactly reproducible.
    """
    if reps < 1:
        raise SpecError("need at least one replicate")
    if graph.n > DENSE_LIMIT:
        raise SpecError("dense pair counting is desk scale only")
    sampler = _make_sampler(graph, scheme)
    pair_counts = np.zeros((graph.n, graph.n), dtype=np.int32)
    flat = pair_counts.reshape(-1)
    vertex_counts = np.zeros(graph.n, dtype=np.int64)
    # Key prefix 2 keeps replicate streams disjoint from graph-draw streams.
    for r in range(reps):
        s = _draw(graph, scheme, rng_stream(seed, 2, r), sampler)
        pairs = (
            np.concatenate([s.positives, s.negatives])
            if s.negatives.size
            else s.positives
        )
        if pairs.size:
            flat[pairs[:, 0] * graph.n + pairs[:, 1]] += 1
        vertex_counts[s.vertices] += 1
    return InclusionProbabilities(
        pair_counts, vertex_counts, reps, provenance=f"monte-carlo({reps})"
    )


def write_pair_labels(sub: Subsample, path) -> None:
    """Debug export: one "u v 1" line per positive, "u v 0" per negative."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in sub.positives:
            fh.write(f"{u} {v} 1\n")
        for u, v in sub.negatives:
            fh.write(f"{u} {v} 0\n")
