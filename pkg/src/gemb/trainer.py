"""Embedding training: full-batch projected descent and minibatch Adam.

The full-batch path minimizes the weighted empirical risk over box-bounded
embedding matrices with monotone backtracking; the stochastic path draws
fresh subsamples every epoch and applies Adam to minibatch gradients of the
subsample loss. Both are deterministic given their seed.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .formulas import RiskWeights
from .graphon import LatentGraph, SpecError
from .risk import EmbeddingMatrix, RiskConfig, stochastic_loss, weighted_risk_fn
from .sampler import (
    RandomWalk,
    SchemeConfig,
    UniformVertex,
    _draw,
    _make_sampler,
    _walk_subsample,
)
from .utils import rng_stream


class TrainingError(RuntimeError):
    """The optimizer could not make progress (typically a bad step size)."""


@dataclass(frozen=True)
class ProjectedGradient:
    lr: float = 0.05
    max_iters: int = 20000
    tol: float = 1e-9

    def __post_init__(self):
        if self.lr <= 0:
            raise SpecError("learning rate must be positive")


@dataclass(frozen=True)
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 5
    batch: int = 64

    def __post_init__(self):
        if self.lr <= 0:
            raise SpecError("learning rate must be positive")
        if self.batch < 1 or self.epochs < 1:
            raise SpecError("epochs and batch size must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    d: int = 2
    box_bound: float = 10.0
    xi: float = 0.0
    optimizer: ProjectedGradient | Adam = ProjectedGradient()
    init: str = "gaussian"
    sigma0: float | None = None
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise SpecError("embedding dimension must be >= 1")
        if self.box_bound <= 0:
            raise SpecError("box bound must be positive")
        if self.xi < 0:
            raise SpecError("penalty weight must be >= 0")
        if self.init not in ("gaussian", "zero"):
            raise SpecError(f"unknown init {self.init!r}")
        if self.restarts < 1:
            raise SpecError("need at least one restart")

    def init_scale(self) -> float:
        # Keeps initial inner products O(1) while breaking symmetry.
        return self.sigma0 if self.sigma0 is not None else 0.1 / np.sqrt(self.d)


def _init_rows(n: int, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.init == "zero":
        return np.zeros((n, cfg.d))
    rows = cfg.init_scale() * rng.standard_normal((n, cfg.d))
    return np.clip(rows, -cfg.box_bound, cfg.box_bound)


def projected_descent(fn, x0: np.ndarray, project, opt: ProjectedGradient):
    """Monotone projected gradient with halving backtracks.

    The recorded trace only ever appends accepted (non-increasing) values;
    the loop stops after ten consecutive relative drops below tol.
    """
    x = project(x0)
    value, grad = fn(x)
    if not np.isfinite(value):
        raise TrainingError("objective is not finite at the initial point")
    trace = [value]
    lr = opt.lr
    stall = 0
    converged = False
    for _ in range(opt.max_iters):
        for _ in range(60):
            cand = project(x - lr * grad)
            cval, cgrad = fn(cand)
            if np.isfinite(cval) and cval <= value:
                break
            lr *= 0.5
        else:
            raise TrainingError("learning rate collapsed after 60 backtracks")
        drop = value - cval
        x, value, grad = cand, cval, cgrad
        trace.append(value)
        if drop <= opt.tol * max(abs(value), 1e-300):
            stall += 1
            if stall >= 10:
                converged = True
                break
        else:
            stall = 0
            lr = min(lr * 1.25, opt.lr * 1024.0)
    return x, trace, converged


def train_full(
    graph: LatentGraph, weights: RiskWeights, cfg: TrainConfig
) -> tuple[EmbeddingMatrix, list[float]]:
    """Full-batch minimization of the weighted risk; best restart kept."""
    opt = cfg.optimizer
    if not isinstance(opt, ProjectedGradient):
        raise SpecError("train_full uses the projected gradient optimizer")
    fn = weighted_risk_fn(weights, graph, RiskConfig(xi=cfg.xi))
    bound = cfg.box_bound

    def clip(rows):
        return np.clip(rows, -bound, bound)

    restarts = cfg.restarts if cfg.init == "gaussian" else 1
    best_rows, best_trace = None, None
    for r in range(restarts):
        rows0 = _init_rows(graph.n, cfg, rng_stream(cfg.seed, 101, r))
        rows, trace, converged = projected_descent(fn, rows0, clip, opt)
        if not converged:
            warnings.warn(f"restart {r} stopped at max_iters without converging")
        if best_trace is None or trace[-1] < best_trace[-1]:
            best_rows, best_trace = rows, trace
    return EmbeddingMatrix(best_rows, bound), best_trace


def _epoch_subsamples(graph, scheme, runs_per_epoch, rng, sampler):
    subs = []
    if isinstance(scheme, RandomWalk):
        starts = np.nonzero(graph.degrees > 0)[0]
        for _ in range(runs_per_epoch):
            for start in rng.permutation(starts):
                path = np.empty(scheme.k + 1, dtype=np.int64)
                path[0] = start
                cur = int(start)
                for t in range(1, scheme.k + 1):
                    nb = graph.neighbors[cur]
                    cur = int(nb[rng.integers(nb.size)])
                    path[t] = cur
                subs.append(_walk_subsample(graph, path, scheme.l, sampler, rng))
    else:
        for _ in range(runs_per_epoch):
            subs.append(_draw(graph, scheme, rng, sampler))
    return subs


def train_sgd(
    graph: LatentGraph,
    scheme: SchemeConfig,
    cfg: TrainConfig,
    runs_per_epoch: int = 50,
) -> EmbeddingMatrix:
    """Minibatch Adam over fresh subsamples drawn every epoch.

    For the walk scheme one walk is started at every non-isolated vertex,
    ``runs_per_epoch`` times per epoch; the other schemes contribute
    ``runs_per_epoch`` stage draws per epoch.
    """
    opt = cfg.optimizer
    if not isinstance(opt, Adam):
        raise SpecError("train_sgd uses the Adam optimizer")
    if isinstance(scheme, UniformVertex) and scheme.k > graph.n:
        raise SpecError(f"cannot draw {scheme.k} of {graph.n} vertices")
    sampler = _make_sampler(graph, scheme)
    rows = _init_rows(graph.n, cfg, rng_stream(cfg.seed, 11))
    mom = np.zeros_like(rows)
    vel = np.zeros_like(rows)
    rcfg = RiskConfig(xi=cfg.xi)
    bound = cfg.box_bound
    step = 0
    for epoch in range(opt.epochs):
        erng = rng_stream(cfg.seed, 13, epoch)
        subs = _epoch_subsamples(graph, scheme, runs_per_epoch, erng, sampler)
        for lo in range(0, len(subs), opt.batch):
            batch = subs[lo : lo + opt.batch]
            grad = np.zeros_like(rows)
            emb = EmbeddingMatrix(rows, bound)
            for sub in batch:
                _, g = stochastic_loss(emb, sub, rcfg)
                grad += g
            grad /= len(batch)
            step += 1
            mom = opt.beta1 * mom + (1.0 - opt.beta1) * grad
            vel = opt.beta2 * vel + (1.0 - opt.beta2) * grad**2
            mhat = mom / (1.0 - opt.beta1**step)
            vhat = vel / (1.0 - opt.beta2**step)
            rows = np.clip(rows - opt.lr * mhat / (np.sqrt(vhat) + opt.eps), -bound, bound)
    return EmbeddingMatrix(rows, bound)


def gram_matrix(emb: EmbeddingMatrix) -> np.ndarray:
    """Inner-product matrix of the embedding rows (built on demand)."""
    return emb.rows @ emb.rows.T


@dataclass(frozen=True)
class GramSpectrum:
    """Squared Frobenius norm of the rows and their singular values.

    The squared singular values of the row matrix are the nonzero
    eigenvalues of the gram matrix, and their sum equals the trace, which
    is what the penalty shrinks.
    """

    frobenius_sq: float
    singular_values: np.ndarray


def gram_spectrum(emb: EmbeddingMatrix) -> GramSpectrum:
    sv = np.linalg.svd(emb.rows, compute_uv=False)
    frob = float(np.sum(emb.rows**2))
    if abs(float(np.sum(sv**2)) - frob) > 1e-8 * max(1.0, frob):
        raise ArithmeticError("singular values inconsistent with the Frobenius norm")
    return GramSpectrum(frob, sv)


def save_embeddings_csv(emb: EmbeddingMatrix, path) -> None:
    header = "id," + ",".join(f"dim{j}" for j in range(emb.d))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i, row in enumerate(emb.rows):
            fh.write(str(i) + "," + ",".join(f"{float(x)!r}" for x in row) + "\n")


def load_embeddings_csv(path, box_bound: float = 10.0) -> EmbeddingMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    rows = [[float(tok) for tok in ln.split(",")[1:]] for ln in lines[1:]]
    return EmbeddingMatrix(np.asarray(rows, dtype=float), box_bound)


_MAGIC = b"GEMB1"


def save_embeddings_binary(emb: EmbeddingMatrix, path) -> None:
    """Magic "GEMB1", little-endian u64 n and d, then n*d float64 row-major."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQ", emb.n, emb.d))
        fh.write(np.ascontiguousarray(emb.rows, dtype="<f8").tobytes())


def load_embeddings_binary(path, box_bound: float = 10.0) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != _MAGIC:
            raise SpecError(f"not an embedding file (magic {magic!r})")
        n, d = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(8 * n * d), dtype="<f8").reshape(n, d)
    return EmbeddingMatrix(data.astype(float), box_bound)
