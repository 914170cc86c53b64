"""Verification experiments and link-prediction evaluation.

The verification side checks, at desk scale, that (i) Monte Carlo inclusion
rates track the closed-form weight functions, (ii) the trained minimal risk
approaches the discretized population minimum as graphs grow, (iii) trained
gram matrices approach the population kernel entrywise, and (iv) the
penalty shrinks norms and singular values monotonically. The evaluation
side scores embeddings on held-out edges with Hadamard pair features and a
from-scratch logistic classifier.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .formulas import RiskWeights, scheme_weights
from .graphon import GraphonSpec, LatentGraph, SpecError, degree_function, sample_graph
from .population import (
    StepKernel,
    discretize_weights,
    kkt_residual,
    minimize_psd,
    population_value,
)
from .risk import RiskConfig, cross_entropy, sigmoid, weighted_risk_fn
from .sampler import SchemeConfig, _draw_without_replacement, mc_inclusion_probabilities
from .trainer import (
    EmbeddingMatrix,
    ProjectedGradient,
    TrainConfig,
    projected_descent,
    train_full,
    train_sgd,
)
from .utils import rng_stream


@dataclass(eq=False)
class VerificationReport:
    """Per-n and per-xi records of a verification run, plus run metadata."""

    kind: str
    records: list[dict] = field(default_factory=list)
    xi_records: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        for rec in self.records + self.xi_records:
            for key, val in rec.items():
                if isinstance(val, float) and not np.isfinite(val):
                    raise SpecError(f"report field {key} is not finite")
                if key == "gap" and val < 0:
                    raise SpecError("gaps are absolute values and must be non-negative")

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "records": self.records,
            "xi_records": self.xi_records,
            "metadata": self.metadata,
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def _bin_index(lam: np.ndarray, bins: int) -> np.ndarray:
    return np.minimum((lam * bins).astype(int), bins - 1)


def verify_inclusion_rates(
    spec: GraphonSpec,
    scheme: SchemeConfig,
    n_list,
    reps: int,
    bins: int,
    seed: int,
) -> VerificationReport:
    """Binned ratio check of Monte Carlo inclusion rates against formulas.

    Per-pair probabilities are O(1/n^2), far below Monte Carlo resolution,
    so pairs are pooled into (latent cell, latent cell, label) bins and the
    bin-average rate is compared with the bin-average formula value. Bins
    whose expected hit count is below 100 are flagged and skipped.
    """
    report = VerificationReport(
        kind="inclusion-rates",
        metadata={"reps": reps, "bins": bins, "seed": seed, "scheme": repr(scheme)},
    )
    alpha = getattr(scheme, "alpha", 1.0)
    deg = degree_function(spec, alphas=(1.0, alpha))
    for idx, n in enumerate(n_list):
        graph = sample_graph(spec, n, seed + idx)
        lam = graph.require_latents("inclusion verification")
        ip = mc_inclusion_probabilities(graph, scheme, reps, seed + 1000 + idx)
        weights = scheme_weights(scheme, deg, graph.rho, lam)

        vb = _bin_index(lam, bins)
        vhat = ip.vertex_probs()
        gvals = weights.vertex_array(n)
        vertex_err = 0.0
        for b in range(bins):
            mask = vb == b
            if not mask.any():
                continue
            ratio = n * vhat[mask].mean() / gvals[mask].mean()
            vertex_err = max(vertex_err, abs(ratio - 1.0))

        iu, ju = np.triu_indices(n, 1)
        counts = ip.pair_counts[iu, ju].astype(float)
        labels = graph.dense_adjacency()[iu, ju].astype(np.int64)
        fvals = weights.pair_values(iu, ju, labels)
        blo = np.minimum(vb[iu], vb[ju])
        bhi = np.maximum(vb[iu], vb[ju])
        key = (blo * bins + bhi) * 2 + labels
        nkeys = bins * bins * 2
        hit_sum = np.bincount(key, weights=counts, minlength=nkeys)
        f_sum = np.bincount(key, weights=fvals, minlength=nkeys)
        pair_err = 0.0
        undersampled = 0
        for kbin in range(nkeys):
            if f_sum[kbin] <= 0:
                continue
            expected_hits = f_sum[kbin] / n**2 * reps
            if expected_hits < 100:
                undersampled += 1
                continue
            ratio = n**2 * hit_sum[kbin] / (reps * f_sum[kbin])
            pair_err = max(pair_err, abs(ratio - 1.0))

        report.records.append(
            {
                "n": int(n),
                "rho": float(graph.rho),
                "max_pair_ratio_error": float(pair_err),
                "max_vertex_ratio_error": float(vertex_err),
                "undersampled_bins": int(undersampled),
            }
        )
    report.validate()
    return report


def _population_minimum(spec, scheme, xi, kappa, rho, cache):
    key = round(float(rho), 12)
    if key not in cache:
        dw = discretize_weights(spec, rho, scheme, kappa)
        kern = minimize_psd(dw, xi)
        cache[key] = (dw, kern, population_value(kern, dw, xi))
    return cache[key]


def verify_value_convergence(
    spec: GraphonSpec,
    scheme: SchemeConfig,
    n_list,
    xi: float,
    d: int,
    box_bound: float,
    kappa: int,
    seed: int,
    opt: ProjectedGradient | None = None,
    restarts: int = 1,
) -> VerificationReport:
    """Gap between the trained minimal risk and the population minimum."""
    report = VerificationReport(
        kind="value-convergence",
        metadata={"xi": xi, "d": d, "kappa": kappa, "seed": seed, "scheme": repr(scheme)},
    )
    alpha = getattr(scheme, "alpha", 1.0)
    deg = degree_function(spec, alphas=(1.0, alpha))
    cache: dict = {}
    for idx, n in enumerate(n_list):
        graph = sample_graph(spec, n, seed + idx)
        lam = graph.require_latents("value-convergence verification")
        weights = scheme_weights(scheme, deg, graph.rho, lam)
        cfg = TrainConfig(
            d=d,
            box_bound=box_bound,
            xi=xi,
            optimizer=opt or ProjectedGradient(),
            restarts=restarts,
            seed=seed + 31 * idx,
        )
        _, trace = train_full(graph, weights, cfg)
        _, _, pop_min = _population_minimum(spec, scheme, xi, kappa, graph.rho, cache)
        report.records.append(
            {
                "n": int(n),
                "rho": float(graph.rho),
                "empirical_min": float(trace[-1]),
                "population_min": float(pop_min),
                "gap": float(abs(trace[-1] - pop_min)),
            }
        )
    report.validate()
    return report


def verify_gram_convergence(
    spec: GraphonSpec,
    scheme: SchemeConfig,
    n_list,
    xi: float,
    d: int,
    box_bound: float,
    kappa: int,
    seed: int,
    opt: ProjectedGradient | None = None,
    restarts: int = 1,
) -> VerificationReport:
    """Mean absolute gap between trained grams and the population kernel."""
    report = VerificationReport(
        kind="gram-convergence",
        metadata={"xi": xi, "d": d, "kappa": kappa, "seed": seed, "scheme": repr(scheme)},
    )
    alpha = getattr(scheme, "alpha", 1.0)
    deg = degree_function(spec, alphas=(1.0, alpha))
    cache: dict = {}
    for idx, n in enumerate(n_list):
        graph = sample_graph(spec, n, seed + idx)
        lam = graph.require_latents("gram-convergence verification")
        weights = scheme_weights(scheme, deg, graph.rho, lam)
        cfg = TrainConfig(
            d=d,
            box_bound=box_bound,
            xi=xi,
            optimizer=opt or ProjectedGradient(),
            restarts=restarts,
            seed=seed + 31 * idx,
        )
        emb, _ = train_full(graph, weights, cfg)
        _, kern, _ = _population_minimum(spec, scheme, xi, kappa, graph.rho, cache)
        cells = np.minimum((lam * kern.kappa).astype(int), kern.kappa - 1)
        target = kern.kernel()[np.ix_(cells, cells)]
        gram = emb.rows @ emb.rows.T
        deviation = float(np.mean(np.abs(gram - target)))
        report.records.append(
            {"n": int(n), "rho": float(graph.rho), "deviation": deviation}
        )
    report.validate()
    return report


def shrinkage_curve(
    graph: LatentGraph,
    weights: RiskWeights,
    xi_grid,
    cfg: TrainConfig,
) -> VerificationReport:
    """Train along an ascending penalty grid, warm-starting each solve.

    Records the mean squared row norm, the gram trace, and the top gram
    singular values per penalty, plus the risk at the zero embedding (the
    comparison point for the shrinkage bound).
    """
    xi_grid = [float(x) for x in xi_grid]
    if sorted(xi_grid) != xi_grid:
        raise SpecError("the penalty grid must be sorted ascending")
    opt = cfg.optimizer
    if not isinstance(opt, ProjectedGradient):
        raise SpecError("shrinkage curves use the projected gradient optimizer")
    bound = cfg.box_bound

    def clip(rows):
        return np.clip(rows, -bound, bound)

    n = graph.n
    risk_at_zero, _ = weighted_risk_fn(weights, graph, RiskConfig(xi=0.0))(np.zeros((n, cfg.d)))
    report = VerificationReport(
        kind="shrinkage",
        metadata={"d": cfg.d, "seed": cfg.seed, "risk_at_zero": float(risk_at_zero)},
    )
    scale = cfg.init_scale()
    rows = np.clip(scale * rng_stream(cfg.seed, 101, 0).standard_normal((n, cfg.d)), -bound, bound)
    for xi in xi_grid:
        fn = weighted_risk_fn(weights, graph, RiskConfig(xi=xi))
        rows, trace, _ = projected_descent(fn, rows, clip, opt)
        sv = np.linalg.svd(rows, compute_uv=False)
        gram_eigs = np.sort(sv**2)[::-1][:10]
        frob = float(np.sum(rows**2))
        report.xi_records.append(
            {
                "xi": float(xi),
                "mean_sq_norm": frob / n,
                "trace": frob,
                "objective": float(trace[-1]),
                "top_singular_values": [float(s) for s in gram_eigs],
            }
        )
    report.validate()
    return report


def roc_auc(scores, labels) -> float:
    """Rank statistic with tie-averaged ranks; equals the probability that a
    positive outranks a negative (ties counted half)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    npos = int(pos.sum())
    nneg = labels.size - npos
    if npos == 0 or nneg == 0:
        raise SpecError("AUC needs at least one example of each class")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=float)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - npos * (npos + 1) / 2.0) / (npos * nneg)


def pr_auc(scores, labels) -> float:
    """Average precision with step-wise interpolation, deterministic ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    npos = int(np.sum(labels == 1))
    if npos == 0 or npos == labels.size:
        raise SpecError("average precision needs both classes")
    order = np.argsort(-scores, kind="mergesort")
    hits = (labels[order] == 1).astype(float)
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, labels.size + 1)
    return float(np.sum(precision * hits) / npos)


def train_logistic(features, labels, l2: float = 1e-4, iters: int = 10000) -> np.ndarray:
    """Gradient descent on the l2-penalized logistic loss.

    Returns the weight vector with the intercept appended last; stops at
    gradient max-norm 1e-6 or the iteration cap. The intercept is not
    penalized.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or y.shape[0] != x.shape[0]:
        raise SpecError("features must be (m, d) with one label per row")
    if np.all(y == y[0]):
        raise SpecError("logistic training needs at least one example of each class")
    xb = np.column_stack([x, np.ones(x.shape[0])])
    w = np.zeros(xb.shape[1])
    m = xb.shape[0]
    reg = np.full(xb.shape[1], float(l2))
    reg[-1] = 0.0

    def loss_grad(wv):
        z = xb @ wv
        value = float(np.mean(cross_entropy(z, y))) + float(np.sum(reg * wv**2))
        grad = xb.T @ (sigmoid(z) - y) / m + 2.0 * reg * wv
        return value, grad

    value, grad = loss_grad(w)
    lr = 1.0
    for _ in range(iters):
        if np.abs(grad).max() <= 1e-6:
            break
        for _ in range(60):
            cand = w - lr * grad
            cval, cgrad = loss_grad(cand)
            if np.isfinite(cval) and cval <= value:
                break
            lr *= 0.5
        else:
            raise SpecError("logistic training step size collapsed")
        w, value, grad = cand, cval, cgrad
        lr = min(lr * 1.5, 1e4)
    return w


@dataclass(frozen=True)
class LinkPredictionResult:
    """Held-out-edge scores, averaged over repeated fresh splits."""

    roc_auc: float
    roc_std: float
    pr_auc: float
    pr_std: float
    holdout_frac: float
    classifier_frac: float
    repeats: int
    isolated_flagged: int

    def __post_init__(self):
        if not (0.0 <= self.roc_auc <= 1.0 and 0.0 <= self.pr_auc <= 1.0):
            raise SpecError("AUCs must lie in [0, 1]")
        if self.roc_std < 0 or self.pr_std < 0:
            raise SpecError("standard deviations must be non-negative")


def sample_non_edges(graph: LatentGraph, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform distinct non-edges by rejection (documented; sparse graphs
    make exhaustive enumeration infeasible)."""
    found: set[int] = set()
    n = graph.n
    adjacency = graph.dense_adjacency()
    guard = 0
    while len(found) < count:
        need = count - len(found)
        us = rng.integers(n, size=2 * need + 8)
        vs = rng.integers(n, size=2 * need + 8)
        ok = (us != vs) & (adjacency[us, vs] == 0)
        for u, v in zip(us[ok], vs[ok]):
            lo, hi = (u, v) if u < v else (v, u)
            found.add(int(lo) * n + int(hi))
            if len(found) == count:
                break
        guard += 1
        if guard > 10000:
            raise SpecError("could not find enough non-edges; the graph is too dense")
    flat = np.fromiter(sorted(found), dtype=np.int64, count=count)
    return np.column_stack((flat // n, flat % n))


def _hadamard_features(rows: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return rows[pairs[:, 0]] * rows[pairs[:, 1]]


def _score_embeddings(rows, test_pos, test_neg, classifier_frac, rng):
    pairs = np.vstack([test_pos, test_neg])
    labels = np.concatenate([np.ones(len(test_pos)), np.zeros(len(test_neg))])
    feats = _hadamard_features(rows, pairs)
    # Stratified classifier split keeps both classes present.
    n_pos_cl = max(1, int(round(classifier_frac * len(test_pos))))
    n_neg_cl = max(1, int(round(classifier_frac * len(test_neg))))
    pos_perm = rng.permutation(len(test_pos))
    neg_perm = len(test_pos) + rng.permutation(len(test_neg))
    cl_idx = np.concatenate([pos_perm[:n_pos_cl], neg_perm[:n_neg_cl]])
    ev_idx = np.concatenate([pos_perm[n_pos_cl:], neg_perm[n_neg_cl:]])
    if np.unique(labels[ev_idx]).size < 2:
        raise SpecError("degenerate split: the evaluation set has a single class")
    w = train_logistic(feats[cl_idx], labels[cl_idx])
    scores = np.column_stack([feats[ev_idx], np.ones(len(ev_idx))]) @ w
    return roc_auc(scores, labels[ev_idx]), pr_auc(scores, labels[ev_idx])


def link_prediction_eval(
    graph: LatentGraph,
    scheme: SchemeConfig,
    cfg: TrainConfig,
    split: tuple[float, float] = (0.1, 0.1),
    repeats: int = 3,
    seed: int = 0,
    runs_per_epoch: int = 10,
    embedding_rows: np.ndarray | None = None,
) -> LinkPredictionResult:
    """Hold out edges and matched non-edges, train on the rest, and score
    held-out pairs with Hadamard features plus a logistic classifier.

    ``embedding_rows`` bypasses training (e.g. to score random embeddings
    as a control).
    """
    holdout_frac, classifier_frac = split
    if not 0.0 < holdout_frac < 1.0 or not 0.0 < classifier_frac < 1.0:
        raise SpecError("split fractions must lie in (0, 1)")
    if repeats < 1:
        raise SpecError("need at least one repeat")
    rocs, prs = [], []
    isolated_flagged = 0
    for r in range(repeats):
        rng = rng_stream(seed, 4, r)
        m = graph.edge_count
        h = int(round(holdout_frac * m))
        if h < 2 or h >= m:
            raise SpecError("holdout leaves too few edges to train or test on")
        eidx = np.sort(_draw_without_replacement(rng, m, h))
        test_pos = graph.edges[eidx]
        keep = np.ones(m, dtype=bool)
        keep[eidx] = False
        train_graph = LatentGraph.build(
            graph.n, graph.edges[keep], latents=graph.latents, rho=graph.rho
        )
        isolated_flagged += int(np.sum(train_graph.degrees == 0))
        test_neg = sample_non_edges(graph, h, rng)
        if embedding_rows is not None:
            rows = embedding_rows
        else:
            run_cfg = dataclasses.replace(cfg, seed=cfg.seed + 7919 * r)
            rows = train_sgd(train_graph, scheme, run_cfg, runs_per_epoch).rows
        roc, pr = _score_embeddings(rows, test_pos, test_neg, classifier_frac, rng)
        rocs.append(roc)
        prs.append(pr)
    rocs = np.asarray(rocs)
    prs = np.asarray(prs)
    return LinkPredictionResult(
        roc_auc=float(rocs.mean()),
        roc_std=float(rocs.std()),
        pr_auc=float(prs.mean()),
        pr_std=float(prs.std()),
        holdout_frac=holdout_frac,
        classifier_frac=classifier_frac,
        repeats=repeats,
        isolated_flagged=isolated_flagged,
    )
