"""The discretized population problem and its minimizer.

Averaging the label-weighted pair functions and the vertex weights over an
equal-width partition of [0, 1] turns the limiting risk functional into a
finite convex program over symmetric PSD kernels on the partition cells.
Two independent solvers are provided: projected descent on factored cell
embeddings (box-bounded, mirrors the trainer) and projected descent on the
full kernel matrix with eigenvalue clamping (the convex route, whose
minimizer is unique). Stationarity is certified through the fixed point of
the projected gradient map.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .formulas import scheme_weights
from .graphon import GraphonSpec, SpecError, degree_function, family_values
from .risk import cross_entropy, sigmoid
from .sampler import SchemeConfig
from .trainer import ProjectedGradient, projected_descent
from .utils import gauss_legendre_cell_rule, rng_stream

# Eigenvalues below this are treated as numerical zeros when projecting.
_PSD_FLOOR = 1e-12


@dataclass(eq=False)
class DiscretizedWeights:
    """Cell averages of the label-weighted pair functions and vertex weights.

    ``c_f[l, l', x]`` averages f(., ., x) times the chance of observing
    label x, over cell (l, l'); ``c_g[l]`` averages the vertex weight over
    cell l. Cells have equal width, so each carries mass 1/kappa.
    """

    c_f: np.ndarray
    c_g: np.ndarray
    kappa: int
    rho: float

    def __post_init__(self):
        if np.any(self.c_f < 0) or np.any(self.c_g < 0):
            raise SpecError("cell-averaged weights must be non-negative")
        if not np.allclose(self.c_f, np.transpose(self.c_f, (1, 0, 2))):
            raise SpecError("pair-weight cell averages must be symmetric")

    @property
    def cell_mass(self) -> float:
        return 1.0 / self.kappa


@dataclass(eq=False)
class StepKernel:
    """Piecewise-constant symmetric kernel on an equal-width partition.

    Either a full kappa x kappa matrix (PSD up to a small eigenvalue
    tolerance) or a factored kappa x d matrix of cell embeddings whose
    inner products induce the kernel.
    """

    kappa: int
    matrix: np.ndarray | None = None
    factors: np.ndarray | None = None
    c_g: np.ndarray | None = None
    box_bound: float | None = None

    def __post_init__(self):
        if (self.matrix is None) == (self.factors is None):
            raise SpecError("provide exactly one of matrix and factors")
        if self.matrix is not None:
            m = self.matrix
            if m.shape != (self.kappa, self.kappa) or not np.allclose(m, m.T):
                raise SpecError("full-form kernel must be a symmetric kappa x kappa matrix")
            if np.linalg.eigvalsh(0.5 * (m + m.T)).min() < -1e-8:
                raise SpecError("full-form kernel must be PSD up to 1e-8")
        else:
            if self.factors.shape[0] != self.kappa:
                raise SpecError("factored kernel needs one row per cell")
            if self.box_bound is not None and np.abs(self.factors).max() > self.box_bound:
                raise SpecError("cell embeddings exceed the box bound")

    def kernel(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return self.factors @ self.factors.T

    def value_at(self, x, y):
        """Kernel value by cell lookup; how trained grams are compared."""
        xa = np.asarray(x, dtype=float)
        ya = np.asarray(y, dtype=float)
        k = self.kernel()
        ix = np.minimum((xa * self.kappa).astype(int), self.kappa - 1)
        iy = np.minimum((ya * self.kappa).astype(int), self.kappa - 1)
        out = k[ix, iy]
        return float(out) if out.ndim == 0 else out


def discretize_weights(
    spec: GraphonSpec,
    rho: float,
    scheme: SchemeConfig,
    kappa: int,
    nodes_per_cell: int = 12,
) -> DiscretizedWeights:
    """Cell averages by per-cell Gauss-Legendre quadrature.

    Interior nodes keep step-family jumps off the quadrature points, so
    aligned partitions are averaged exactly.
    """
    if kappa < 1:
        raise SpecError("need at least one partition cell")
    alpha = getattr(scheme, "alpha", 1.0)
    deg = degree_function(spec, alphas=(1.0, alpha))
    xq, wq = gauss_legendre_cell_rule(nodes_per_cell)
    nodes = ((np.arange(kappa)[:, None] + xq[None, :]) / kappa).ravel()
    rw = scheme_weights(scheme, deg, rho, nodes)
    nq = xq.size
    total = kappa * nq
    wmat = family_values(spec.family, nodes[:, None], nodes[None, :])
    f_pos_mat = np.full((total, total), float(rw.f_pos))
    f_neg_mat = rw.neg_matrix(total)
    edge_prob = rho * wmat
    f1 = f_pos_mat * edge_prob
    f0 = f_neg_mat * (1.0 - edge_prob)
    c_f = np.empty((kappa, kappa, 2))
    c_f[:, :, 1] = np.einsum(
        "anbm,n,m->ab", f1.reshape(kappa, nq, kappa, nq), wq, wq
    )
    c_f[:, :, 0] = np.einsum(
        "anbm,n,m->ab", f0.reshape(kappa, nq, kappa, nq), wq, wq
    )
    g_nodes = rw.vertex_array(total)
    c_g = g_nodes.reshape(kappa, nq) @ wq
    c_f[:, :, 1] = 0.5 * (c_f[:, :, 1] + c_f[:, :, 1].T)
    c_f[:, :, 0] = 0.5 * (c_f[:, :, 0] + c_f[:, :, 0].T)
    return DiscretizedWeights(c_f=c_f, c_g=c_g, kappa=kappa, rho=float(rho))


def population_objective(w: DiscretizedWeights, xi: float):
    """Kernel matrix -> (value, gradient) of the discretized functional."""
    p = w.cell_mass
    ps = p * p
    c1 = w.c_f[:, :, 1]
    c0 = w.c_f[:, :, 0]
    pen = xi * p * w.c_g

    def fn(k: np.ndarray) -> tuple[float, np.ndarray]:
        value = ps * float(np.sum(c1 * cross_entropy(k, 1.0) + c0 * cross_entropy(k, 0.0)))
        value += float(np.sum(pen * np.diag(k)))
        s = sigmoid(k)
        grad = ps * (c1 * (s - 1.0) + c0 * s)
        grad = grad + np.diag(pen)
        return value, grad

    return fn


def population_value(kernel: StepKernel, w: DiscretizedWeights, xi: float) -> float:
    """Discretized functional value at a step kernel."""
    if kernel.kappa != w.kappa:
        raise SpecError("kernel and weights use different partitions")
    value, _ = population_objective(w, xi)(kernel.kernel())
    return value


def psd_project(k: np.ndarray, floor: float = _PSD_FLOOR) -> np.ndarray:
    """Nearest PSD matrix: symmetrize, clamp eigenvalues below floor to 0."""
    sym = 0.5 * (k + k.T)
    try:
        vals, vecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as err:
        raise SpecError(f"eigensolver failed on an ill-conditioned iterate: {err}") from err
    vals = np.where(vals < floor, 0.0, vals)
    return (vecs * vals) @ vecs.T


def _residual_step(w: DiscretizedWeights) -> float:
    # Undoes the cell-mass scaling so the fixed-point residual is O(1) away
    # from stationarity regardless of kappa.
    mean_weight = float(np.mean(w.c_f.sum(axis=2))) * w.cell_mass**2
    return 1.0 / mean_weight


def kkt_residual(
    kernel: StepKernel, w: DiscretizedWeights, xi: float, box_bound: float | None = None
) -> float:
    """Fixed-point residual of the projected gradient map at the kernel.

    Zero exactly at the constrained minimizer; values at or below 1e-5
    certify stationarity at the solver's tolerance. The box bound is
    accepted for interface symmetry and reporting; the cone projection does
    not use it.
    """
    k = kernel.kernel()
    _, grad = population_objective(w, xi)(k)
    s = _residual_step(w)
    moved = psd_project(k - s * grad)
    return float(np.linalg.norm(k - moved) / (1.0 + np.linalg.norm(k)))


def minimize_psd(
    w: DiscretizedWeights,
    xi: float,
    start: np.ndarray | None = None,
    max_iters: int = 20000,
    tol: float = 1e-8,
) -> StepKernel:
    """Projected gradient on the full kernel matrix over the PSD cone.

    The problem is strictly convex, so the minimizer is unique and the
    start only affects the path. Iterations stop once the normalized
    fixed-point residual falls below tol.
    """
    fn = population_objective(w, xi)
    kappa = w.kappa
    k = psd_project(np.array(start, dtype=float)) if start is not None else np.zeros((kappa, kappa))
    value, grad = fn(k)
    max_weight = float(w.c_f.sum(axis=2).max()) * w.cell_mass**2
    lr = 2.0 / max_weight
    s_res = _residual_step(w)
    converged = False
    for it in range(max_iters):
        for _ in range(60):
            cand = psd_project(k - lr * grad)
            cval, cgrad = fn(cand)
            if np.isfinite(cval) and cval <= value:
                break
            lr *= 0.5
        else:
            raise SpecError("step size collapsed while minimizing the population risk")
        k, value, grad = cand, cval, cgrad
        lr = min(lr * 1.25, 64.0 / max_weight)
        if it % 10 == 0 or it == max_iters - 1:
            moved = psd_project(k - s_res * grad)
            res = float(np.linalg.norm(k - moved) / (1.0 + np.linalg.norm(k)))
            if res <= tol:
                converged = True
                break
    if not converged:
        warnings.warn("population solver stopped at max_iters before reaching tolerance")
    return StepKernel(kappa=kappa, matrix=psd_project(k), c_g=w.c_g.copy())


def minimize_factored(
    w: DiscretizedWeights,
    xi: float,
    d: int,
    box_bound: float,
    seed: int = 0,
    opt: ProjectedGradient | None = None,
    restarts: int = 3,
) -> tuple[StepKernel, float]:
    """Projected descent over box-bounded cell embeddings (factored form).

    Non-convex in the factors, so several restarts are taken and the best
    objective kept; non-convergence is reported through a warning, not an
    error.
    """
    if d < 1:
        raise SpecError("embedding dimension must be >= 1")
    opt = opt or ProjectedGradient(lr=1.0, max_iters=20000, tol=1e-12)
    p = w.cell_mass
    ps = p * p
    c1 = w.c_f[:, :, 1]
    c0 = w.c_f[:, :, 0]
    pen = xi * p * w.c_g

    def fn(h: np.ndarray) -> tuple[float, np.ndarray]:
        y = h @ h.T
        value = ps * float(np.sum(c1 * cross_entropy(y, 1.0) + c0 * cross_entropy(y, 0.0)))
        value += float(np.sum(pen * np.sum(h**2, axis=1)))
        coefs = ps * (c1 * (sigmoid(y) - 1.0) + c0 * sigmoid(y))
        grad = 2.0 * coefs @ h + 2.0 * pen[:, None] * h
        return value, grad

    def clip(h):
        return np.clip(h, -box_bound, box_bound)

    best_h, best_val = None, np.inf
    any_converged = False
    for r in range(restarts):
        h0 = 0.1 / np.sqrt(d) * rng_stream(seed, 211, r).standard_normal((w.kappa, d))
        h, trace, converged = projected_descent(fn, h0, clip, opt)
        any_converged = any_converged or converged
        if trace[-1] < best_val:
            best_h, best_val = h, trace[-1]
    if not any_converged:
        warnings.warn("factored population solver hit max_iters on every restart")
    kern = StepKernel(kappa=w.kappa, factors=best_h, c_g=w.c_g.copy(), box_bound=box_bound)
    return kern, float(best_val)


def kernel_trace_spectrum(kernel: StepKernel) -> tuple[float, np.ndarray]:
    """Trace and eigenvalues of the kernel as an operator under the
    vertex-weighted measure.

    The discrete operator multiplies by cell mass times the cell's vertex
    weight; its eigenvalues are those of the symmetrized D^1/2 K D^1/2 and
    their sum must equal the weighted trace.
    """
    if kernel.c_g is None:
        raise SpecError("kernel carries no per-cell vertex weights")
    k = kernel.kernel()
    p = 1.0 / kernel.kappa
    scale = np.sqrt(p * kernel.c_g)
    sym = scale[:, None] * k * scale[None, :]
    eig = np.linalg.eigvalsh(sym)[::-1]
    trace = float(np.sum(p * kernel.c_g * np.diag(k)))
    if abs(float(eig.sum()) - trace) > 1e-8 * max(1.0, abs(trace)):
        raise ArithmeticError("eigenvalue sum disagrees with the weighted trace")
    return trace, eig
