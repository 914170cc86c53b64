"""Small shared helpers: deterministic RNG streams and quadrature rules."""

from __future__ import annotations

import numpy as np


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key).

    Philox is counter based, so generators built from the same seed with
    distinct keys give non-overlapping streams: consuming one stream never
    perturbs draws from another.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def composite_simpson(a: float, b: float, intervals: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the composite Simpson rule on [a, b]."""
    m = max(2, int(intervals))
    if m % 2:
        m += 1
    x = np.linspace(a, b, m + 1)
    w = np.ones(m + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (b - a) / (3.0 * m)
    return x, w


def piecewise_simpson(breaks, intervals: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Simpson applied piecewise between consecutive breakpoints.

    Breakpoints are placed at integrand discontinuities, so piecewise-smooth
    integrands are handled to machine precision piece by piece.
    """
    breaks = np.asarray(breaks, dtype=float)
    span = breaks[-1] - breaks[0]
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        k = max(2, int(round(intervals * (b - a) / span)))
        x, w = composite_simpson(a, b, k)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def gauss_legendre_cell_rule(points: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on (0, 1) with weights normalized to sum to one.

    Interior nodes only, so a rule per partition cell never evaluates the
    integrand on a cell boundary (where step functions jump).
    """
    x, w = np.polynomial.legendre.leggauss(int(points))
    return 0.5 * (x + 1.0), 0.5 * w
