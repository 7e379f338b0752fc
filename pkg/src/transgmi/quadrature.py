"""Gaussian expectation engine.

Three tools live here:

* Gauss-Hermite rules (physicists' weight ``exp(-t**2)``) for smooth integrands
  against a Gaussian density;
* a composite Gauss-Legendre rule over panels whose edges can be placed on the
  kinks of a piecewise nonlinearity, where Gauss-Hermite converges only
  algebraically;
* closed-form probabilities and means of Gaussian cells, evaluated in log
  space so that far-tail quantizer cells keep full precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import log_ndtr, roots_hermite

from .errors import ProbabilityUnderflow, QuadratureError

MAX_ORDER = 512
DEFAULT_ORDER = 129
CHECK_ORDER = 257

# exp(LOG_TINY) == 1e-300: smallest cell probability accepted by the cell moments
LOG_TINY = math.log(1e-300)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class GaussHermiteRule:
    """Nodes and weights integrating ``f(t) * exp(-t**2)`` over the real line.

    For orders above ~370 the outermost weights underflow to exactly zero in
    double precision; those nodes simply drop out of every sum.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=None)
def gauss_hermite_rule(order: int) -> GaussHermiteRule:
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= MAX_ORDER:
        raise ValueError(f"Gauss-Hermite order must be an integer in [1, {MAX_ORDER}], got {order!r}")
    nodes, weights = roots_hermite(int(order))
    # exact symmetry; the root finder is symmetric to ~1 ulp
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return GaussHermiteRule(int(order), nodes, weights)


def gaussian_expectation(f, mean: float, variance: float, rule: GaussHermiteRule | None = None) -> float:
    """E[f(X)] for X ~ Normal(mean, variance).

    ``f`` should accept a numpy array; scalar-only callables are vectorized.
    With ``variance == 0`` this returns ``f(mean)`` exactly.
    """
    if variance < 0:
        raise ValueError(f"variance must be nonnegative, got {variance}")
    if variance == 0:
        value = float(np.asarray(f(np.array([float(mean)])), dtype=float).reshape(-1)[0])
        if not math.isfinite(value):
            raise QuadratureError(f"integrand is not finite at {mean}")
        return value
    rule = rule or gauss_hermite_rule(DEFAULT_ORDER)
    x = mean + math.sqrt(2.0 * variance) * rule.nodes
    values = _apply(f, x)
    live = rule.weights > 0
    if not np.all(np.isfinite(values[live])):
        bad = x[live][~np.isfinite(values[live])]
        raise QuadratureError(f"integrand is not finite at node(s) {bad[:3].tolist()}")
    return float(np.dot(rule.weights[live], values[live]) / math.sqrt(math.pi))


def _apply(f, x):
    try:
        values = np.asarray(f(x), dtype=float)
        if values.shape == x.shape:
            return values
    except (TypeError, ValueError):
        pass
    return np.array([float(f(v)) for v in x])


# ---------------------------------------------------------------------------
# composite Gauss-Legendre


@lru_cache(maxsize=None)
def _legendre(order):
    t, w = leggauss(order)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def composite_rule(edges, order: int = 16):
    """Nodes and weights of a Gauss-Legendre rule on every panel ``[edges[i], edges[i+1]]``."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("need at least two panel edges")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("panel edges must be strictly increasing")
    t, w = _legendre(int(order))
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    return (mid + half * t).ravel(), (half * w).ravel()


def refine_panels(edges, accept, max_panels: int = 200_000):
    """Bisect panels until ``accept(lo, hi)`` holds for every one of them.

    ``accept`` is vectorized over arrays of panel endpoints and returns a
    boolean mask.  Raises :class:`QuadratureError` when the panel budget runs out.
    """
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    done_lo, done_hi = [], []
    while lo.size:
        ok = np.asarray(accept(lo, hi), dtype=bool)
        done_lo.append(lo[ok])
        done_hi.append(hi[ok])
        lo, hi = lo[~ok], hi[~ok]
        if lo.size:
            mid = 0.5 * (lo + hi)
            lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        if sum(a.size for a in done_lo) + lo.size > max_panels:
            raise QuadratureError(
                f"panel refinement exceeded {max_panels} panels; the integrand is "
                "too sharply peaked for the requested range"
            )
    lo = np.concatenate(done_lo)
    order = np.argsort(lo)
    return np.append(lo[order], np.concatenate(done_hi)[order][-1])


# ---------------------------------------------------------------------------
# Gaussian cells


def log_normal_pdf(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        return -0.5 * t * t - _LOG_SQRT_2PI


def _log_diff(log_big, log_small):
    # log(exp(a) - exp(b)) for a >= b
    with np.errstate(divide="ignore", invalid="ignore"):
        return log_big + np.log1p(-np.exp(log_small - log_big))


def log_cell_probability(alpha, beta):
    """log P(alpha < Z < beta) for standard normal Z, accurate in both tails."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    # (-inf, inf) sums to nan; either orientation is fine there
    with np.errstate(invalid="ignore"):
        flip = alpha + beta > 0
    a = np.where(flip, -beta, alpha)
    b = np.where(flip, -alpha, beta)
    # cell now sits (mostly) in the lower half where log_ndtr is accurate
    return _log_diff(log_ndtr(b), log_ndtr(a))


def cell_probability(alpha, beta):
    return np.exp(log_cell_probability(alpha, beta))


def _standard_truncated_mean(alpha, beta):
    # (-inf, inf) sums to nan; either orientation is fine there
    with np.errstate(invalid="ignore"):
        flip = alpha + beta > 0
    a = np.where(flip, -beta, alpha)
    b = np.where(flip, -alpha, beta)
    log_z = _log_diff(log_ndtr(b), log_ndtr(a))
    with np.errstate(over="ignore", invalid="ignore"):
        m = np.exp(log_normal_pdf(a) - log_z) - np.exp(log_normal_pdf(b) - log_z)
    # cancellation on very narrow cells can push the value a hair outside
    m = np.clip(m, a, b)
    return np.where(flip, -m, m), log_z


def truncated_gaussian_mean(lower, upper, mean: float = 0.0, variance: float = 1.0) -> float:
    """E[X | lower < X < upper] for X ~ Normal(mean, variance).

    Infinite bounds are allowed.  Raises :class:`ProbabilityUnderflow` when the
    cell probability is below 1e-300.
    """
    if not lower < upper:
        raise ValueError(f"need lower < upper, got ({lower}, {upper})")
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    s = math.sqrt(variance)
    alpha = (lower - mean) / s
    beta = (upper - mean) / s
    m, log_z = _standard_truncated_mean(np.float64(alpha), np.float64(beta))
    if not log_z >= LOG_TINY:
        raise ProbabilityUnderflow(lower, upper, float(log_z))
    return float(mean + s * m)


def truncated_gaussian_means(lower, upper, variance: float):
    """Vectorized zero-mean cell means and log probabilities.

    Returns ``(means, log_probs)``; no underflow check is applied, callers
    decide which cells to keep.
    """
    s = math.sqrt(variance)
    alpha = np.asarray(lower, dtype=float) / s
    beta = np.asarray(upper, dtype=float) / s
    m, log_z = _standard_truncated_mean(alpha, beta)
    return s * m, log_z
