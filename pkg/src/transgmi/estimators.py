"""Model-based moments, front ends and the correlation ratio.

Every expectation over the joint law of (x, y) is reduced to a weighted
point set, an :class:`OutputLaw`, carrying for each support point of y its
probability weight and the posterior mean E[x | y] there.  With that in
hand, E[x g(y)] = E[E[x|y] g(y)] and E[g(y)^2] are plain weighted sums for
any front end g.

* Finite-output (quantizer) channels: the support is the level set and the
  weights/posterior means are exact Gaussian cell sums.
* Noisy analog channels ``y = h(x) + z``: the input axis is discretized by a
  breakpoint-aware composite rule into atoms (value of h, weight,
  E[x | h(x)]), and y is integrated on a composite grid where p(y) and
  E[x|y] are Gaussian mixtures over those atoms.
* Noiseless analog channels: the atoms themselves are the law of y.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channels import ChannelModel, InputSpec
from .errors import InvalidQuery, QuadratureError
from .quadrature import (
    LOG_TINY,
    composite_rule,
    refine_panels,
    truncated_gaussian_means,
)

PANEL_ORDER = 16
TAIL = 10.0            # input axis truncated at +-TAIL standard deviations
NEGLIGIBLE = 9.0       # panels beyond this many std carry < 1e-18 mass
MAX_KERNEL = 400_000_000
CONVERGENCE_TOL = 1e-9
# panel widths: input axis in std of x, variation of h and output grid in noise std
X_FRAC = 1.0
DH_FRAC = 1.5
Y_FRAC = 1.5


@dataclass(frozen=True, eq=False)
class Atoms:
    """Discretized law of (h(x), E[x | h(x)]) on the input axis."""

    h: np.ndarray
    weight: np.ndarray
    cond_mean: np.ndarray   # E[x | h(x)] at the atom
    second: np.ndarray      # E[x^2 | atom], used for the residual check
    exact_inverse: bool     # every piece is monotone: x is a function of h(x)


@dataclass(frozen=True, eq=False)
class OutputLaw:
    y: np.ndarray
    weight: np.ndarray
    post_mean: np.ndarray

    def expect(self, values) -> float:
        return float(np.dot(self.weight, values))


@dataclass(frozen=True)
class MomentReport:
    energy: float
    cross_moment: float      # E[xy]
    output_power: float      # E[y^2]
    lmmse: float
    mmse: float
    cond_mean_power: float   # var E[x|y]
    correlation_ratio: float
    bussgang_coeff: float    # E[xy] / E_s


# ---------------------------------------------------------------------------
# input-axis atoms for analog channels


def _second_moment_cells(lo, hi, energy):
    # E[x^2 | lo < x < hi] for x ~ N(0, energy)
    s = math.sqrt(energy)
    a, b = lo / s, hi / s
    _, log_z = truncated_gaussian_means(lo, hi, energy)
    term = 0.0
    for t, sign in ((a, 1.0), (b, -1.0)):
        if math.isfinite(t):
            term += sign * t * math.exp(-0.5 * t * t - 0.5 * math.log(2 * math.pi) - float(log_z))
    return energy * (1.0 + term)


def input_atoms(channel: ChannelModel, energy: float, order: int = PANEL_ORDER) -> Atoms:
    """Discretize the input axis for an analog (continuous-output) channel."""
    if channel.is_finite:
        raise InvalidQuery("input atoms are only defined for analog channels")
    s = math.sqrt(energy)
    sigma = math.sqrt(channel.noise_var)
    h_parts, w_parts, m_parts, x2_parts = [], [], [], []
    exact = True
    # plateaus first: their level is also an endpoint of the neighbouring monotone piece
    pieces = sorted(channel.pieces(), key=lambda pc: pc.kind != "flat")
    for piece in pieces:
        if piece.kind == "flat":
            exact = False
            mean, log_p = truncated_gaussian_means(piece.lo, piece.hi, energy)
            if log_p < LOG_TINY:
                continue
            anchor = piece.hi if math.isinf(piece.lo) else piece.lo
            h_parts.append(channel.nonlinearity(np.array([anchor])))
            w_parts.append(np.array([math.exp(float(log_p))]))
            m_parts.append(np.array([float(mean)]))
            x2_parts.append(np.array([_second_moment_cells(piece.lo, piece.hi, energy)]))
            continue
        a, b = max(piece.lo, -TAIL * s), min(piece.hi, TAIL * s)
        if not a < b:
            continue
        edges = np.linspace(a, b, int(math.ceil((b - a) / (X_FRAC * s))) + 1)
        if sigma > 0:
            def accept(lo, hi):
                dh = np.abs(channel.nonlinearity(hi) - channel.nonlinearity(lo))
                far = np.minimum(np.abs(lo), np.abs(hi)) > NEGLIGIBLE * s
                far &= np.sign(lo) == np.sign(hi)
                return (dh <= DH_FRAC * sigma) | far
            edges = refine_panels(edges, accept)
        x, w = composite_rule(edges, order)
        w = w * np.exp(-0.5 * x * x / energy) / math.sqrt(2 * math.pi * energy)
        h_parts.append(channel.nonlinearity(x))
        w_parts.append(w)
        if piece.kind == "monotone":
            m_parts.append(x)
        else:
            exact = False
            m_parts.append(np.zeros_like(x))
        x2_parts.append(x * x)
    return Atoms(
        np.concatenate(h_parts),
        np.concatenate(w_parts),
        np.concatenate(m_parts),
        np.concatenate(x2_parts),
        exact,
    )


def _mixture(y, atoms: Atoms, noise_var: float, chunk: int | None = None):
    """log p(y) and E[x|y] for y = h(x) + z, z ~ N(0, noise_var)."""
    y = np.asarray(y, dtype=float)
    keep = atoms.weight > 0
    h, log_w, m = atoms.h[keep], np.log(atoms.weight[keep]), atoms.cond_mean[keep]
    if chunk is None:
        chunk = max(1, 4_000_000 // max(h.size, 1))
    log_p = np.empty(y.size)
    post = np.empty(y.size)
    flat = y.ravel()
    for start in range(0, flat.size, chunk):
        yy = flat[start : start + chunk, None]
        a = log_w - 0.5 * (yy - h) ** 2 / noise_var
        top = a.max(axis=1, keepdims=True)
        e = np.exp(a - top)
        total = e.sum(axis=1)
        log_p[start : start + chunk] = top[:, 0] + np.log(total)
        post[start : start + chunk] = (e @ m) / total
    log_p -= 0.5 * math.log(2 * math.pi * noise_var)
    return log_p.reshape(y.shape), post.reshape(y.shape)


# ---------------------------------------------------------------------------
# output laws


def _finite_law(channel: ChannelModel, energy: float):
    total = energy + channel.noise_var
    edges = np.concatenate([[-np.inf], channel.boundaries, [np.inf]])
    means, log_p = truncated_gaussian_means(edges[:-1], edges[1:], total)
    levels = np.asarray(channel.levels)
    keep = log_p >= LOG_TINY
    if not np.all(keep):
        warnings.warn(
            f"dropping unreachable output level(s) {levels[~keep].tolist()} "
            "(probability below 1e-300)",
            RuntimeWarning,
            stacklevel=3,
        )
    gain = energy / total
    return OutputLaw(levels[keep], np.exp(log_p[keep]), gain * means[keep])


@lru_cache(maxsize=128)
def _cached_law(channel: ChannelModel, energy: float, order: int):
    if channel.is_finite:
        return _finite_law(channel, energy), None
    atoms = input_atoms(channel, energy, order)
    if channel.noise_var == 0:
        return OutputLaw(atoms.h, atoms.weight, atoms.cond_mean), atoms
    sigma = math.sqrt(channel.noise_var)
    live = atoms.h[atoms.weight > 0]
    lo, hi = live.min() - TAIL * sigma, live.max() + TAIL * sigma
    n_panels = int(math.ceil((hi - lo) / (Y_FRAC * sigma)))
    if n_panels * order * live.size > MAX_KERNEL:
        raise QuadratureError(
            f"output grid of {n_panels} panels against {live.size} input atoms is too "
            "large; the noise is too small relative to the range of h"
        )
    y, w = composite_rule(np.linspace(lo, hi, n_panels + 1), order)
    log_p, post = _mixture(y, atoms, channel.noise_var)
    return OutputLaw(y, w * np.exp(log_p), post), atoms


def output_law(channel: ChannelModel, input: InputSpec, order: int = PANEL_ORDER) -> OutputLaw:
    """Weighted support of y with the posterior mean E[x|y] at each point."""
    return _cached_law(channel, float(input.energy), int(order))[0]


def _raw_moments(channel, energy, order):
    law, atoms = _cached_law(channel, energy, order)
    if channel.is_finite:
        cross = law.expect(law.y * law.post_mean)
        power = law.expect(law.y**2)
        x2 = energy
    else:
        cross = float(np.dot(atoms.weight, atoms.cond_mean * atoms.h))
        power = float(np.dot(atoms.weight, atoms.h**2)) + channel.noise_var
        x2 = float(np.dot(atoms.weight, atoms.second))
    if atoms is not None and atoms.exact_inverse and channel.noise_var == 0:
        cmp = energy  # x is a function of y: E[x|y] = x
    else:
        cmp = law.expect(law.post_mean**2)
    return cross, power, cmp, x2


def compute_moments(channel: ChannelModel, input: InputSpec, order: int = PANEL_ORDER,
                    check: bool = True) -> MomentReport:
    """All first/second moments and both estimator errors for (channel, E_s).

    With ``check`` set, analog channels are recomputed at twice the panel
    order and a disagreement above ``1e-9 * E_s`` raises
    :class:`QuadratureError`.
    """
    es = float(input.energy)
    cross, power, cmp, _ = _raw_moments(channel, es, order)
    if check and not channel.is_finite:
        again = _raw_moments(channel, es, 2 * order)[:3]
        diff = max(abs(u - v) for u, v in zip((cross, power, cmp), again))
        if diff > CONVERGENCE_TOL * es:
            raise QuadratureError(
                f"moments changed by {diff:.3e} when doubling the panel order from {order}"
            )
    cmp = min(max(cmp, 0.0), es)
    lmmse = es - cross * cross / power if power > 0 else es
    return MomentReport(
        energy=es,
        cross_moment=cross,
        output_power=power,
        lmmse=max(lmmse, 0.0),
        mmse=es - cmp,
        cond_mean_power=cmp,
        correlation_ratio=math.sqrt(cmp / es),
        bussgang_coeff=cross / es,
    )


def bussgang_residual_check(channel: ChannelModel, input: InputSpec, order: int = PANEL_ORDER) -> float:
    """E[(y - (E[xy]/E_s) x) x], zero by construction of the Bussgang gain.

    E[x^2] is taken from the same quadrature rather than assumed to be E_s,
    so the value measures the internal consistency of the expectations.
    """
    es = float(input.energy)
    cross, _, _, x2 = _raw_moments(channel, es, order)
    return cross - (cross / es) * x2


# ---------------------------------------------------------------------------
# front ends


class FrontEnd:
    """Output processing g applied before nearest-neighbour decoding."""

    name = "front_end"

    def __call__(self, y):
        raise NotImplementedError


@dataclass(frozen=True)
class Identity(FrontEnd):
    name = "identity"

    def __call__(self, y):
        return np.asarray(y, dtype=float)


@dataclass(frozen=True)
class Scale(FrontEnd):
    c: float
    name = "scale"

    def __post_init__(self):
        if self.c == 0 or not math.isfinite(self.c):
            raise ValueError("Scale front end needs a finite nonzero coefficient")

    def __call__(self, y):
        return self.c * np.asarray(y, dtype=float)


class PosteriorMean(FrontEnd):
    """g(y) = E[x | y].

    Finite-alphabet channels carry an explicit table (``levels``,
    ``values``); analog channels evaluate lazily at the query points.
    """

    name = "canonical"

    def __init__(self, channel: ChannelModel, input: InputSpec, order: int = PANEL_ORDER):
        self.channel = channel
        self.input = input
        self.order = order
        if channel.is_finite:
            law = output_law(channel, input, order)
            self.levels, self.values = law.y, law.post_mean
        else:
            self.levels = self.values = None
            self._atoms = _cached_law(channel, float(input.energy), int(order))[1]

    def table(self):
        if self.levels is None:
            raise InvalidQuery("analog channels have no finite posterior-mean table")
        return dict(zip(self.levels.tolist(), self.values.tolist()))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.levels is not None:
            idx = np.clip(np.searchsorted(self.levels, y), 0, self.levels.size - 1)
            if not np.all(self.levels[idx] == y):
                bad = y[self.levels[idx] != y].ravel()[:3].tolist()
                raise InvalidQuery(f"output value(s) {bad} are not reachable levels")
            return self.values[idx]
        if self.channel.noise_var > 0:
            return _mixture(y, self._atoms, self.channel.noise_var)[1]
        return _noiseless_inverse(self.channel, float(self.input.energy), y)

    def __repr__(self):
        return f"PosteriorMean({self.channel!r}, {self.input!r})"


def _noiseless_inverse(channel, energy, y):
    s = math.sqrt(energy)
    out = np.full(y.shape, np.nan)
    # plateaus first: their level is also an endpoint of the neighbouring monotone piece
    pieces = sorted(channel.pieces(), key=lambda pc: pc.kind != "flat")
    for piece in pieces:
        if piece.kind == "flat":
            anchor = piece.hi if math.isinf(piece.lo) else piece.lo
            value = float(channel.nonlinearity(np.array([anchor]))[0])
            hit = np.isclose(y, value, rtol=1e-12, atol=1e-300) & np.isnan(out)
            if np.any(hit):
                out[hit] = float(truncated_gaussian_means(piece.lo, piece.hi, energy)[0])
            continue
        lo, hi = max(piece.lo, -50 * s), min(piece.hi, 50 * s)
        h_lo, h_hi = channel.nonlinearity(np.array([lo, hi]))
        increasing = h_hi >= h_lo
        inside = (y >= min(h_lo, h_hi)) & (y <= max(h_lo, h_hi)) & np.isnan(out)
        if not np.any(inside):
            continue
        if piece.kind == "even":
            out[inside] = 0.0
            continue
        target = y[inside]
        a = np.full(target.shape, lo)
        b = np.full(target.shape, hi)
        for _ in range(200):
            mid = 0.5 * (a + b)
            above = (channel.nonlinearity(mid) >= target) == increasing
            b = np.where(above, mid, b)
            a = np.where(above, a, mid)
            if np.all(b - a <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(a))):
                break
        out[inside] = 0.5 * (a + b)
    if np.any(np.isnan(out)):
        raise InvalidQuery(f"output value(s) {y[np.isnan(out)].ravel()[:3].tolist()} are unreachable")
    return out


def posterior_mean_front_end(channel: ChannelModel, input: InputSpec,
                             order: int = PANEL_ORDER) -> PosteriorMean:
    return PosteriorMean(channel, input, order)


def front_end_moments(channel: ChannelModel, input: InputSpec, g, order: int = PANEL_ORDER):
    """(E[x g(y)], E[g(y)^2]) for an arbitrary vectorized front end ``g``."""
    if isinstance(g, Identity):
        cross, power, _, _ = _raw_moments(channel, float(input.energy), order)
        return cross, power
    if isinstance(g, Scale):
        cross, power, _, _ = _raw_moments(channel, float(input.energy), order)
        return g.c * cross, g.c * g.c * power
    law = output_law(channel, input, order)
    if isinstance(g, PosteriorMean):
        values = law.post_mean
    else:
        values = np.asarray(g(law.y), dtype=float)
    return law.expect(law.post_mean * values), law.expect(values * values)
