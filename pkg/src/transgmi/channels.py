"""Memoryless distortion channels and the Bussgang stationarity check.

Two noise placements are modelled:

* analog impairments (AWGN, hard clipping, generic deterministic shapes) add
  Gaussian noise after the nonlinearity, ``y = h(x) + z``;
* ADC models (sign and uniform quantizers) quantize the noisy input,
  ``y = Q(x + z)``, and have a finite output alphabet.

Channel objects are immutable.  All randomness comes from an explicitly
passed :class:`numpy.random.Generator`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidQuery
from .quadrature import cell_probability


@dataclass(frozen=True)
class InputSpec:
    """Zero-mean Gaussian input with symbol variance ``energy``."""

    energy: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.energy) and self.energy > 0):
            raise ValueError(f"input energy must be finite and > 0, got {self.energy}")

    @property
    def std(self) -> float:
        return math.sqrt(self.energy)


class Piece(NamedTuple):
    """Interval of the input axis on which a nonlinearity behaves uniformly.

    ``kind`` is ``"monotone"`` (h strictly monotone, x recoverable from h(x)),
    ``"flat"`` (h constant, the whole interval collapses to one output) or
    ``"even"`` (h is even about 0 on this piece, so E[x | h(x)] = 0).
    """

    lo: float
    hi: float
    kind: str


def _check_noise(noise_var):
    if not (math.isfinite(noise_var) and noise_var >= 0):
        raise ValueError(f"noise_var must be finite and >= 0, got {noise_var}")


class ChannelModel:
    """Common interface of all channel kinds.

    Subclasses are frozen dataclasses exposing ``noise_var`` and implementing
    :meth:`nonlinearity`.  Finite-alphabet channels set ``levels`` and
    ``boundaries`` (cell edges of the quantizer acting on ``x + z``).
    """

    kind: str = ""
    noise_var: float
    levels: tuple | None = None
    boundaries: tuple | None = None

    @property
    def is_finite(self) -> bool:
        return self.levels is not None

    @property
    def output_alphabet(self):
        """``None`` for continuous outputs, else the sorted tuple of output levels."""
        return self.levels

    def nonlinearity(self, x):
        raise NotImplementedError

    def pieces(self) -> list[Piece]:
        """Input-axis decomposition used by the quadrature engine (continuous kinds)."""
        return [Piece(-math.inf, math.inf, "monotone")]

    def describe(self) -> dict:
        """Parameters as a plain dict (the CLI ``channel`` block)."""
        raise NotImplementedError

    # -- sampling ---------------------------------------------------------

    def sample(self, x, rng: np.random.Generator):
        x = np.asarray(x, dtype=float)
        z = math.sqrt(self.noise_var) * rng.standard_normal(x.shape) if self.noise_var > 0 else 0.0
        if self.is_finite:
            return self.quantize(x + z)
        return self.nonlinearity(x) + z

    def quantize(self, w):
        idx = np.searchsorted(np.asarray(self.boundaries), w, side="right")
        return np.asarray(self.levels)[idx]

    # -- likelihood -------------------------------------------------------

    def level_probabilities(self, x):
        """P(y = level_j | x) for every level, shape ``x.shape + (n_levels,)``."""
        if not self.is_finite:
            raise InvalidQuery(f"{self.kind} has a continuous output alphabet")
        x = np.asarray(x, dtype=float)[..., None]
        edges = np.concatenate([[-np.inf], self.boundaries, [np.inf]])
        lo, hi = edges[:-1], edges[1:]
        if self.noise_var == 0:
            return ((x >= lo) & (x < hi)).astype(float)
        s = math.sqrt(self.noise_var)
        return cell_probability((lo - x) / s, (hi - x) / s)

    def likelihood(self, y: float, x):
        """Density (continuous) or probability mass (finite) of ``y`` given ``x``."""
        if self.is_finite:
            j = _level_index(self.levels, y)
            return self.level_probabilities(x)[..., j]
        if self.noise_var == 0:
            raise InvalidQuery(
                f"noiseless {self.kind} channel has no output density; y = h(x) exactly"
            )
        x = np.asarray(x, dtype=float)
        r = y - self.nonlinearity(x)
        return np.exp(-0.5 * r * r / self.noise_var) / math.sqrt(2 * math.pi * self.noise_var)


def _level_index(levels, y):
    j = int(np.searchsorted(levels, y))
    if j >= len(levels) or levels[j] != y:
        raise InvalidQuery(f"y={y!r} is not an output level of this channel")
    return j


def sample_output(channel: ChannelModel, x: float, rng: np.random.Generator) -> float:
    """One draw of y given the scalar input x."""
    return float(channel.sample(np.float64(x), rng))


def likelihood(channel: ChannelModel, y: float, x: float) -> float:
    return float(channel.likelihood(y, x))


# ---------------------------------------------------------------------------
# analog kinds: y = h(x) + z


@dataclass(frozen=True)
class AWGN(ChannelModel):
    noise_var: float = 1.0
    kind: str = field(default="awgn", init=False, repr=False)

    def __post_init__(self):
        _check_noise(self.noise_var)

    def nonlinearity(self, x):
        return np.asarray(x, dtype=float)

    def describe(self):
        return {"kind": self.kind, "noise_var": self.noise_var}


@dataclass(frozen=True)
class HardClip(ChannelModel):
    clip_level: float = 1.0
    noise_var: float = 0.0
    kind: str = field(default="hard_clip", init=False, repr=False)

    def __post_init__(self):
        _check_noise(self.noise_var)
        if not (math.isfinite(self.clip_level) and self.clip_level > 0):
            raise ValueError(f"clip_level must be > 0, got {self.clip_level}")

    def nonlinearity(self, x):
        return np.clip(np.asarray(x, dtype=float), -self.clip_level, self.clip_level)

    def pieces(self):
        a = self.clip_level
        return [Piece(-math.inf, -a, "flat"), Piece(-a, a, "monotone"), Piece(a, math.inf, "flat")]

    def describe(self):
        return {"kind": self.kind, "clip_level": self.clip_level, "noise_var": self.noise_var}


class Shape(NamedTuple):
    func: Callable
    pieces: Callable  # params -> list[Piece]
    defaults: dict


def _cubic_limiter(x, saturation=1.0):
    a = saturation
    x = np.asarray(x, dtype=float)
    inner = x - x**3 / (3 * a * a)
    return np.where(np.abs(x) < a, inner, np.sign(x) * 2 * a / 3)


def _limiter_pieces(saturation=1.0):
    a = saturation
    return [Piece(-math.inf, -a, "flat"), Piece(-a, a, "monotone"), Piece(a, math.inf, "flat")]


def _whole_line(kind):
    return lambda **_: [Piece(-math.inf, math.inf, kind)]


SHAPES = {
    "identity": Shape(lambda x: np.asarray(x, dtype=float), _whole_line("monotone"), {}),
    "cube": Shape(lambda x: np.asarray(x, dtype=float) ** 3, _whole_line("monotone"), {}),
    "tanh": Shape(lambda x, gain=1.0: np.tanh(gain * np.asarray(x, dtype=float)),
                  _whole_line("monotone"), {"gain": 1.0}),
    "abs": Shape(lambda x: np.abs(np.asarray(x, dtype=float)),
                 lambda: [Piece(-math.inf, 0.0, "even"), Piece(0.0, math.inf, "even")], {}),
    # x - x^3/(3A^2) inside |x| < A, saturating at +-2A/3 (continuous, C^1 at the knee)
    "cubic_limiter": Shape(_cubic_limiter, _limiter_pieces, {"saturation": 1.0}),
}


@dataclass(frozen=True)
class DeterministicNonlinearity(ChannelModel):
    """``y = h(x) + z`` with ``h`` one of the registered :data:`SHAPES`."""

    shape: str = "identity"
    params: tuple = ()
    noise_var: float = 0.0
    kind: str = field(default="nonlinearity", init=False, repr=False)

    def __post_init__(self):
        _check_noise(self.noise_var)
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; choose from {sorted(SHAPES)}")
        params = dict(self.params)
        unknown = set(params) - set(SHAPES[self.shape].defaults)
        if unknown:
            raise ValueError(f"shape {self.shape!r} takes no parameter(s) {sorted(unknown)}")
        for name, value in params.items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"shape parameter {name} must be > 0, got {value}")
        # normalize so equal channels compare and hash equal
        object.__setattr__(self, "params", tuple(sorted({**SHAPES[self.shape].defaults, **params}.items())))

    def nonlinearity(self, x):
        return SHAPES[self.shape].func(x, **dict(self.params))

    def pieces(self):
        return SHAPES[self.shape].pieces(**dict(self.params))

    def describe(self):
        d = {"kind": self.kind, "shape": self.shape, "noise_var": self.noise_var}
        if self.params:
            d["params"] = dict(self.params)
        return d


# ---------------------------------------------------------------------------
# ADC kinds: y = Q(x + z)


@dataclass(frozen=True)
class SignQuantizer(ChannelModel):
    noise_var: float = 0.0
    kind: str = field(default="sign", init=False, repr=False)
    levels: tuple = field(default=(-1.0, 1.0), init=False, repr=False)
    boundaries: tuple = field(default=(0.0,), init=False, repr=False)

    def __post_init__(self):
        _check_noise(self.noise_var)

    def nonlinearity(self, x):
        return np.where(np.asarray(x, dtype=float) >= 0, 1.0, -1.0)

    def describe(self):
        return {"kind": self.kind, "noise_var": self.noise_var}


@dataclass(frozen=True)
class UniformQuantizer(ChannelModel):
    """Symmetric mid-rise quantizer with ``2**bits`` levels and unbounded outer cells."""

    bits: int = 3
    step: float = 0.5
    noise_var: float = 0.0
    kind: str = field(default="uniform_quantizer", init=False, repr=False)
    levels: tuple = field(default=None, init=False, repr=False)
    boundaries: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        _check_noise(self.noise_var)
        if isinstance(self.bits, bool) or not isinstance(self.bits, (int, np.integer)) or not 1 <= self.bits <= 16:
            raise ValueError(f"bits must be an integer in [1, 16], got {self.bits!r}")
        if not (math.isfinite(self.step) and self.step > 0):
            raise ValueError(f"step must be > 0, got {self.step}")
        half = 2 ** (self.bits - 1)
        k = np.arange(-half + 1, half)
        object.__setattr__(self, "boundaries", tuple(float(v) for v in k * self.step))
        levels = (np.arange(-half, half) + 0.5) * self.step
        object.__setattr__(self, "levels", tuple(float(v) for v in levels))

    def nonlinearity(self, x):
        return self.quantize(np.asarray(x, dtype=float))

    def describe(self):
        return {"kind": self.kind, "bits": self.bits, "step": self.step, "noise_var": self.noise_var}


CHANNEL_KINDS = {
    "awgn": AWGN,
    "hard_clip": HardClip,
    "sign": SignQuantizer,
    "uniform_quantizer": UniformQuantizer,
    "nonlinearity": DeterministicNonlinearity,
}


def make_channel(spec: dict) -> ChannelModel:
    """Build a channel from a descriptor such as ``{"kind": "awgn", "noise_var": 1.0}``."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "nonlinearity" and "params" in spec:
        spec["params"] = tuple(dict(spec["params"]).items())
    return CHANNEL_KINDS[kind](**spec)


def corpus(snr: float = 1.0, energy: float = 1.0) -> dict[str, ChannelModel]:
    """The built-in distortion corpus with noise variance ``energy / snr``."""
    nv = energy / snr
    return {
        "hard_clip": HardClip(clip_level=1.0, noise_var=nv),
        "sign": SignQuantizer(noise_var=nv),
        "quantizer_3bit": UniformQuantizer(bits=3, step=0.5, noise_var=nv),
        "cubic_limiter": DeterministicNonlinearity("cubic_limiter", noise_var=nv),
    }


# ---------------------------------------------------------------------------
# Bussgang stationarity identity on AR(1) data


@dataclass(frozen=True)
class ProcessSpec:
    """Stationary AR(1) Gaussian process with autocorrelation ``energy * ar**|tau|``."""

    ar_coefficient: float
    length: int
    energy: float = 1.0

    def __post_init__(self):
        if not -1 < self.ar_coefficient < 1:
            raise ValueError(f"ar_coefficient must lie in (-1, 1), got {self.ar_coefficient}")
        if int(self.length) != self.length or self.length < 1:
            raise ValueError(f"length must be a positive integer, got {self.length}")
        if not (math.isfinite(self.energy) and self.energy > 0):
            raise ValueError(f"degenerate process: energy must be > 0, got {self.energy}")

    def autocorrelation(self, tau):
        return self.energy * self.ar_coefficient ** np.abs(np.asarray(tau))

    def sample(self, rng: np.random.Generator):
        rho = self.ar_coefficient
        e = math.sqrt(self.energy * (1 - rho * rho)) * rng.standard_normal(self.length)
        e[0] *= 1 / math.sqrt(1 - rho * rho)  # start in the stationary law
        return lfilter([1.0], [1.0, -rho], e)


@dataclass(frozen=True)
class StationarityReport:
    deviation: np.ndarray  # R_xy(tau) - (R_xy(0)/R_xx(0)) R_xx(tau), tau = 0..tau_max
    stderr: np.ndarray     # batch-means Monte Carlo standard error per lag
    scale: float           # R_xy(0)/R_xx(0), the empirical Bussgang gain

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.deviation)))

    @property
    def max_stderr(self) -> float:
        return float(np.max(self.stderr))

    def passes(self, k: float = 4.0, atol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.deviation) <= k * self.stderr + atol))


def bussgang_stationarity_check(nonlinearity: ChannelModel, process: ProcessSpec, tau_max: int,
                                rng: np.random.Generator, batches: int = 100) -> StationarityReport:
    """Check that the input/output cross-correlation is a scaled autocorrelation.

    The standard error of each lag deviation comes from batch means of its
    linearized influence series, which accounts for the serial correlation of
    the AR(1) data and for the estimated gain.
    """
    if nonlinearity.noise_var != 0:
        raise ValueError("the stationarity check needs a noiseless nonlinearity")
    if not 1 <= tau_max < process.length / 10:
        raise ValueError(f"need 1 <= tau_max < length/10, got tau_max={tau_max}")
    x = process.sample(rng)
    y = nonlinearity.nonlinearity(x)
    n = x.size
    lags = np.arange(tau_max + 1)
    r_xx = np.array([np.dot(x[: n - t], x[t:]) / (n - t) for t in lags])
    r_xy = np.array([np.dot(x[: n - t], y[t:]) / (n - t) for t in lags])
    scale = r_xy[0] / r_xx[0]
    deviation = r_xy - scale * r_xx
    deviation[0] = 0.0

    m = n - tau_max
    size = m // batches
    lag0 = x[:m] * y[:m] - scale * x[:m] * x[:m]
    stderr = np.zeros(tau_max + 1)
    for t in lags[1:]:
        v = x[:m] * (y[t : t + m] - scale * x[t : t + m]) - (r_xx[t] / r_xx[0]) * lag0
        means = v[: size * batches].reshape(batches, size).mean(axis=1)
        stderr[t] = means.std(ddof=1) / math.sqrt(batches)
    return StationarityReport(deviation, stderr, float(scale))
