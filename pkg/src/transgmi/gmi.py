"""Achievable rates under (processed) nearest-neighbour decoding.

Internal unit is nats; every report also carries bits.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import entr

from .channels import ChannelModel, InputSpec
from .errors import DegenerateChannel, InvalidQuery, QuadratureError
from .estimators import (
    PANEL_ORDER,
    TAIL,
    FrontEnd,
    Identity,
    MomentReport,
    PosteriorMean,
    Scale,
    front_end_moments,
    output_law,
)
from .quadrature import composite_rule, refine_panels

DEGENERATE_GAP = 1e-12   # delta within this of 1 counts as a noiseless invertible channel
CLAMP_TOL = 1e-9
LN2 = math.log(2.0)


@dataclass(frozen=True)
class GmiReport:
    delta: float
    gmi_nats: float
    gmi_bits: float
    effective_snr: float
    a_opt: float = math.nan
    degenerate: bool = False


def gmi_from_delta(delta: float, a_opt: float = math.nan) -> GmiReport:
    """GMI = 1/2 ln(1 + delta/(1 - delta)) with the degeneracy/clamping policy."""
    if not math.isfinite(delta) or delta < -CLAMP_TOL or delta > 1 + CLAMP_TOL:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    if delta < 0:
        delta = 0.0
    if delta > 1:
        warnings.warn(f"delta {delta!r} above 1 by roundoff; clamped", RuntimeWarning, stacklevel=2)
        delta = 1.0
    if delta >= 1 - DEGENERATE_GAP:
        return GmiReport(delta, math.inf, math.inf, math.inf, a_opt, True)
    snr = delta / (1 - delta)
    nats = -0.5 * math.log1p(-delta)
    return GmiReport(delta, nats, nats / LN2, snr, a_opt, False)


def delta_for_front_end(moments: MomentReport, front_end: FrontEnd) -> float:
    """Delta_g for the standard front ends, from a moment report.

    Identity and any scaling give (E[xy])^2 / (E_s E[y^2]); the posterior
    mean gives var E[x|y] / E_s.
    """
    if isinstance(front_end, PosteriorMean):
        return moments.cond_mean_power / moments.energy
    if isinstance(front_end, (Identity, Scale)):
        if not moments.output_power > 0:
            raise DegenerateChannel("channel output has zero power")
        return moments.cross_moment**2 / (moments.energy * moments.output_power)
    raise TypeError(f"use delta_for_function for front end {front_end!r}")


def delta_for_function(channel: ChannelModel, input: InputSpec, g, order: int = PANEL_ORDER) -> float:
    """Delta_g = (E[x g(y)])^2 / (E_s E[g(y)^2]) for any vectorized g."""
    cross, power = front_end_moments(channel, input, g, order)
    if not power > 0:
        raise DegenerateChannel("processed output has zero power")
    return cross * cross / (input.energy * power)


def _snr(energy, error):
    if error < 1e-12 * energy:
        return math.inf
    return (energy - error) / error


def effective_snr_canonical(moments: MomentReport) -> float:
    return _snr(moments.energy, moments.mmse)


def effective_snr_linear(moments: MomentReport) -> float:
    return _snr(moments.energy, moments.lmmse)


def optimal_scaling(channel: ChannelModel, input: InputSpec, front_end: FrontEnd,
                    order: int = PANEL_ORDER) -> float:
    """a_opt = E[x g(y)] / E_s."""
    cross, _ = front_end_moments(channel, input, front_end, order)
    return cross / input.energy


def gmi_report(channel: ChannelModel, input: InputSpec, moments: MomentReport,
               front_end: FrontEnd, order: int = PANEL_ORDER) -> GmiReport:
    delta = delta_for_front_end(moments, front_end)
    report = gmi_from_delta(delta, optimal_scaling(channel, input, front_end, order))
    return report


# ---------------------------------------------------------------------------
# theta-sup form of the GMI


@dataclass(frozen=True)
class ThetaObjective:
    """Per-symbol Chernoff objective of the (super-symbol) nearest-neighbour decoder.

    ``second_moment_g`` is E||g(y)||^2 / L and ``distortion`` is
    E||g(y) - a x||^2 / L; for L = 1 these are the scalar moments.
    """

    energy: float
    a: float
    second_moment_g: float
    distortion: float

    @classmethod
    def from_moments(cls, energy, a, cross_g, second_moment_g):
        distortion = second_moment_g - 2 * a * cross_g + a * a * energy
        return cls(energy, a, second_moment_g, distortion)

    @classmethod
    def for_front_end(cls, channel, input, front_end, a=None, order=PANEL_ORDER):
        cross, power = front_end_moments(channel, input, front_end, order)
        if a is None:
            a = cross / input.energy
        return cls.from_moments(input.energy, a, cross, power)

    def __call__(self, theta):
        k = 1 - 2 * theta * self.a**2 * self.energy
        return 0.5 * np.log(k) + theta * self.distortion - theta * self.second_moment_g / k


def gmi_via_theta_sup(obj: ThetaObjective) -> float:
    """sup over theta < 0 of the objective, found numerically.

    The search runs over u = -2 theta a^2 E_s in (0, inf), mapped to
    t = u / (1 + u) in (0, 1), with bounded Brent refinement to 1e-12.
    """
    if obj.a == 0:
        raise ValueError("scaling a must be nonzero")
    if not obj.distortion > 0:
        raise ValueError("distortion must be positive")
    scale = 2 * obj.a**2 * obj.energy

    def theta_of(t):
        return -(t / (1 - t)) / scale

    res = minimize_scalar(lambda t: -obj(theta_of(t)), bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-12, "maxiter": 2000})
    if not res.success or res.x > 1 - 1e-9:
        raise QuadratureError(
            "theta objective increases without bound toward theta -> -inf "
            f"(t={res.x!r}); the channel looks noiseless"
        )
    return max(float(-res.fun), 0.0)


# ---------------------------------------------------------------------------
# mutual information for finite-output channels


def mutual_information_finite(channel: ChannelModel, input: InputSpec,
                              order: int = PANEL_ORDER) -> float:
    """I(x; y) in nats = H(y) - E_x[H(y|x)] for a finite output alphabet."""
    if not channel.is_finite:
        raise InvalidQuery("mutual information is only available for finite output alphabets")
    law = output_law(channel, input, order)
    h_y = float(np.sum(entr(law.weight)))
    if channel.noise_var == 0:
        return h_y
    s = math.sqrt(input.energy)
    sigma = math.sqrt(channel.noise_var)
    edges = np.unique(np.concatenate([[-TAIL * s, TAIL * s],
                                      [b for b in channel.boundaries if abs(b) < TAIL * s]]))
    edges = refine_panels(edges, lambda lo, hi: hi - lo <= min(0.25 * s, 0.5 * sigma))
    x, w = composite_rule(edges, order)
    w = w * np.exp(-0.5 * x * x / input.energy) / math.sqrt(2 * math.pi * input.energy)
    h_cond = float(np.dot(w, entr(channel.level_probabilities(x)).sum(axis=1)))
    return max(h_y - h_cond, 0.0)
