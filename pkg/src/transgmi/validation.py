"""Invariant suite behind ``transgmi validate``.

Each check returns a :class:`Check` with the measured worst case and the
bound it must respect.  Link-level Monte Carlo is left to the test suite;
everything here runs in a few seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blockmem import BlockLinearChannel, block_gmi
from .channels import (
    AWGN,
    HardClip,
    InputSpec,
    ProcessSpec,
    SignQuantizer,
    UniformQuantizer,
    bussgang_stationarity_check,
    corpus,
)
from .estimators import (
    PANEL_ORDER,
    Identity,
    PosteriorMean,
    bussgang_residual_check,
    compute_moments,
    output_law,
)
from .gmi import (
    ThetaObjective,
    delta_for_front_end,
    gmi_from_delta,
    gmi_via_theta_sup,
    mutual_information_finite,
)

SNR_GRID = (0.25, 1.0, 4.0, 16.0)


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    bound: float
    passed: bool


def _rates(channel, inp, order):
    m = compute_moments(channel, inp, order)
    lin = gmi_from_delta(delta_for_front_end(m, Identity()))
    can = gmi_from_delta(delta_for_front_end(m, PosteriorMean(channel, inp, order)))
    return m, lin, can


def check_awgn_restoration(order=PANEL_ORDER):
    worst = 0.0
    inp = InputSpec(1.0)
    for nv in (0.1, 1.0, 10.0):
        _, lin, can = _rates(AWGN(nv), inp, order)
        ref = 0.5 * math.log1p(1.0 / nv)
        worst = max(worst, abs(lin.gmi_nats - ref) / ref, abs(can.gmi_nats - ref) / ref)
    return Check("awgn_restoration", worst, 1e-9, worst <= 1e-9)


def check_sign_closed_form(order=PANEL_ORDER):
    m, lin, can = _rates(SignQuantizer(0.0), InputSpec(1.0), order)
    worst = max(
        abs(lin.delta - 2 / math.pi),
        abs(lin.gmi_nats + 0.5 * math.log1p(-2 / math.pi)),
        abs(m.mmse - (1 - 2 / math.pi)),
        abs(m.lmmse - (1 - 2 / math.pi)),
    )
    return Check("sign_closed_form", worst, 1e-9, worst <= 1e-9)


def check_canonical_dominance(order=PANEL_ORDER):
    worst_violation = -math.inf
    min_quant_gap = math.inf
    for snr in SNR_GRID:
        for name, ch in corpus(snr).items():
            _, lin, can = _rates(ch, InputSpec(1.0), order)
            worst_violation = max(worst_violation, lin.gmi_nats - can.gmi_nats)
            if name == "quantizer_3bit":
                min_quant_gap = min(min_quant_gap, can.gmi_nats - lin.gmi_nats)
    return [
        Check("canonical_dominance", worst_violation, 1e-9, worst_violation <= 1e-9),
        Check("quantizer_strict_gap", min_quant_gap, 1e-6, min_quant_gap > 1e-6),
    ]


def finite_corpus():
    chans = [SignQuantizer(0.0), UniformQuantizer(3, 0.5, 0.0)]
    for snr in SNR_GRID:
        chans += [SignQuantizer(1.0 / snr), UniformQuantizer(3, 0.5, 1.0 / snr)]
    return chans


def check_sandwich(order=PANEL_ORDER):
    gmi_excess = fano_excess = -math.inf
    inp = InputSpec(1.0)
    for ch in finite_corpus():
        m, _, can = _rates(ch, inp, order)
        mi = mutual_information_finite(ch, inp, order)
        gmi_excess = max(gmi_excess, can.gmi_nats - mi)
        fano_excess = max(fano_excess, inp.energy * math.exp(-2 * mi) - m.mmse)
    return [
        Check("gmi_below_mutual_information", gmi_excess, 1e-9, gmi_excess <= 1e-9),
        Check("fano_counterpart", fano_excess, 1e-9, fano_excess <= 1e-9),
    ]


def perturbation_excess(channel, inp, rng, count=100, order=PANEL_ORDER):
    """max over random bounded perturbations g of Delta_g - Theta^2."""
    law = output_law(channel, inp, order)
    theta2 = compute_moments(channel, inp, order).cond_mean_power / inp.energy
    scale = math.sqrt(inp.energy)
    worst = -math.inf
    for _ in range(count):
        eps = rng.uniform(-1, 1) * scale
        k, phase = rng.uniform(0.2, 5.0), rng.uniform(0, 2 * np.pi)
        bump = np.sin(k * law.y / scale + phase) if rng.random() < 0.5 else np.tanh(k * law.y / scale + phase)
        g = law.post_mean + eps * bump
        cross = law.expect(law.post_mean * g)
        power = law.expect(g * g)
        worst = max(worst, cross * cross / (inp.energy * power) - theta2)
    return worst


def check_lemma1(seed=2024, order=PANEL_ORDER):
    rng = np.random.default_rng(seed)
    worst = max(
        perturbation_excess(HardClip(1.0, 0.1), InputSpec(1.0), rng, 100, order),
        perturbation_excess(UniformQuantizer(3, 0.5, 0.1), InputSpec(1.0), rng, 100, order),
    )
    return Check("correlation_ratio_supremum", worst, 1e-9, worst <= 1e-9)


def check_theta_sup(order=PANEL_ORDER):
    worst = 0.0
    inp = InputSpec(1.0)
    for snr in SNR_GRID:
        for ch in corpus(snr).values():
            m = compute_moments(ch, inp, order)
            for fe in (Identity(), PosteriorMean(ch, inp, order)):
                closed = gmi_from_delta(delta_for_front_end(m, fe)).gmi_nats
                numeric = gmi_via_theta_sup(ThetaObjective.for_front_end(ch, inp, fe, order=order))
                worst = max(worst, abs(numeric - closed))
    rep = block_gmi(BlockLinearChannel((1.0, 0.5), 1.0, 64, 1.0))
    worst = max(worst, abs(rep.theta_sup_gmi_nats - rep.gmi_L_nats))
    return Check("theta_sup_equivalence", worst, 1e-6, worst <= 1e-6)


def check_block(order=PANEL_ORDER):
    rep = block_gmi(BlockLinearChannel((1.0, 0.5), 1.0, 64, 1.0))
    rel = abs(rep.mmse_L - rep.spectral_mmse) / rep.spectral_mmse
    ref = 0.5 * math.log(2.0)
    collapse = max(abs(block_gmi(BlockLinearChannel((1.0,), 1.0, L, 1.0)).gmi_L_nats - ref)
                   for L in (1, 2, 4, 16, 64))
    return [
        Check("block_spectral_limit", rel, 0.01, rel <= 0.01),
        Check("block_memoryless_collapse", collapse, 1e-12, collapse <= 1e-12),
    ]


def check_residuals(order=PANEL_ORDER):
    worst = 0.0
    for snr in SNR_GRID:
        for ch in corpus(snr).values():
            worst = max(worst, abs(bussgang_residual_check(ch, InputSpec(1.0), order)))
    return Check("bussgang_residual", worst, 1e-9, worst <= 1e-9)


def check_estimator_order(order=PANEL_ORDER):
    worst = -math.inf
    for es in (0.25, 1.0, 4.0):
        for ch in corpus(1.0).values():
            m = compute_moments(ch, InputSpec(es), order)
            worst = max(worst, m.mmse - m.lmmse)
    return Check("mmse_below_lmmse", worst, 1e-9, worst <= 1e-9)


def check_likelihoods():
    worst = 0.0
    for ch in finite_corpus():
        x = np.linspace(-6, 6, 101)
        worst = max(worst, float(np.max(np.abs(ch.level_probabilities(x).sum(axis=1) - 1))))
    return Check("likelihood_normalization", worst, 1e-12, worst <= 1e-12)


def check_stationarity(seed=7, length=200_000):
    rep = bussgang_stationarity_check(HardClip(1.0, 0.0), ProcessSpec(0.9, length), 10,
                                      np.random.default_rng(seed))
    ratio = float(np.max(np.abs(rep.deviation[1:]) / rep.stderr[1:]))
    return Check("bussgang_stationarity", ratio, 4.0, rep.passes(4.0))


def run_all(order=PANEL_ORDER, seed=0):
    checks = [
        check_awgn_restoration(order),
        check_sign_closed_form(order),
        *check_canonical_dominance(order),
        *check_sandwich(order),
        check_lemma1(order=order),
        check_theta_sup(order),
        *check_block(order),
        check_residuals(order),
        check_estimator_order(order),
        check_likelihoods(),
        check_stationarity(seed=seed + 7),
    ]
    return checks
