import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import erf, ndtr

from transgmi.channels import (
    AWGN,
    DeterministicNonlinearity,
    HardClip,
    InputSpec,
    SignQuantizer,
    UniformQuantizer,
    corpus,
)
from transgmi.errors import InvalidQuery
from transgmi.estimators import (
    Identity,
    PosteriorMean,
    Scale,
    bussgang_residual_check,
    compute_moments,
    front_end_moments,
    output_law,
)
from transgmi.gmi import delta_for_function


def npdf(x, var):
    return np.exp(-0.5 * x * x / var) / math.sqrt(2 * math.pi * var)


def quad(f, lo, hi, points=None):
    val, _ = integrate.quad(f, lo, hi, points=points, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val


def nested_cond_mean_power(h, es, nv, breaks=()):
    """var E[x|y] by brute-force nested adaptive quadrature (analog noisy channels)."""
    s, sig = math.sqrt(es), math.sqrt(nv)
    xlim = 12 * s
    pts = [b for b in breaks if abs(b) < xlim] or None

    def inner(y, power):
        return quad(lambda x: x**power * npdf(x, es) * npdf(y - h(x), nv), -xlim, xlim, pts)

    def integrand(y):
        p = inner(y, 0)
        return inner(y, 1) ** 2 / p if p > 0 else 0.0

    ylim = max(abs(h(xlim)), abs(h(-xlim))) + 12 * sig
    return quad(integrand, -ylim, ylim, [float(h(b)) for b in breaks] or None)


# -- closed forms ---------------------------------------------------------------


@pytest.mark.parametrize("es", [0.25, 1.0, 4.0])
@pytest.mark.parametrize("nv", [0.01, 0.5, 3.0])
def test_awgn_moments(es, nv):
    m = compute_moments(AWGN(nv), InputSpec(es))
    assert m.cross_moment == pytest.approx(es, rel=1e-12)
    assert m.output_power == pytest.approx(es + nv, rel=1e-12)
    ref = es * nv / (es + nv)
    assert m.mmse == pytest.approx(ref, rel=1e-9)
    assert m.lmmse == pytest.approx(ref, rel=1e-12)


def test_awgn_posterior_mean_is_linear():
    g = PosteriorMean(AWGN(0.5), InputSpec(2.0))
    y = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(g(y), 2.0 / 2.5 * y, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("es", [0.25, 1.0, 4.0])
@pytest.mark.parametrize("nv", [0.0, 0.1, 1.0])
def test_sign_quantizer_moments(es, nv):
    m = compute_moments(SignQuantizer(nv), InputSpec(es))
    cmp = 2 * es * es / (math.pi * (es + nv))
    assert m.cond_mean_power == pytest.approx(cmp, rel=1e-12)
    assert m.cross_moment == pytest.approx(es * math.sqrt(2 / (math.pi * (es + nv))), rel=1e-12)
    assert m.output_power == pytest.approx(1.0, rel=1e-14)
    # binary output: the best linear estimator is already the posterior mean
    assert m.lmmse == pytest.approx(m.mmse, rel=1e-12)


@pytest.mark.parametrize("clip", [0.3, 1.0, 2.5])
@pytest.mark.parametrize("es", [0.25, 1.0, 4.0])
def test_clip_bussgang_gain_is_erf(clip, es):
    m = compute_moments(HardClip(clip, 0.0), InputSpec(es))
    assert m.bussgang_coeff == pytest.approx(erf(clip / math.sqrt(2 * es)), rel=1e-12)


def test_clip_output_power_against_quad():
    es, clip = 1.3, 0.8
    ref = quad(lambda x: np.clip(x, -clip, clip) ** 2 * npdf(x, es), -40, 40, [-clip, clip])
    assert compute_moments(HardClip(clip, 0.0), InputSpec(es)).output_power == pytest.approx(ref, rel=1e-11)


def test_noiseless_clip_posterior_mean():
    clip, es = 1.0, 1.0
    g = PosteriorMean(HardClip(clip, 0.0), InputSpec(es))
    tail = math.exp(-0.5) / math.sqrt(2 * math.pi) / ndtr(-1.0)
    np.testing.assert_allclose(g(np.array([-1.0, -0.4, 0.0, 0.9, 1.0])), [-tail, -0.4, 0.0, 0.9, tail],
                               rtol=1e-12, atol=1e-15)
    with pytest.raises(InvalidQuery):
        g(np.array([1.5]))


@pytest.mark.parametrize("channel", [DeterministicNonlinearity("identity"), DeterministicNonlinearity("cube")],
                         ids=lambda c: c.shape)
@pytest.mark.parametrize("es", [0.25, 1.0, 4.0])
def test_invertible_channels_have_unit_correlation_ratio(channel, es):
    m = compute_moments(channel, InputSpec(es))
    assert m.correlation_ratio == pytest.approx(1.0, abs=1e-12)
    assert m.mmse == pytest.approx(0.0, abs=1e-12 * es)


def test_cube_inverse():
    g = PosteriorMean(DeterministicNonlinearity("cube"), InputSpec(1.0))
    np.testing.assert_allclose(g(np.array([-8.0, 0.001, 27.0])), [-2.0, 0.1, 3.0], rtol=1e-13)


def test_abs_channel_loses_the_sign():
    m = compute_moments(DeterministicNonlinearity("abs"), InputSpec(1.0))
    assert m.cross_moment == pytest.approx(0.0, abs=1e-14)
    assert m.cond_mean_power == pytest.approx(0.0, abs=1e-14)


# -- brute-force oracles for channels without closed forms --------------------


def test_noisy_clip_against_nested_quadrature():
    es, clip, nv = 1.0, 1.0, 0.1
    ref = nested_cond_mean_power(lambda x: np.clip(x, -clip, clip), es, nv, (-clip, clip))
    m = compute_moments(HardClip(clip, nv), InputSpec(es))
    assert m.cond_mean_power == pytest.approx(ref, rel=1e-8)


def test_noisy_tanh_against_quadrature():
    es, nv, gain = 2.0, 0.3, 1.5
    ch = DeterministicNonlinearity("tanh", params=(("gain", gain),), noise_var=nv)
    m = compute_moments(ch, InputSpec(es))
    h = lambda x: np.tanh(gain * x)
    assert m.cross_moment == pytest.approx(quad(lambda x: x * h(x) * npdf(x, es), -40, 40), rel=1e-11)
    assert m.output_power == pytest.approx(quad(lambda x: h(x) ** 2 * npdf(x, es), -40, 40) + nv, rel=1e-11)
    ref = nested_cond_mean_power(h, es, nv)
    assert m.cond_mean_power == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("channel", [UniformQuantizer(3, 0.5, 0.1), UniformQuantizer(2, 1.0, 0.0),
                                     SignQuantizer(0.3)], ids=repr)
def test_quantizer_posterior_table_against_quad(channel):
    es = 1.0
    g = PosteriorMean(channel, InputSpec(es))
    for level, value in g.table().items():
        p = lambda x: float(channel.likelihood(level, x))
        kinks = list(channel.boundaries) if channel.noise_var == 0 else None
        num = quad(lambda x: x * npdf(x, es) * p(x), -14, 14, kinks)
        den = quad(lambda x: npdf(x, es) * p(x), -14, 14, kinks)
        assert value == pytest.approx(num / den, rel=1e-9, abs=1e-12)


# -- structural identities ------------------------------------------------------


@pytest.mark.parametrize("snr", [0.25, 1.0, 4.0, 16.0])
@pytest.mark.parametrize("es", [0.25, 1.0, 4.0])
def test_mmse_never_exceeds_lmmse(snr, es):
    for ch in corpus(snr, es).values():
        m = compute_moments(ch, InputSpec(es))
        assert m.mmse <= m.lmmse + 1e-9 * es
        assert 0 <= m.mmse <= es


@pytest.mark.parametrize("snr", [0.25, 1.0, 16.0])
def test_bussgang_residual_vanishes(snr):
    for ch in corpus(snr).values():
        assert abs(bussgang_residual_check(ch, InputSpec(1.0))) <= 1e-9


@pytest.mark.parametrize("name", ["hard_clip", "sign", "quantizer_3bit", "cubic_limiter"])
def test_panel_order_self_convergence(name):
    ch = corpus(2.0)[name]
    lo = compute_moments(ch, InputSpec(1.0), order=8, check=False)
    hi = compute_moments(ch, InputSpec(1.0), order=32, check=False)
    for field in ("cross_moment", "output_power", "cond_mean_power"):
        assert getattr(lo, field) == pytest.approx(getattr(hi, field), abs=1e-9)


def test_output_law_is_a_probability():
    for ch in corpus(1.0).values():
        law = output_law(ch, InputSpec(1.0))
        assert law.weight.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(law.weight >= 0)
        # tower property E[E[x|y]] = E[x] = 0
        assert law.expect(law.post_mean) == pytest.approx(0.0, abs=1e-12)


def test_front_end_moments_for_posterior_mean():
    ch, inp = HardClip(1.0, 0.2), InputSpec(1.0)
    m = compute_moments(ch, inp)
    cross, power = front_end_moments(ch, inp, PosteriorMean(ch, inp))
    assert cross == pytest.approx(m.cond_mean_power, rel=1e-10)
    assert power == pytest.approx(m.cond_mean_power, rel=1e-10)


def test_scale_front_end_moments():
    ch, inp = UniformQuantizer(3, 0.5, 0.1), InputSpec(1.0)
    c0, p0 = front_end_moments(ch, inp, Identity())
    c1, p1 = front_end_moments(ch, inp, Scale(-2.5))
    assert (c1, p1) == pytest.approx((-2.5 * c0, 6.25 * p0), rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(table=st.lists(st.floats(-5, 5), min_size=8, max_size=8).filter(lambda t: max(map(abs, t)) > 1e-3))
def test_no_table_beats_the_posterior_mean(table):
    ch, inp = UniformQuantizer(3, 0.5, 0.1), InputSpec(1.0)
    theta2 = compute_moments(ch, inp).cond_mean_power
    lookup = dict(zip(ch.levels, table))
    delta = delta_for_function(ch, inp, lambda y: np.vectorize(lookup.__getitem__)(y))
    assert delta <= theta2 + 1e-12


def test_perturbations_of_posterior_mean_never_help():
    rng = np.random.default_rng(2024)
    for ch in (HardClip(1.0, 0.1), UniformQuantizer(3, 0.5, 0.1)):
        inp = InputSpec(1.0)
        theta2 = compute_moments(ch, inp).cond_mean_power
        law = output_law(ch, inp)
        for _ in range(100):
            eps, k, ph = rng.uniform(-1, 1), rng.uniform(0.2, 5), rng.uniform(0, 2 * np.pi)
            g = law.post_mean + eps * np.sin(k * law.y + ph)
            delta = law.expect(law.post_mean * g) ** 2 / law.expect(g * g)
            assert delta <= theta2 + 1e-9
