"""Random-coding link simulation with (processed) nearest-neighbour decoding.

Each trial draws a fresh Gaussian codebook and message, sends the codeword
through the channel, applies the front end and decodes with

    m_hat = argmin_m (1/n) sum_k (g(y_k) - a x_k(m))^2.

Two ways of resolving the competitors are available:

``explicit``
    enumerate all M codewords (M <= 65536);
``analytic``
    given the sent codeword and the outputs, the M - 1 competitor metrics are
    i.i.d. scaled noncentral chi-square variables, so the trial errs with
    probability 1 - (1 - p)^(M-1) where p = P(competitor metric <= true
    metric).  Drawing that Bernoulli event has exactly the law of the
    explicit experiment (ties have probability zero) and works for any M.

Every trial owns a random stream derived from ``(master_seed, trial)``, so
results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import chndtr
from scipy.stats import binomtest

from .blockmem import BlockLinearChannel
from .channels import ChannelModel, InputSpec
from .estimators import (
    PANEL_ORDER,
    FrontEnd,
    Identity,
    PosteriorMean,
    Scale,
    compute_moments,
)
from .gmi import (
    delta_for_front_end,
    gmi_from_delta,
    optimal_scaling,
)

MAX_CODEBOOK = 65536
CHUNK = 64


class MatrixFrontEnd(FrontEnd):
    """Block front end g(y) = G y applied to each length-L block."""

    name = "canonical"

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)

    def __call__(self, y):
        return np.asarray(y, dtype=float) @ self.matrix.T


def message_count(n: int, rate_nats: float) -> int:
    # guard against exp() landing a hair above an integer
    return int(math.ceil(math.exp(n * rate_nats) * (1 - 1e-12)))


@dataclass(frozen=True)
class TrialPlan:
    channel: ChannelModel | BlockLinearChannel
    input: InputSpec
    n: int
    rate_nats: float
    trials: int
    master_seed: int = 0
    front_end: FrontEnd = field(default_factory=Identity)
    a: float = 1.0
    mode: str = "auto"

    def __post_init__(self):
        if self.n < 1 or self.trials < 1:
            raise ValueError("n and trials must be positive")
        if not self.rate_nats > 0:
            raise ValueError("rate must be positive")
        if self.M < 2:
            raise ValueError(f"n*rate = {self.n * self.rate_nats:.4g} gives fewer than 2 messages")
        if self.mode not in ("auto", "explicit", "analytic"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.resolved_mode == "explicit" and self.M > MAX_CODEBOOK:
            raise ValueError(
                f"explicit decoding needs M <= {MAX_CODEBOOK} (n*rate <= 16 ln 2); got M = {self.M}"
            )
        if isinstance(self.channel, BlockLinearChannel) and self.n % self.channel.block_length:
            raise ValueError("n must be a multiple of the block length")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    @property
    def M(self) -> int:
        return message_count(self.n, self.rate_nats)

    @property
    def resolved_mode(self) -> str:
        if self.mode == "auto":
            return "explicit" if self.M <= MAX_CODEBOOK else "analytic"
        return self.mode


@dataclass(frozen=True)
class ErrorRateEstimate:
    errors: int
    trials: int
    point_estimate: float
    ci_lo: float
    ci_hi: float

    @property
    def wilson_ci_95(self):
        return self.ci_lo, self.ci_hi

    @classmethod
    def from_counts(cls, errors: int, trials: int):
        ci = binomtest(int(errors), int(trials)).proportion_ci(0.95, method="wilson")
        return cls(int(errors), int(trials), errors / trials, float(ci.low), float(ci.high))


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(trial,)))


def generate_codebook(M: int, n: int, energy: float, seed) -> np.ndarray:
    """M x n matrix of i.i.d. Normal(0, energy) entries.

    ``seed`` is an integer or a :class:`numpy.random.Generator`.
    """
    if M < 1 or n < 1:
        raise ValueError("M and n must be positive")
    if M > MAX_CODEBOOK:
        raise ValueError(f"codebook of {M} messages exceeds the cap of {MAX_CODEBOOK}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return math.sqrt(energy) * rng.standard_normal((M, n))


def nn_decode(processed, codebook, a: float) -> int:
    """Index (0-based) of the codeword nearest to ``processed`` after scaling by ``a``.

    Ties go to the lowest index.
    """
    processed = np.asarray(processed, dtype=float).ravel()
    codebook = np.atleast_2d(codebook)
    if codebook.shape[1] != processed.size:
        raise ValueError("codeword length does not match the received block")
    metric = np.mean((processed - a * codebook) ** 2, axis=1)
    return int(np.argmin(metric))


def _transmit(plan: TrialPlan, x, rng):
    ch = plan.channel
    if isinstance(ch, BlockLinearChannel):
        y = ch.sample(x.reshape(-1, ch.block_length), rng)
        return np.asarray(plan.front_end(y)).ravel()
    return np.asarray(plan.front_end(ch.sample(x, rng)), dtype=float)


def _explicit_trial(plan: TrialPlan, trial: int) -> bool:
    rng = trial_rng(plan.master_seed, trial)
    codebook = generate_codebook(plan.M, plan.n, plan.input.energy, rng)
    sent = int(rng.integers(plan.M))
    g = _transmit(plan, codebook[sent], rng)
    return nn_decode(g, codebook, plan.a) != sent


def competitor_win_probability(g, x_sent, a: float, energy: float) -> float:
    """P(a fresh Gaussian codeword scores no worse than the sent one)."""
    g = np.asarray(g, dtype=float)
    scale = a * a * energy
    d_sent = float(np.sum((g - a * np.asarray(x_sent)) ** 2)) / scale
    lam = float(np.sum(g * g)) / scale
    return float(chndtr(d_sent, g.size, lam))


def _analytic_trial(plan: TrialPlan, trial: int) -> bool:
    rng = trial_rng(plan.master_seed, trial)
    x = math.sqrt(plan.input.energy) * rng.standard_normal(plan.n)
    g = _transmit(plan, x, rng)
    p = competitor_win_probability(g, x, plan.a, plan.input.energy)
    p_err = -math.expm1((plan.M - 1) * math.log1p(-p)) if p < 1 else 1.0
    return bool(rng.random() < p_err)


def _count(plan: TrialPlan, start: int, stop: int) -> int:
    trial = _explicit_trial if plan.resolved_mode == "explicit" else _analytic_trial
    return sum(trial(plan, t) for t in range(start, stop))


def run_trials(plan: TrialPlan, workers: int = 1) -> ErrorRateEstimate:
    if plan.a == 0:
        raise ValueError("scaling a must be nonzero")
    bounds = [(s, min(s + CHUNK, plan.trials)) for s in range(0, plan.trials, CHUNK)]
    if workers <= 1 or len(bounds) == 1:
        errors = sum(_count(plan, s, e) for s, e in bounds)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            errors = sum(pool.map(lambda b: _count(plan, *b), bounds))
    return ErrorRateEstimate.from_counts(errors, plan.trials)


# ---------------------------------------------------------------------------
# sweeps


FRONT_ENDS = ("identity", "linear", "canonical")


def resolve_front_end(channel: ChannelModel, input: InputSpec, choice: str,
                      order: int = PANEL_ORDER):
    """Front end, decoder scaling a_opt and reference GMI (nats) for a named choice."""
    moments = compute_moments(channel, input, order)
    if choice == "identity":
        fe = Identity()
    elif choice == "linear":
        fe = Scale(moments.cross_moment / moments.output_power)
    elif choice == "canonical":
        fe = PosteriorMean(channel, input, order)
    else:
        raise ValueError(f"front end must be one of {FRONT_ENDS}, got {choice!r}")
    a = optimal_scaling(channel, input, fe, order)
    gmi = gmi_from_delta(delta_for_front_end(moments, fe)).gmi_nats
    return fe, a, gmi


@dataclass(frozen=True)
class SweepRow:
    rate_nats: float
    n: int
    M: int
    trials: int
    errors: int
    error_rate: float
    ci_lo: float
    ci_hi: float
    gmi_ref_nats: float
    front_end: str
    seed: int


def threshold_sweep(channel: ChannelModel, input: InputSpec, rate_grid, n_grid,
                    front_end: str = "identity", trials: int = 2000, master_seed: int = 0,
                    workers: int = 1, mode: str = "auto", order: int = PANEL_ORDER) -> list[SweepRow]:
    """One error-rate estimate per (rate, n) cell, rates outer, n inner."""
    rate_grid, n_grid = list(rate_grid), list(n_grid)
    if not rate_grid or not n_grid:
        raise ValueError("rate and n grids must be nonempty")
    fe, a, gmi = resolve_front_end(channel, input, front_end, order)
    rows = []
    for rate in rate_grid:
        for n in n_grid:
            plan = TrialPlan(channel, input, int(n), float(rate), int(trials), int(master_seed),
                             fe, a, mode)
            est = run_trials(plan, workers)
            rows.append(SweepRow(float(rate), int(n), plan.M, est.trials, est.errors,
                                 est.point_estimate, est.ci_lo, est.ci_hi, gmi, front_end,
                                 int(master_seed)))
    return rows
