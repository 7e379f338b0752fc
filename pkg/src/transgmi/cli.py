"""Command-line interface.

    transgmi analyze  --config run.json [--dump-frontend table.csv]
    transgmi sweep    --config run.json
    transgmi simulate --config run.json --threads 4
    transgmi block    --config run.json
    transgmi validate

All commands write CSV (header row, RFC 4180 line endings) to ``--out`` or
the config's ``output`` path, falling back to stdout.  Exit codes: 0 success,
1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .blockmem import BlockLinearChannel, block_gmi
from .channels import SHAPES, InputSpec, make_channel
from .errors import ConfigError, GmiError
from .estimators import PANEL_ORDER, Identity, PosteriorMean, compute_moments
from .gmi import (
    LN2,
    delta_for_front_end,
    effective_snr_canonical,
    effective_snr_linear,
    gmi_from_delta,
)
from .linksim import resolve_front_end, threshold_sweep
from .validation import run_all

PosFloat = Annotated[float, Field(gt=0, allow_inf_nan=False)]
NonNegFloat = Annotated[float, Field(ge=0, allow_inf_nan=False)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AwgnConfig(_Strict):
    kind: Literal["awgn"]
    noise_var: NonNegFloat


class HardClipConfig(_Strict):
    kind: Literal["hard_clip"]
    clip_level: PosFloat
    noise_var: NonNegFloat = 0.0


class SignConfig(_Strict):
    kind: Literal["sign"]
    noise_var: NonNegFloat = 0.0


class QuantizerConfig(_Strict):
    kind: Literal["uniform_quantizer"]
    bits: Annotated[int, Field(ge=1, le=16)]
    step: PosFloat
    noise_var: NonNegFloat = 0.0


class NonlinearityConfig(_Strict):
    kind: Literal["nonlinearity"]
    shape: Literal["identity", "cube", "tanh", "abs", "cubic_limiter"]
    params: dict[str, PosFloat] = {}
    noise_var: NonNegFloat = 0.0

    @model_validator(mode="after")
    def _known_params(self):
        unknown = sorted(set(self.params) - set(SHAPES[self.shape].defaults))
        if unknown:
            raise ValueError(f"shape {self.shape!r} takes no parameter(s) {unknown}")
        return self


ChannelConfig = Annotated[
    Union[AwgnConfig, HardClipConfig, SignConfig, QuantizerConfig, NonlinearityConfig],
    Field(discriminator="kind"),
]


class InputConfig(_Strict):
    energy: PosFloat = 1.0
    energies: Optional[list[PosFloat]] = Field(None, min_length=1)
    snr: Optional[list[PosFloat]] = Field(None, min_length=1)

    @model_validator(mode="after")
    def _one_grid(self):
        if self.energies is not None and self.snr is not None:
            raise ValueError("give at most one of 'energies' and 'snr'")
        return self


class SimulateConfig(_Strict):
    n: list[Annotated[int, Field(ge=1, le=100_000)]] = Field(min_length=1)
    rates: Optional[list[PosFloat]] = Field(None, min_length=1)
    rate_fractions: Optional[list[PosFloat]] = Field(None, min_length=1)
    trials: Annotated[int, Field(ge=1)] = 2000
    front_end: Literal["identity", "linear", "canonical"] = "identity"
    mode: Literal["auto", "explicit", "analytic"] = "auto"

    @model_validator(mode="after")
    def _one_rate_grid(self):
        if (self.rates is None) == (self.rate_fractions is None):
            raise ValueError("give exactly one of 'rates' and 'rate_fractions'")
        return self


class BlockConfig(_Strict):
    impulse_response: list[Annotated[float, Field(allow_inf_nan=False)]] = Field(min_length=1)
    noise_var: PosFloat
    energy: PosFloat = 1.0
    block_lengths: list[Annotated[int, Field(ge=1, le=4096)]] = Field(min_length=1)

    @model_validator(mode="after")
    def _response(self):
        if not any(self.impulse_response):
            raise ValueError("impulse_response must not be all zero")
        if len(self.impulse_response) > min(self.block_lengths):
            raise ValueError("impulse_response is longer than the shortest block")
        return self


class RunConfig(_Strict):
    channel: Optional[ChannelConfig] = None
    input: InputConfig = InputConfig()
    simulate: Optional[SimulateConfig] = None
    block: Optional[BlockConfig] = None
    output: Optional[str] = None
    seed: Annotated[int, Field(ge=0, lt=2**64)] = 0
    quad_order: Annotated[int, Field(ge=4, le=128)] = PANEL_ORDER
    threads: Annotated[int, Field(ge=1, le=256)] = 1


def _violations(exc: ValidationError):
    out = []
    for err in exc.errors():
        # drop discriminator tags from the location, e.g. ('channel', 'awgn', 'noise_var')
        loc = [str(p) for p in err["loc"] if p not in {"awgn", "hard_clip", "sign", "uniform_quantizer", "nonlinearity"}]
        where = ".".join(loc) or "<root>"
        msg = err["msg"]
        if err["type"] == "extra_forbidden":
            msg = f"unknown key {loc[-1]!r}"
        out.append(f"{where}: {msg}")
    return out


def parse_config(text: str) -> RunConfig:
    """Validate a JSON document; raises :class:`ConfigError` listing every violation."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a JSON object"])
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_violations(exc)) from exc


# ---------------------------------------------------------------------------
# commands


ANALYZE_COLUMNS = [
    "E_s", "noise_var", "delta", "theta", "bussgang_coeff", "lmmse", "mmse",
    "eff_snr_linear", "eff_snr_canonical", "gmi_linear_nats", "gmi_canonical_nats",
    "gmi_linear_bits", "gmi_canonical_bits", "degenerate_flag",
]
SIMULATE_COLUMNS = [
    "rate_nats", "n", "M", "trials", "errors", "error_rate", "ci_lo", "ci_hi",
    "gmi_ref_nats", "front_end", "seed",
]
BLOCK_COLUMNS = [
    "L", "mmse_L", "gmi_L_nats", "gmi_L_bits", "spectral_mmse", "spectral_gmi_nats",
    "spectral_gmi_bits", "theta_sup_gmi_nats",
]
VALIDATE_COLUMNS = ["check", "measured", "bound", "passed"]


def _need(cfg: RunConfig, block: str, command: str):
    if getattr(cfg, block) is None:
        raise ConfigError([f"{block}: required by the '{command}' command"])
    return getattr(cfg, block)


def _grid(cfg: RunConfig, require: bool):
    """(channel, input) pairs in grid order."""
    base = _need(cfg, "channel", "analyze/sweep").model_dump()
    inp = cfg.input
    if inp.snr is not None:
        return [(make_channel({**base, "noise_var": inp.energy / s}), InputSpec(inp.energy)) for s in inp.snr]
    if inp.energies is not None:
        return [(make_channel(base), InputSpec(e)) for e in inp.energies]
    if require:
        raise ConfigError(["input: 'sweep' needs an 'energies' or 'snr' grid"])
    return [(make_channel(base), InputSpec(inp.energy))]


def analyze_row(channel, inp, order=PANEL_ORDER):
    m = compute_moments(channel, inp, order)
    lin = gmi_from_delta(delta_for_front_end(m, Identity()))
    can = gmi_from_delta(delta_for_front_end(m, PosteriorMean(channel, inp, order)))
    return [
        inp.energy, channel.noise_var, lin.delta, m.correlation_ratio, m.bussgang_coeff,
        m.lmmse, m.mmse, effective_snr_linear(m), effective_snr_canonical(m),
        lin.gmi_nats, can.gmi_nats, lin.gmi_bits, can.gmi_bits,
        "true" if (lin.degenerate or can.degenerate) else "false",
    ]


def command_analyze(cfg: RunConfig, require_grid=False):
    return ANALYZE_COLUMNS, [analyze_row(ch, inp, cfg.quad_order) for ch, inp in _grid(cfg, require_grid)]


def command_sweep(cfg: RunConfig):
    return command_analyze(cfg, require_grid=True)


def command_simulate(cfg: RunConfig):
    sim = _need(cfg, "simulate", "simulate")
    channel = make_channel(_need(cfg, "channel", "simulate").model_dump())
    inp = InputSpec(cfg.input.energy)
    if sim.rates is not None:
        rates = sim.rates
    else:
        gmi = resolve_front_end(channel, inp, sim.front_end, cfg.quad_order)[2]
        if not math.isfinite(gmi) or gmi <= 0:
            raise GmiError(f"reference GMI is {gmi}; rate fractions are undefined")
        rates = [f * gmi for f in sim.rate_fractions]
    rows = threshold_sweep(channel, inp, rates, sim.n, sim.front_end, sim.trials, cfg.seed,
                           cfg.threads, sim.mode, cfg.quad_order)
    return SIMULATE_COLUMNS, [
        [r.rate_nats, r.n, r.M, r.trials, r.errors, r.error_rate, r.ci_lo, r.ci_hi,
         r.gmi_ref_nats, r.front_end, r.seed]
        for r in rows
    ]


def command_block(cfg: RunConfig):
    b = _need(cfg, "block", "block")
    rows = []
    for L in b.block_lengths:
        rep = block_gmi(BlockLinearChannel(tuple(b.impulse_response), b.noise_var, L, b.energy))
        rows.append([L, rep.mmse_L, rep.gmi_L_nats, rep.gmi_L_bits, rep.spectral_mmse,
                     rep.spectral_gmi_nats, rep.spectral_gmi_nats / LN2, rep.theta_sup_gmi_nats])
    return BLOCK_COLUMNS, rows


def command_validate(cfg: RunConfig):
    checks = run_all(cfg.quad_order, cfg.seed)
    rows = [[c.name, c.measured, c.bound, "pass" if c.passed else "FAIL"] for c in checks]
    return VALIDATE_COLUMNS, rows, all(c.passed for c in checks)


def dump_front_end(channel, inp, path, order=PANEL_ORDER):
    fe = PosteriorMean(channel, inp, order)
    if fe.levels is not None:
        ys = fe.levels
    else:
        spread = math.sqrt(compute_moments(channel, inp, order).output_power)
        ys = np.linspace(-4 * spread, 4 * spread, 201)
    values = fe(ys)
    _write_csv(path, ["y", "posterior_mean"], zip(ys.tolist(), values.tolist()))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(path).write_text(text, encoding="utf-8", newline="")


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="PATH", help="CSV output path (default: stdout)")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed")
    common.add_argument("--threads", type=int, metavar="N", help="worker threads")
    common.add_argument("--quad-order", type=int, metavar="N", help="Gauss-Legendre nodes per panel")

    parser = argparse.ArgumentParser(prog="transgmi", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    analyze = sub.add_parser("analyze", parents=[common], help="rates and moments for one channel")
    analyze.add_argument("--dump-frontend", metavar="PATH", help="also write the posterior-mean table")
    sub.add_parser("sweep", parents=[common], help="analyze over an energy or SNR grid")
    sub.add_parser("simulate", parents=[common], help="random-coding error rates")
    sub.add_parser("block", parents=[common], help="block-memory GMI over block lengths")
    sub.add_parser("validate", parents=[common], help="run the invariant suite")
    return parser


def _load(args) -> RunConfig:
    if args.config is None:
        if args.command != "validate":
            raise ConfigError([f"--config is required for '{args.command}'"])
        cfg = RunConfig()
    else:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError([f"cannot read config: {exc}"]) from exc
        cfg = parse_config(text)
    overrides = {
        "output": args.out,
        "seed": args.seed,
        "threads": args.threads,
        "quad_order": args.quad_order,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        try:
            cfg = RunConfig.model_validate({**cfg.model_dump(exclude_none=True), **overrides})
        except ValidationError as exc:
            raise ConfigError(_violations(exc)) from exc
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _load(args)
        ok = True
        if args.command == "analyze":
            header, rows = command_analyze(cfg)
            if args.dump_frontend:
                ch, inp = _grid(cfg, False)[0]
                dump_front_end(ch, inp, args.dump_frontend, cfg.quad_order)
        elif args.command == "sweep":
            header, rows = command_sweep(cfg)
        elif args.command == "simulate":
            header, rows = command_simulate(cfg)
        elif args.command == "block":
            header, rows = command_block(cfg)
        else:
            header, rows, ok = command_validate(cfg)
        _write_csv(cfg.output, header, rows)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 2
    except (GmiError, ValueError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
