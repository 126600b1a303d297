"""Command-line entry points tying the chain together.

Thin dispatch over :mod:`neurochain.ops` and the service: generate
synthetic datasets, fit decoders, replay a scenario against an arm (in
process by default), evaluate traces, and serve the arm simulator.

Exit codes: 0 success, 2 config error, 3 data error, 4 transport error.
Reports are printed as flat ``key = value`` lines. Set ``NEUROCHAIN_LOG``
to adjust log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import netproto, ops, synth
from .armsim import ArmConfig, ArmSimulator
from .decoder import FitConfig
from .errors import (
    ConfigError,
    DataError,
    ProtocolError,
    TransportError,
    WireParseError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRANSPORT = 4


def _setup_logging() -> None:
    level = os.environ.get("NEUROCHAIN_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _synth_config(args: argparse.Namespace) -> synth.SynthConfig:
    raw: dict = {}
    if args.config:
        with open(args.config) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad synth config JSON: {exc}") from None
    profile_keys = {f: raw.pop(f) for f in
                    ("events_per_minute", "first_event_s", "rise_s", "hold_s",
                     "release_s", "amplitude_mm", "thumb_scale", "rest_mm")
                    if f in raw}
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.duration is not None:
        raw["duration_s"] = args.duration
    if args.channels is not None:
        raw["channels"] = args.channels
    if "baseline_hz" in raw:
        raw["baseline_hz"] = tuple(raw["baseline_hz"])
    if "gain_hz_per_mm_s" in raw:
        raw["gain_hz_per_mm_s"] = tuple(raw["gain_hz_per_mm_s"])
    try:
        return synth.SynthConfig(profile=synth.GripProfile(**profile_keys), **raw)
    except TypeError as exc:
        raise ConfigError(f"bad synth config: {exc}") from None


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = _synth_config(args)
    report = ops.generate_dataset(args.out, cfg)
    print(ops.format_report(report))
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    config = FitConfig(
        bin_width_s=args.bin_ms / 1000.0,
        smoothing_depth=args.depth,
        pair_count=args.pairs,
        ridge=args.ridge,
        threshold_rule="zero" if args.zero_thresholds else "percentile",
        percentile_q=args.percentile,
    )
    report = ops.fit_finger(args.spikes, args.positions, args.finger,
                            args.out, config, args.train_frac)
    print(ops.format_report(report))
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    arm_config = ArmConfig(
        command_latency_s=args.cmd_latency_ms / 1000.0,
        feedback_latency_s=args.fb_latency_ms / 1000.0,
    )
    report = ops.replay_scenario(
        args.scenario, addr=args.addr, virtual_clock=args.virtual_clock,
        out_dir=args.out, chunk_s=args.chunk_ms / 1000.0, arm_config=arm_config)
    print(ops.format_report(report))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    report = ops.eval_trace(args.trace, oscillation_window_s=args.window_s)
    print(ops.format_report(report))
    return EXIT_OK


def load_arm_config(path: str | None, overrides: dict) -> ArmConfig:
    """Arm parameters from a flat ``key = value`` file (keys are ArmConfig
    field names), with command-line flags taking precedence."""
    from dataclasses import fields

    values: dict = {}
    valid = {f.name: f.type for f in fields(ArmConfig)}
    if path:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in valid:
                    raise ConfigError(f"{path}:{lineno}: unknown arm parameter {key!r}")
                try:
                    values[key] = int(value) if key in ("telemetry_maxlen",
                                                        "max_pending_commands") \
                        else float(value)
                except ValueError:
                    raise ConfigError(f"{path}:{lineno}: bad value {value.strip()!r}") from None
    values.update(overrides)
    return ArmConfig(**values)


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    overrides = {
        "command_latency_s": args.cmd_latency_ms / 1000.0,
        "feedback_latency_s": args.fb_latency_ms / 1000.0,
        "tick_s": args.tick_ms / 1000.0,
        "tracking_gain_per_s": args.tracking_gain,
        "finger_speed_mm_s": args.finger_speed,
    }
    if args.config:
        # Flags keep their defaults unless explicitly given; detect that by
        # comparing with the parser defaults so the file can win.
        defaults = {"command_latency_s": 0.150, "feedback_latency_s": 0.150,
                    "tick_s": 0.002, "tracking_gain_per_s": 200.0,
                    "finger_speed_mm_s": 40.0}
        overrides = {k: v for k, v in overrides.items() if v != defaults[k]}
    sim = ArmSimulator(load_arm_config(args.config, overrides))
    app = create_app(sim, serve_tcp=True, tcp_port=args.tcp_port)
    uvicorn.run(app, host=args.host, port=args.http_port,
                log_level=os.environ.get("NEUROCHAIN_LOG", "warning").lower())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neurochain",
        description="Spike-to-arm processing chain: synthesize, fit, replay, "
                    "evaluate, serve.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON synth config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--duration", type=float, default=None, help="seconds")
    p.add_argument("--channels", type=int, default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit a finger decoder from CSVs")
    p.add_argument("--spikes", required=True)
    p.add_argument("--positions", required=True)
    p.add_argument("--finger", choices=("index", "thumb"), required=True)
    p.add_argument("--out", help="params file to write")
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--ridge", type=float, default=1000.0)
    p.add_argument("--bin-ms", type=float, default=100.0)
    p.add_argument("--depth", type=int, default=10, help="history smoothing depth")
    p.add_argument("--pairs", type=int, default=32, help="synchrony pair count")
    p.add_argument("--percentile", type=float, default=20.0)
    p.add_argument("--zero-thresholds", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("replay", help="run a scenario (hosts an in-process arm "
                                      "unless --addr points at a server)")
    p.add_argument("--scenario", required=True)
    p.add_argument("--addr", default=None, help="host:port of a live arm server")
    p.add_argument("--virtual-clock", action="store_true",
                   help="run as fast as possible, bit-deterministically")
    p.add_argument("--out", default=".", help="directory for trace CSVs")
    p.add_argument("--chunk-ms", type=float, default=20.0)
    p.add_argument("--cmd-latency-ms", type=float, default=150.0)
    p.add_argument("--fb-latency-ms", type=float, default=150.0)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("eval", help="lag/oscillation metrics of a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--window-s", type=float, default=2.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="serve the arm simulator (TCP + HTTP/WS)")
    p.add_argument("--config", default=None,
                   help="flat key=value file of arm parameters (flags override)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--tcp-port", type=int, default=netproto.DEFAULT_TCP_PORT)
    p.add_argument("--http-port", type=int, default=netproto.DEFAULT_WS_PORT)
    p.add_argument("--cmd-latency-ms", type=float, default=150.0)
    p.add_argument("--fb-latency-ms", type=float, default=150.0)
    p.add_argument("--tick-ms", type=float, default=2.0)
    p.add_argument("--tracking-gain", type=float, default=200.0)
    p.add_argument("--finger-speed", type=float, default=40.0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, WireParseError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TransportError, ProtocolError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
