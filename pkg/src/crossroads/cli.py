"""Command-line entry points.

Exit codes: 0 success, 2 configuration or usage errors, 3 I/O errors,
4 contract violations (malformed checkpoints, internal invariant failures).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import subprocess
import sys

import numpy as np

from . import __version__
from ._kernels import BACKEND_NAME
from .config import PROFILES, TrainConfig, load_config, make_config
from .errors import ContractViolationError, CrossroadsError, ValidationError
from .geometry import Intention
from .harness import (
    BASELINE_METHODS,
    FLOW_HORIZON,
    FLOW_RATE,
    benchmark_world,
    make_policy,
    measure_decision_latency,
    run_benchmark,
    run_scenario_episode,
)
from .metrics import export_report
from .nn import DuelingQNetwork, standard_architecture
from .world import ScenarioSpec, TrajectoryRecorder, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CONTRACT = 4

AGENT_NAMES = ("left", "straight", "right")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossroads",
        description="Intersection-crossing agents, simulator, and baselines.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--profile", choices=sorted(PROFILES), default="parity")

    p = sub.add_parser("train", help="train the three intention agents")
    common(p)
    p.add_argument("--out", help="output directory for logs and checkpoints")
    p.add_argument("--steps", type=int, help="override total training steps")

    p = sub.add_parser("evaluate", help="benchmark trained checkpoints")
    common(p)
    p.add_argument("--checkpoint-dir", required=True,
                   help="directory with seed{S}_step{N}_{agent}.ckpt files")
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--flow", type=float, default=FLOW_RATE)
    p.add_argument("--horizon", type=float, default=FLOW_HORIZON)
    p.add_argument("--no-suite", action="store_true",
                   help="skip the 81-scenario suite")
    p.add_argument("--out", help="report file (default: stdout summary only)")
    p.add_argument("--format", choices=("csv", "json"), default="json")

    p = sub.add_parser("baseline", help="benchmark a reference controller")
    common(p)
    p.add_argument("--method", required=True, choices=BASELINE_METHODS)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--flow", type=float, default=FLOW_RATE)
    p.add_argument("--horizon", type=float, default=FLOW_HORIZON)
    p.add_argument("--no-suite", action="store_true")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="json")

    p = sub.add_parser("bench", help="measure simulator and network speed")
    common(p)
    p.add_argument("--steps", type=int, default=5000)

    p = sub.add_parser("describe", help="print config, architecture, backend")
    common(p)

    p = sub.add_parser("dump-trajectory", help="simulate and write per-step CSV")
    common(p)
    p.add_argument("--method", default="fttl1",
                   choices=BASELINE_METHODS,
                   help="controller for the dumped run")
    p.add_argument("--scenario", help="scenario file (default: all-straight)")
    p.add_argument("--max-steps", type=int, default=1000)
    p.add_argument("--out", required=True)

    return parser


def _config_from(args) -> TrainConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        return load_config(args.config, args.profile, **overrides)
    return make_config(args.profile, **overrides)


def cmd_train(args) -> int:
    from .trainer import Trainer

    cfg = _config_from(args)
    if args.out:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    if args.steps is not None:
        cfg = dataclasses.replace(cfg, total_steps=args.steps)
    trainer = Trainer(cfg)
    trainer.train()
    paths = trainer.checkpoint_paths()
    print(f"trained {trainer.global_step} steps "
          f"({len(trainer.train_rows)} episodes, epsilon {trainer.agents.epsilon:.4f})")
    for path in paths:
        print(f"checkpoint: {path}")
    return EXIT_OK


def _find_checkpoints(directory: str, seeds: list[int]) -> dict[int, dict[str, str]]:
    """Latest-step checkpoint triple per requested seed."""
    if not os.path.isdir(directory):
        raise ValidationError(f"checkpoint directory not found: {directory}")
    found: dict[int, dict[str, tuple[int, str]]] = {}
    for name in os.listdir(directory):
        if not name.endswith(".ckpt"):
            continue
        stem = name[: -len(".ckpt")]
        parts = stem.split("_")
        if len(parts) != 3 or not parts[0].startswith("seed") \
                or not parts[1].startswith("step") or parts[2] not in AGENT_NAMES:
            continue
        try:
            seed, step = int(parts[0][4:]), int(parts[1][4:])
        except ValueError:
            continue
        best = found.setdefault(seed, {})
        if parts[2] not in best or best[parts[2]][0] < step:
            best[parts[2]] = (step, os.path.join(directory, name))
    out = {}
    for seed in seeds:
        triple = found.get(seed, {})
        if set(triple) == set(AGENT_NAMES):
            out[seed] = {agent: path for agent, (_, path) in triple.items()}
    missing = [s for s in seeds if s not in out]
    if missing:
        raise ValidationError(
            f"no complete checkpoint triple in {directory} for seeds: {missing}"
        )
    return out


def _print_report(report) -> None:
    print(f"method: {report.method}  seeds: {report.seeds}")
    print(f"travel time     {report.mean_travel_time:8.2f} s "
          f"(std {report.std_travel_time:.2f})")
    print(f"waiting time    {report.mean_waiting_time:8.2f} s "
          f"(std {report.std_waiting_time:.2f})")
    print(f"average speed   {report.mean_average_speed:8.2f} m/s "
          f"(std {report.std_average_speed:.2f})")
    print(f"collision rate  {report.collision_rate:8.4f}")
    if report.mean_decision_latency_ms:
        print(f"decision latency {report.mean_decision_latency_ms:7.3f} ms")


def cmd_evaluate(args) -> int:
    cfg = _config_from(args)
    checkpoints = _find_checkpoints(args.checkpoint_dir, args.seeds)
    report = run_benchmark("agents", args.seeds, args.flow, args.horizon,
                           checkpoints_by_seed=checkpoints, cfg=cfg,
                           include_suite=not args.no_suite)
    _print_report(report)
    if args.out:
        export_report(report, args.out, args.format)
        print(f"report written to {args.out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _config_from(args)
    report = run_benchmark(args.method, args.seeds, args.flow, args.horizon,
                           cfg=cfg, include_suite=not args.no_suite)
    _print_report(report)
    if args.out:
        export_report(report, args.out, args.format)
        print(f"report written to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config_from(args)
    print(f"kernel backend: {BACKEND_NAME}")
    rate = benchmark_world(n_steps=args.steps)
    print(f"world stepping (8 vehicles): {rate:,.0f} steps/s")
    if BACKEND_NAME == "native":
        # the backend is chosen at import, so the fallback runs in a subprocess
        script = ("from crossroads.harness import benchmark_world; "
                  f"print(benchmark_world(n_steps={args.steps}))")
        proc = subprocess.run(
            [sys.executable, "-c", script],
            env={**os.environ, "CROSSROADS_PURE_PYTHON": "1"},
            capture_output=True, text=True,
        )
        if proc.returncode == 0:
            fallback = float(proc.stdout.strip().splitlines()[-1])
            print(f"pure-python fallback:        {fallback:,.0f} steps/s "
                  f"({rate / fallback:.1f}x slower)")
    latency = measure_decision_latency(cfg.resolution, cfg.frame_stack)
    print(f"decision latency ({cfg.resolution}x{cfg.resolution}, batch 1): "
          f"{latency:.3f} ms (control period 100 ms)")
    return EXIT_OK


def cmd_describe(args) -> int:
    cfg = _config_from(args)
    print(f"crossroads {__version__}  backend={BACKEND_NAME}  "
          f"profile={cfg.profile}  config_hash={cfg.config_hash()}")
    for key, value in sorted(vars(cfg).items()):
        print(f"  {key}: {value}")
    arch = standard_architecture(cfg.resolution, 3 * cfg.frame_stack,
                                 cfg.n_actions, cfg.hidden)
    net = DuelingQNetwork(arch, np.random.default_rng(cfg.seed))
    print(net.describe())
    return EXIT_OK


def cmd_dump_trajectory(args) -> int:
    cfg = _config_from(args)
    if args.scenario:
        spec = load_scenario(args.scenario)
    else:
        spec = ScenarioSpec.four_way((Intention.STRAIGHT,) * 4)
    policy = make_policy(args.method, cfg.seed)
    recorder = TrajectoryRecorder()
    result = run_scenario_episode(policy, spec, max_steps=args.max_steps,
                                  recorder=recorder)
    recorder.write(args.out)
    print(f"{result.steps} steps, {len(result.records)} vehicles -> {args.out}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
    "bench": cmd_bench,
    "describe": cmd_describe,
    "dump-trajectory": cmd_dump_trajectory,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ContractViolationError, CrossroadsError) as exc:
        print(f"contract error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
