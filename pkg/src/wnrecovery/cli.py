"""Command line interface: ``scenario``, ``plan``, ``batch`` and ``oracle-check``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from .hazard import HazardConfigError, load_hazard_config
from .harness import (ConfigError, ExperimentConfig, PlannerSpec, PRESETS, ScenarioFailure,
                      emit_outputs, load_experiment_config, run_batch, run_recovery,
                      sample_scenarios)
from .mdp import RecoveryModel
from .network import (NetworkValidationError, ServiceabilityFlags, load_network,
                      serviceable_population)
from .planner import BudgetError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
CONFIG_ERRORS = (ConfigError, BudgetError, NetworkValidationError, HazardConfigError,
                 json.JSONDecodeError, FileNotFoundError)

log = logging.getLogger("wnrecovery")


def _load_config(arg: str | None) -> ExperimentConfig:
    if arg is None or arg in ("desk", "paper"):
        text = resources.files("wnrecovery.data").joinpath(f"{arg or 'desk'}.json").read_text()
        return ExperimentConfig.from_document(json.loads(text))
    return load_experiment_config(arg)


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "scenarios", None) is not None:
        changes["num_scenarios"] = args.scenarios
    if getattr(args, "resources", None):
        changes["resources"] = tuple(int(m) for m in args.resources.split(","))
    if getattr(args, "planners", None):
        by_name = {p.name: p for p in cfg.planners}
        chosen = []
        for name in args.planners.split(","):
            name = name.strip()
            if name in by_name:
                chosen.append(by_name[name])
            elif name in PRESETS:
                chosen.append(PlannerSpec.from_document({"preset": name}))
            else:
                raise ConfigError(f"unknown planner {name!r}; configured: {sorted(by_name)}, "
                                  f"presets: {sorted(PRESETS)}")
        changes["planners"] = tuple(chosen)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def cmd_scenario(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    network = load_network(cfg.network_path)
    hazard = load_hazard_config(cfg.hazard_path)
    scenarios = sample_scenarios(network, hazard, cfg.num_scenarios, cfg.master_seed)
    flags = ServiceabilityFlags(cfg.minor_is_functional)
    doc = {"master_seed": cfg.master_seed,
           "scenarios": [{"scenario_id": i, **s.to_document(),
                          "served_population": serviceable_population(network, s.damage, flags)}
                         for i, s in enumerate(scenarios)]}
    text = json.dumps(doc, indent=1) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "scenarios.json").write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    network = load_network(cfg.network_path)
    hazard = load_hazard_config(cfg.hazard_path)
    scenarios = sample_scenarios(network, hazard, args.scenario_id + 1, cfg.master_seed)
    spec = cfg.planners[0]
    M = cfg.resources[0]
    model = RecoveryModel(network, scenarios[args.scenario_id], M,
                          days_per_break=cfg.days_per_break,
                          flags=ServiceabilityFlags(cfg.minor_is_functional))
    traj = run_recovery(model, spec, cfg.master_seed, args.scenario_id)
    print(f"# planner={spec.name} scenario={args.scenario_id} M={M} seed={cfg.master_seed}")
    print(f"day 0.000: served {traj.curve.points[0][1]}")
    for st, (day, served) in zip(traj.stages, traj.curve.points[1:]):
        print(f"stage {st.stage:3d} n={st.n:4d} simq={st.simq_calls:6d} "
              f"assign=[{', '.join(st.assigned)}] -> done [{', '.join(st.completed)}] "
              f"at day {day:.3f}: served {served}")
    return EXIT_OK


def cmd_batch(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    out = Path(args.out)
    for M in cfg.resources:
        result = run_batch(cfg, M, threads=args.threads)
        target = out if len(cfg.resources) == 1 else out / f"M{M}"
        emit_outputs(result, target)
        for name, s in result.planners.items():
            print(f"M={M} {name:>14s}: AUC {s.auc_mean:14.1f} +/- {s.auc_se:10.1f} "
                  f"person-days (horizon {result.horizon_days:.2f} d), SimQ calls {s.simq_calls}")
    return EXIT_OK


def cmd_oracle_check(args: argparse.Namespace) -> int:
    from .checks import run_oracle_checks
    results = run_oracle_checks(args.seed or 0, rollout_alpha=args.alpha)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wnrecovery", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="experiment config JSON, or 'desk' / 'paper' (default: desk)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--planners", help="comma-separated planner names or presets")
        p.add_argument("--scenarios", type=int, help="number of scenarios")
        p.add_argument("--resources", help="crew count(s), comma separated")
        p.add_argument("--threads", type=int, default=1, help="worker processes (results unchanged)")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("scenario", help="sample and dump initial damage maps")
    common(p)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("plan", help="run one planner on one scenario and print the action trace")
    common(p)
    p.add_argument("--scenario-id", type=int, default=0)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("batch", help="run the full experiment and write CSV/summary outputs")
    common(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("oracle-check", help="check planners against the exact tabular oracle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=int, default=10_000, help="rollout samples per action")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "batch" and not args.out:
        parser.error("batch requires --out")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioFailure as exc:
        if isinstance(exc.__cause__, CONFIG_ERRORS):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
