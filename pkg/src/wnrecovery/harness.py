"""Experiment orchestration: recovery trajectories, batches, curve aggregation and outputs."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .hazard import HazardConfig, Scenario, load_hazard_config, sample_scenario
from .mdp import RecoveryModel, RecoveryState
from .network import ServiceabilityFlags, WaterNetwork, load_network
from .planner import (Decision, OcbaConfig, RolloutConfig, make_policy, ocba_rollout,
                      uniform_rollout)
from .streams import PLANNER, SCENARIO, TRAJECTORY, Streams

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class ScenarioFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- planner specs

@dataclass(frozen=True)
class StageBudget:
    """Per-stage OCBA budget: ``per_action*n + constant``, or a fraction of TEA's ``n*alpha``."""

    per_action: int = 5
    constant: int = 5000
    tea_fraction: float | None = None
    tea_alpha: int | None = None

    def __call__(self, n: int) -> int:
        if self.tea_fraction is not None:
            return int(math.floor(self.tea_fraction * self.tea_alpha * n + 0.5))
        return self.per_action * n + self.constant

    @classmethod
    def parse(cls, value: Any) -> "StageBudget":
        if isinstance(value, StageBudget):
            return value
        if isinstance(value, (int, float)):
            return cls(per_action=0, constant=int(value))
        if isinstance(value, Mapping):
            if value.get("tea_fraction") is not None:
                if value.get("tea_alpha") is None:
                    raise ConfigError("B.tea_fraction needs B.tea_alpha")
                return cls(tea_fraction=float(value["tea_fraction"]), tea_alpha=int(value["tea_alpha"]))
            return cls(int(value.get("per_action", 0)), int(value.get("constant", 0)))
        raise ConfigError(f"cannot parse budget {value!r}")

    def describe(self) -> str:
        if self.tea_fraction is not None:
            return f"{self.tea_fraction:g}*{self.tea_alpha}*n"
        return f"{self.per_action}*n+{self.constant}"


@dataclass(frozen=True)
class PlannerSpec:
    name: str
    kind: str = "base"  # base | tea | ocba
    h: int | None = 10
    alpha: int = 200
    gamma: float = 0.99
    B: StageBudget = StageBudget()
    n0: int = 5
    delta_fraction: float = 0.15
    action_cap: int | None = None
    base_policy_kind: str = "priority"

    def __post_init__(self) -> None:
        if self.kind not in ("base", "tea", "ocba"):
            raise ConfigError(f"planner {self.name!r}: unknown kind {self.kind!r}")
        try:
            RolloutConfig(self.h, self.alpha, self.gamma, self.action_cap)
            if self.kind == "ocba":
                OcbaConfig(self.B, self.n0, self.delta_fraction)
        except ValueError as exc:
            raise ConfigError(f"planner {self.name!r}: {exc}") from None

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "PlannerSpec":
        doc = dict(doc)
        preset = doc.pop("preset", None)
        if preset and preset not in PRESETS:
            raise ConfigError(f"unknown planner preset {preset!r}")
        base: dict[str, Any] = dict(PRESETS[preset]) if preset else {}
        base.update(doc)
        base.setdefault("name", preset or base.get("kind", "base"))
        if "B" in base:
            base["B"] = StageBudget.parse(base["B"])
        known = set(cls.__dataclass_fields__)
        unknown = set(base) - known
        if unknown:
            raise ConfigError(f"planner {base['name']!r}: unknown field(s) {sorted(unknown)}")
        return cls(**base)

    def to_document(self) -> dict[str, Any]:
        d = asdict(self)
        d["B"] = asdict(self.B)
        return d

    def rollout_config(self) -> RolloutConfig:
        return RolloutConfig(self.h, self.alpha, self.gamma, self.action_cap)

    def ocba_config(self) -> OcbaConfig:
        return OcbaConfig(self.B, self.n0, self.delta_fraction)

    def decide(self, model: RecoveryModel, state: RecoveryState, policy, streams: Streams) -> Decision:
        if self.kind == "base":
            action = policy(state, streams.generator(0))
            return Decision(action, 0, [action], [], 0, None)
        if self.kind == "tea":
            return uniform_rollout(model, state, policy, self.rollout_config(), streams)
        return ocba_rollout(model, state, policy, self.h, self.gamma, self.ocba_config(), streams,
                            self.action_cap)


PRESETS: dict[str, dict[str, Any]] = {
    "base": {"kind": "base"},
    "tea": {"kind": "tea", "alpha": 200},
    "ocba1": {"kind": "ocba", "B": StageBudget(5, 5000)},
    "ocba2": {"kind": "ocba", "B": StageBudget(5, 10000)},
    "ocba3": {"kind": "ocba", "B": StageBudget(5, 20000)},
    # desk scale: budgets divided by ten
    "tea-desk": {"kind": "tea", "alpha": 20},
    "ocba1-desk": {"kind": "ocba", "B": StageBudget(5, 500)},
    "ocba2-desk": {"kind": "ocba", "B": StageBudget(5, 1000)},
    "ocba3-desk": {"kind": "ocba", "B": StageBudget(5, 2000)},
}


# ---------------------------------------------------------------- experiment config

@dataclass(frozen=True)
class ExperimentConfig:
    planners: tuple[PlannerSpec, ...]
    network_path: str | None = None
    hazard_path: str | None = None
    num_scenarios: int = 100
    resources: tuple[int, ...] = (3,)
    horizon_days: float | None = None
    master_seed: int = 2019
    grid_step_days: float = 0.25
    days_per_break: float = 1.0
    minor_is_functional: bool = False

    def __post_init__(self) -> None:
        if self.num_scenarios < 1:
            raise ConfigError("num_scenarios must be >= 1")
        if not self.planners:
            raise ConfigError("at least one planner is required")
        names = [p.name for p in self.planners]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise ConfigError(f"duplicate planner name(s): {', '.join(dup)}")
        if not self.resources or any(m < 1 for m in self.resources):
            raise ConfigError("resources must list positive crew counts")
        if self.horizon_days is not None and self.horizon_days <= 0:
            raise ConfigError("horizon_days must be > 0")
        if self.grid_step_days <= 0:
            raise ConfigError("grid_step_days must be > 0")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")

    @classmethod
    def from_document(cls, doc: Mapping[str, Any], base_dir: Path | None = None) -> "ExperimentConfig":
        def resolve(p):
            if p is None or base_dir is None or Path(p).is_absolute():
                return p
            return str((base_dir / p).resolve())

        try:
            raw_planners = doc.get("planners")
            if raw_planners is None and "planner" in doc:
                raw_planners = [doc["planner"]]
            planners = tuple(PlannerSpec.from_document(p) for p in raw_planners or [])
            res = doc.get("resources", doc.get("M", [3]))
            res = (res,) if isinstance(res, int) else tuple(int(m) for m in res)
            return cls(
                planners=planners,
                network_path=resolve(doc.get("network")),
                hazard_path=resolve(doc.get("hazard")),
                num_scenarios=int(doc.get("num_scenarios", 100)),
                resources=res,
                horizon_days=doc.get("horizon_days"),
                master_seed=int(doc.get("master_seed", 2019)),
                grid_step_days=float(doc.get("grid_step_days", 0.25)),
                days_per_break=float(doc.get("days_per_break", 1.0)),
                minor_is_functional=bool(doc.get("minor_is_functional", False)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc

    def to_document(self) -> dict[str, Any]:
        return {
            "network": self.network_path, "hazard": self.hazard_path,
            "num_scenarios": self.num_scenarios, "resources": list(self.resources),
            "horizon_days": self.horizon_days, "master_seed": self.master_seed,
            "grid_step_days": self.grid_step_days, "days_per_break": self.days_per_break,
            "minor_is_functional": self.minor_is_functional,
            "planners": [p.to_document() for p in self.planners],
        }


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_document(doc, path.parent)


# ---------------------------------------------------------------- trajectories

@dataclass
class RecoveryCurve:
    points: list[tuple[float, int]]
    scenario_id: int
    planner: str

    def served_at(self, day: float) -> int:
        value = self.points[0][1]
        for t, p in self.points:
            if t > day:
                break
            value = p
        return value

    def saturation_day(self) -> float:
        final = self.points[-1][1]
        for t, p in self.points:
            if p == final:
                return t
        return self.points[-1][0]


@dataclass
class StageRecord:
    stage: int
    elapsed_days: float
    n: int
    simq_calls: int
    expected_calls: int
    assigned: list[str]
    completed: list[str]


@dataclass
class Trajectory:
    curve: RecoveryCurve
    stages: list[StageRecord] = field(default_factory=list)

    @property
    def simq_calls(self) -> int:
        return sum(s.simq_calls for s in self.stages)


def expected_simq_calls(spec: PlannerSpec, n: int) -> int:
    """SimQ calls a planner must spend on a stage with ``n`` candidate actions."""
    if spec.kind == "base":
        return 0
    if spec.kind == "tea":
        return n * spec.alpha
    return spec.n0 if n == 1 else spec.B(n)


def true_repair_durations(model: RecoveryModel, streams: Streams) -> dict[str, float]:
    """One realization of total repair time per damaged component, shared by all planners."""
    state = model.initial_state()
    return {d.id: model.sample_repair_time(d, streams.generator(k))
            for k, d in enumerate(state.damaged)}


def run_recovery(model: RecoveryModel, spec: PlannerSpec, seed: int, scenario_id: int = 0) -> Trajectory:
    """Plan and execute repairs until every component is restored."""
    state = model.initial_state()
    root = Streams(seed)
    durations = true_repair_durations(model, root.child(TRAJECTORY, scenario_id))
    policy = make_policy(model, spec.base_policy_kind)
    curve = RecoveryCurve([(0.0, model.served(state))], scenario_id, spec.name)
    traj = Trajectory(curve)
    stage = 0
    while not model.is_terminal(state):
        decision = spec.decide(model, state, policy, root.child(PLANNER, scenario_id, stage))
        out = model.simulate_transition(state, decision.action, None, durations)
        traj.stages.append(StageRecord(
            stage, state.elapsed_days, decision.n, decision.simq_calls,
            expected_simq_calls(spec, decision.n),
            [state.damaged[i].id for i in decision.action.indices], list(out.completed_ids)))
        state = out.next_state
        curve.points.append((state.elapsed_days, out.served_population))
        stage += 1
    return traj


def auc(curve: RecoveryCurve, horizon_days: float) -> float:
    """Area (person-days) under the step curve on [0, horizon_days]."""
    if horizon_days <= 0:
        raise ValueError("horizon_days must be > 0")
    area = 0.0
    pts = curve.points
    for k, (t, p) in enumerate(pts):
        if t >= horizon_days:
            break
        end = pts[k + 1][0] if k + 1 < len(pts) else horizon_days
        area += p * (min(end, horizon_days) - t)
    return area


# ---------------------------------------------------------------- batches

@dataclass
class PlannerSummary:
    name: str
    auc: list[float]
    simq_calls: int
    mean_curve: np.ndarray

    @property
    def auc_mean(self) -> float:
        return float(np.mean(self.auc))

    @property
    def auc_se(self) -> float:
        if len(self.auc) < 2:
            return 0.0
        return float(np.std(self.auc, ddof=1) / math.sqrt(len(self.auc)))


@dataclass
class BatchResult:
    config: ExperimentConfig
    M: int
    total_population: int
    scenario_ids: list[int]
    trajectories: dict[str, list[Trajectory]]
    horizon_days: float
    grid: np.ndarray
    planners: dict[str, PlannerSummary]

    def paired_difference(self, a: str, b: str) -> tuple[float, float]:
        """Mean and standard error of per-scenario AUC(a) - AUC(b)."""
        d = np.asarray(self.planners[a].auc) - np.asarray(self.planners[b].auc)
        se = float(np.std(d, ddof=1) / math.sqrt(len(d))) if len(d) > 1 else 0.0
        return float(np.mean(d)), se


def sample_scenarios(network: WaterNetwork, hazard: HazardConfig, num: int, seed: int) -> list[Scenario]:
    root = Streams(seed)
    return [sample_scenario(network, hazard, root.generator(SCENARIO, i)) for i in range(num)]


def _run_job(job) -> tuple[str, int, Trajectory]:
    network, scenario, spec, M, seed, i, dpb, flags = job
    model = RecoveryModel(network, scenario, M, days_per_break=dpb, flags=flags)
    try:
        return spec.name, i, run_recovery(model, spec, seed, i)
    except Exception as exc:
        raise ScenarioFailure(
            f"scenario {i} (master seed {seed}) failed under planner {spec.name!r}: {exc}") from exc


def mean_curve(curves: Sequence[RecoveryCurve], grid: np.ndarray) -> np.ndarray:
    out = np.zeros(len(grid))
    for c in curves:
        times = np.array([t for t, _ in c.points])
        vals = np.array([p for _, p in c.points], dtype=float)
        idx = np.searchsorted(times, grid, side="right") - 1
        out += vals[np.maximum(idx, 0)]
    return out / len(curves)


def run_batch(config: ExperimentConfig, M: int | None = None, threads: int = 1,
              network: WaterNetwork | None = None, hazard: HazardConfig | None = None) -> BatchResult:
    """Run every planner on a common set of sampled scenarios with ``M`` crews."""
    M = config.resources[0] if M is None else M
    network = network or load_network(config.network_path)
    hazard = hazard or load_hazard_config(config.hazard_path)
    scenarios = sample_scenarios(network, hazard, config.num_scenarios, config.master_seed)
    flags = ServiceabilityFlags(config.minor_is_functional)
    jobs = [(network, scenarios[i], spec, M, config.master_seed, i, config.days_per_break, flags)
            for spec in config.planners for i in range(config.num_scenarios)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    trajectories: dict[str, list[Trajectory]] = {p.name: [None] * config.num_scenarios  # type: ignore[list-item]
                                                 for p in config.planners}
    for name, i, traj in results:
        trajectories[name][i] = traj

    if config.horizon_days is not None:
        horizon = float(config.horizon_days)
    else:
        horizon = max(t.curve.saturation_day() for ts in trajectories.values() for t in ts)
        horizon = max(horizon, config.grid_step_days)
    steps = int(math.ceil(horizon / config.grid_step_days - 1e-9))
    grid = np.arange(steps + 1) * config.grid_step_days
    planners = {
        name: PlannerSummary(name, [auc(t.curve, horizon) for t in ts],
                             sum(t.simq_calls for t in ts), mean_curve([t.curve for t in ts], grid))
        for name, ts in trajectories.items()}
    return BatchResult(config, M, network.total_population, list(range(config.num_scenarios)),
                       trajectories, horizon, grid, planners)


# ---------------------------------------------------------------- outputs

CURVES_FILE = "curves.csv"
MEAN_CURVES_FILE = "mean_curves.csv"
SUMMARY_FILE = "summary.json"


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def summary_document(result: BatchResult) -> dict[str, Any]:
    names = list(result.planners)
    first = names[0]
    return {
        "master_seed": result.config.master_seed,
        "M": result.M,
        "num_scenarios": len(result.scenario_ids),
        "total_population": result.total_population,
        "horizon_days": result.horizon_days,
        "auc": {n: {"mean": s.auc_mean, "se": s.auc_se, "per_scenario": s.auc}
                for n, s in result.planners.items()},
        "paired_vs_" + first: {n: dict(zip(("mean_diff", "se"), result.paired_difference(n, first)))
                               for n in names[1:]},
        "simq_calls": {
            n: {"total": s.simq_calls,
                "stages": [
                    {"scenario_id": i, **asdict(st)}
                    for i, t in enumerate(result.trajectories[n]) for st in t.stages]}
            for n, s in result.planners.items()},
        "config": result.config.to_document(),
    }


def emit_outputs(result: BatchResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    curves = _csv_text(
        ["scenario_id", "planner", "elapsed_days", "served_population"],
        ((t.curve.scenario_id, name, repr(float(d)), p)
         for name, ts in result.trajectories.items() for t in ts for d, p in t.curve.points))
    means = _csv_text(
        ["planner", "day", "mean_served"],
        ((name, repr(float(day)), repr(float(v)))
         for name, s in result.planners.items() for day, v in zip(result.grid, s.mean_curve)))
    summary = json.dumps(summary_document(result), indent=1, sort_keys=False) + "\n"
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for fname, text in ((CURVES_FILE, curves), (MEAN_CURVES_FILE, means), (SUMMARY_FILE, summary)):
            path = out / fname
            path.write_text(text)
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write outputs to {out}: {exc}") from exc
    return written


def read_curves(path: str | Path) -> dict[str, list[RecoveryCurve]]:
    """Parse a curves CSV written by :func:`emit_outputs`."""
    found: dict[tuple[str, int], RecoveryCurve] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["planner"], int(row["scenario_id"]))
            c = found.setdefault(key, RecoveryCurve([], key[1], key[0]))
            c.points.append((float(row["elapsed_days"]), int(row["served_population"])))
    by_planner: dict[str, list[RecoveryCurve]] = {}
    for (name, _), c in sorted(found.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        by_planner.setdefault(name, []).append(c)
    return by_planner
