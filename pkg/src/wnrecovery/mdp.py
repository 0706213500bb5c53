"""Simulation-based recovery MDP: states, repair actions, the stochastic simulator and reward.

A state lists the still-damaged components with their residual repair time
(``None`` until a crew first works there) and the days elapsed since the
earthquake.  An action assigns one crew to each of ``min(M, L')`` damaged
components.  A transition runs until the first assigned repair finishes;
every other assigned repair keeps its remaining work.  The reward is the
served population divided by the cumulative elapsed days.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .hazard import Scenario
from .network import (ComponentKind, DamageState, ServiceabilityFlags, WaterNetwork,
                      is_operational)

# Expected repair times in days, indexed Minor, Moderate, Extensive, Complete.
REPAIR_MEANS: dict[ComponentKind, tuple[float, float, float, float]] = {
    ComponentKind.TANK: (1.2, 3.1, 93.0, 155.0),
    ComponentKind.WELL: (0.8, 1.5, 10.5, 26.0),
    ComponentKind.BOOSTER_PUMP: (0.9, 3.1, 13.5, 35.0),
}


class InvalidActionError(ValueError):
    pass


@dataclass(frozen=True)
class DamagedComponent:
    id: str
    damage: DamageState
    residual_days: float | None = None  # None: no crew has started work yet


@dataclass(frozen=True)
class RecoveryState:
    damaged: tuple[DamagedComponent, ...]
    elapsed_days: float = 0.0
    network_ref: str = ""

    @property
    def num_damaged(self) -> int:
        return len(self.damaged)

    @property
    def damaged_ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.damaged)

    def to_document(self) -> dict:
        return {
            "elapsed_days": self.elapsed_days,
            "damaged": [{"id": d.id, "damage": d.damage.label, "residual_days": d.residual_days}
                        for d in self.damaged],
        }


@dataclass(frozen=True)
class RepairAction:
    assign: tuple[int, ...]

    @classmethod
    def from_indices(cls, indices: Sequence[int], length: int) -> "RepairAction":
        chosen = set(indices)
        return cls(tuple(1 if i in chosen else 0 for i in range(length)))

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.assign) if a)


@dataclass(frozen=True)
class TransitionOutcome:
    next_state: RecoveryState
    completion_time: float
    reward: float
    completed_ids: tuple[str, ...]
    served_population: int


def is_terminal(state: RecoveryState) -> bool:
    return not state.damaged


def crews_needed(state: RecoveryState, M: int) -> int:
    return min(M, state.num_damaged)


def enumerate_actions(state: RecoveryState, M: int, cap: int | None,
                      rng: np.random.Generator | None = None) -> list[RepairAction]:
    """Candidate repair actions for ``state``.

    All ``C(L', min(M, L'))`` assignments in lexicographic order when that count
    is at most ``cap``; otherwise ``cap`` distinct assignments drawn uniformly
    without replacement (returned in lexicographic order).
    """
    L = state.num_damaged
    if L < 1 or M < 1:
        raise ValueError("need at least one damaged component and one crew")
    k = min(M, L)
    total = math.comb(L, k)
    if cap is None or total <= cap:
        return [RepairAction.from_indices(c, L) for c in itertools.combinations(range(L), k)]
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if rng is None:
        raise ValueError("rng required when sampling a subset of actions")
    picked: set[tuple[int, ...]] = set()
    while len(picked) < cap:
        picked.add(tuple(sorted(int(i) for i in rng.choice(L, size=k, replace=False))))
    return [RepairAction.from_indices(c, L) for c in sorted(picked)]


def expected_repair_days(kind: ComponentKind, damage: DamageState,
                         pipe_params: tuple[float, float] | None = None,
                         days_per_break: float = 1.0,
                         means: Mapping[ComponentKind, Sequence[float]] = REPAIR_MEANS) -> float:
    if damage == DamageState.NONE:
        raise ValueError("undamaged components need no repair")
    if kind is ComponentKind.PIPE:
        if pipe_params is None:
            raise ValueError("pipe repair needs (C, L)")
        rate, length = pipe_params
        return rate * length * days_per_break
    try:
        return float(means[kind][int(damage) - 1])
    except KeyError:
        raise KeyError(f"no repair-time row for {kind.value}") from None


def sample_repair_time(kind: ComponentKind, damage: DamageState, rng: np.random.Generator,
                       pipe_params: tuple[float, float] | None = None,
                       days_per_break: float = 1.0,
                       means: Mapping[ComponentKind, Sequence[float]] = REPAIR_MEANS) -> float:
    """Exponential repair duration (days) for one damaged component."""
    return _positive_exponential(rng, expected_repair_days(kind, damage, pipe_params,
                                                           days_per_break, means))


def _positive_exponential(rng: np.random.Generator, mean: float) -> float:
    t = rng.exponential(mean)
    # a draw of exactly 0 is possible in principle; residuals must stay positive
    return t if t > 0 else math.ulp(mean)


class RecoveryModel:
    """Recovery MDP for one damage scenario on one network with ``M`` crews.

    Besides the recovery-specific operations it exposes the small simulator
    surface the planner works against: ``candidate_actions``, ``step`` and
    ``is_terminal``.
    """

    def __init__(self, network: WaterNetwork, scenario: Scenario, M: int, *,
                 action_cap: int | None = None, days_per_break: float = 1.0,
                 flags: ServiceabilityFlags = ServiceabilityFlags(),
                 repair_means: Mapping[ComponentKind, Sequence[float]] = REPAIR_MEANS) -> None:
        if M < 1:
            raise ValueError("M must be >= 1")
        missing = [cid for cid in network.component_ids if cid not in scenario.damage]
        if missing:
            raise KeyError(f"scenario missing component id(s): {', '.join(missing)}")
        self.network = network
        self.scenario = scenario
        self.M = M
        self.action_cap = action_cap
        self.days_per_break = days_per_break
        self.flags = flags
        self.repair_means = repair_means
        self._expected: dict[tuple[str, DamageState], float] = {}

    def initial_state(self) -> RecoveryState:
        damaged = tuple(DamagedComponent(cid, ds) for cid, ds in self.scenario.damage.items()
                        if ds != DamageState.NONE)
        return RecoveryState(damaged, 0.0, self.network.name)

    def _pipe_params(self, cid: str) -> tuple[float, float] | None:
        comp = self.network.component(cid)
        if not comp.is_pipe:
            return None
        return self.scenario.pipe_rate[cid], comp.pipe_length_km

    def expected_repair_days(self, entry: DamagedComponent) -> float:
        key = (entry.id, entry.damage)
        if key not in self._expected:
            self._expected[key] = expected_repair_days(
                self.network.component(entry.id).kind, entry.damage,
                self._pipe_params(entry.id), self.days_per_break, self.repair_means)
        return self._expected[key]

    def sample_repair_time(self, entry: DamagedComponent, rng: np.random.Generator) -> float:
        return _positive_exponential(rng, self.expected_repair_days(entry))

    def failed_ids(self, state: RecoveryState) -> frozenset[str]:
        return frozenset(d.id for d in state.damaged
                         if not is_operational(self.network.component(d.id), d.damage, self.flags))

    def served(self, state: RecoveryState) -> int:
        return self.network.served_population(self.failed_ids(state))

    def enumerate_actions(self, state: RecoveryState, rng: np.random.Generator | None = None,
                          cap: int | None = None) -> list[RepairAction]:
        return enumerate_actions(state, self.M, cap if cap is not None else self.action_cap, rng)

    def validate_action(self, state: RecoveryState, action: RepairAction) -> None:
        if len(action.assign) != state.num_damaged:
            raise InvalidActionError(
                f"action length {len(action.assign)} != {state.num_damaged} damaged components")
        if any(a not in (0, 1) for a in action.assign):
            raise InvalidActionError("action entries must be 0 or 1")
        need = crews_needed(state, self.M)
        if sum(action.assign) != need:
            raise InvalidActionError(f"action assigns {sum(action.assign)} crews, expected {need}")

    def simulate_transition(self, state: RecoveryState, action: RepairAction,
                            rng: np.random.Generator | None,
                            durations: Mapping[str, float] | None = None) -> TransitionOutcome:
        """Advance until the first assigned repair completes.

        ``durations`` optionally fixes the total repair time of components
        (used to replay one realization of repair times under several
        planners); components absent from it are drawn from ``rng``.
        """
        if is_terminal(state):
            raise ValueError("cannot act in a terminal state")
        self.validate_action(state, action)
        entries = list(state.damaged)
        assigned = action.indices
        for i in assigned:
            if entries[i].residual_days is None:
                if durations is not None and entries[i].id in durations:
                    t = durations[entries[i].id]
                else:
                    t = self.sample_repair_time(entries[i], rng)
                entries[i] = replace(entries[i], residual_days=t)
        t_hat = min(entries[i].residual_days for i in assigned)  # type: ignore[type-var]
        done = set()
        for i in assigned:
            r = entries[i].residual_days
            if r == t_hat:
                done.add(i)
            else:
                entries[i] = replace(entries[i], residual_days=r - t_hat)
        remaining = tuple(e for i, e in enumerate(entries) if i not in done)
        elapsed = state.elapsed_days + t_hat
        next_state = RecoveryState(remaining, elapsed, state.network_ref)
        served = self.served(next_state)
        return TransitionOutcome(next_state, t_hat, served / elapsed,
                                 tuple(entries[i].id for i in sorted(done)), served)

    # planner-facing simulator surface
    def candidate_actions(self, state: RecoveryState, rng: np.random.Generator | None = None,
                          cap: int | None = None) -> list[RepairAction]:
        return self.enumerate_actions(state, rng, cap)

    def step(self, state: RecoveryState, action: RepairAction,
             rng: np.random.Generator) -> tuple[RecoveryState, float]:
        out = self.simulate_transition(state, action, rng)
        return out.next_state, out.reward

    @staticmethod
    def is_terminal(state: RecoveryState) -> bool:
        return is_terminal(state)
