"""Rollout planners: base heuristics, the SimQ estimator, uniform (TEA) and OCBA rollout.

The planners only need a simulator object exposing

* ``candidate_actions(state, rng, cap)`` -> list of actions,
* ``step(state, action, rng)`` -> ``(next_state, reward)``,
* ``is_terminal(state)`` -> bool,

which :class:`wnrecovery.mdp.RecoveryModel` and
:class:`wnrecovery.oracle.TabularSimulator` both provide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.stats import norm

from .mdp import RecoveryModel, RecoveryState, RepairAction, crews_needed
from .network import ComponentKind
from .streams import Streams

Policy = Callable[[Any, "np.random.Generator | None"], Any]

KIND_PRIORITY = {
    ComponentKind.WELL: 0,
    ComponentKind.BOOSTER_PUMP: 1,
    ComponentKind.TANK: 2,
    ComponentKind.PIPE: 3,
}

# sub-stream keys under a stage
_SAMPLES = 0
_CANDIDATES = 1
_BASE = 2


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class RolloutConfig:
    horizon_h: int | None = 10  # None: complete rollout, simulate until every repair is done
    alpha: int = 200
    gamma: float = 0.99
    action_cap: int | None = None

    def __post_init__(self) -> None:
        if self.horizon_h is not None and self.horizon_h < 1:
            raise ValueError("horizon_h must be >= 1")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")


@dataclass(frozen=True)
class OcbaConfig:
    per_stage_budget_B: int | Callable[[int], int] = 5000
    n0: int = 5
    delta_fraction: float = 0.15
    epsilon_delta: float = 1e-9
    epsilon_var: float = 1e-9

    def __post_init__(self) -> None:
        if self.n0 < 2:
            raise ValueError("n0 must be >= 2 so variances can be estimated")
        if self.delta_fraction <= 0:
            raise ValueError("delta_fraction must be > 0")

    def budget(self, n: int) -> int:
        B = self.per_stage_budget_B
        return int(B(n)) if callable(B) else int(B)

    def increment(self, n: int) -> int:
        return max(1, math.floor(self.delta_fraction * n + 0.5))


@dataclass
class QEstimate:
    """Running mean and variance (Welford) of the SimQ returns of one action."""

    action_index: int
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0


@dataclass
class Decision:
    action: Any
    index: int
    candidates: list
    estimates: list[QEstimate] = field(default_factory=list)
    simq_calls: int = 0
    budget: int | None = None

    @property
    def n(self) -> int:
        return len(self.candidates)


# ---------------------------------------------------------------- base policies

def base_policy(state: RecoveryState, model: RecoveryModel, M: int | None = None) -> RepairAction:
    """Deterministic heuristic: wells, then pumps, tanks, pipes; quicker repairs first."""
    M = model.M if M is None else M
    ranked = sorted(
        range(state.num_damaged),
        key=lambda i: (KIND_PRIORITY[model.network.component(state.damaged[i].id).kind],
                       model.expected_repair_days(state.damaged[i]), state.damaged[i].id))
    return RepairAction.from_indices(ranked[:crews_needed(state, M)], state.num_damaged)


def random_policy(state: RecoveryState, model: RecoveryModel,
                  rng: np.random.Generator) -> RepairAction:
    k = crews_needed(state, model.M)
    picked = rng.choice(state.num_damaged, size=k, replace=False)
    return RepairAction.from_indices([int(i) for i in picked], state.num_damaged)


def impact_greedy_policy(state: RecoveryState, model: RecoveryModel) -> RepairAction:
    """Repair the components whose individual restoration adds the most people; ties by speed."""
    failed = model.failed_ids(state)
    now = model.network.served_population(failed)

    def key(i: int):
        entry = state.damaged[i]
        gain = model.network.served_population(failed - {entry.id}) - now
        return (-gain, model.expected_repair_days(entry), entry.id)

    ranked = sorted(range(state.num_damaged), key=key)
    return RepairAction.from_indices(ranked[:crews_needed(state, model.M)], state.num_damaged)


def make_policy(model: RecoveryModel, kind: str = "priority") -> Policy:
    if kind == "priority":
        # the ranking ignores residual times, so memoise on the damaged set
        memo: dict[tuple, RepairAction] = {}

        def policy(state, rng=None):
            key = tuple((d.id, d.damage) for d in state.damaged)
            action = memo.get(key)
            if action is None:
                action = memo[key] = base_policy(state, model)
            return action
        return policy
    if kind == "random":
        def policy(state, rng=None):
            if rng is None:
                raise ValueError("random base policy needs a random stream")
            return random_policy(state, model, rng)
        return policy
    if kind == "impact":
        return lambda state, rng=None: impact_greedy_policy(state, model)
    raise ValueError(f"unknown base policy kind {kind!r}")


# ---------------------------------------------------------------- rollout

def sim_q(model, state, action, policy: Policy, h: int | None, gamma: float,
          rng: np.random.Generator) -> float:
    """One sampled h-step return: take ``action``, then follow ``policy`` for h-1 epochs.

    Stops early (no further reward) at a terminal state.  ``h=None`` runs to termination.
    """
    s, total = model.step(state, action, rng)
    p = 1
    while (h is None or p < h) and not model.is_terminal(s):
        s, r = model.step(s, policy(s, rng), rng)
        total += gamma ** p * r
        p += 1
    return total


def _candidates(model, state, policy: Policy, cap: int | None, streams: Streams) -> list:
    cands = model.candidate_actions(state, streams.generator(_CANDIDATES), cap)
    if cap is not None and len(cands) >= cap:
        # sampled subset: make sure the base policy's choice is a candidate
        base = policy(state, streams.generator(_BASE))
        if base not in cands:
            cands[-1] = base
            cands.sort(key=lambda a: a.indices)
    return cands


def _argmax(estimates: Sequence[QEstimate]) -> int:
    best = 0
    for i, e in enumerate(estimates):
        if e.mean > estimates[best].mean:
            best = i
    return best


def uniform_rollout(model, state, policy: Policy, config: RolloutConfig,
                    streams: Streams) -> Decision:
    """Total equal allocation: ``alpha`` SimQ samples for each candidate action."""
    cands = _candidates(model, state, policy, config.action_cap, streams)
    samples = streams.child(_SAMPLES)
    estimates = []
    for i, action in enumerate(cands):
        est = QEstimate(i)
        for j in range(config.alpha):
            est.add(sim_q(model, state, action, policy, config.horizon_h, config.gamma,
                          samples.generator(i, j)))
        estimates.append(est)
    k = _argmax(estimates)
    return Decision(cands[k], k, cands, estimates, len(cands) * config.alpha)


def ocba_allocate(estimates: Sequence[QEstimate], increment: int, config: OcbaConfig) -> list[int]:
    """Split ``increment`` extra samples across actions by the OCBA asymptotic ratios.

    Non-best alternatives get N_i proportional to (sigma_i / delta_i)^2, the
    best gets sigma_b * sqrt(sum N_i^2 / sigma_i^2).  Alternatives already
    sampled beyond their target are frozen and the rest re-balanced; the result
    is integral, non-negative and sums to ``increment``.
    """
    k = len(estimates)
    if k < 2:
        raise ValueError("OCBA allocation needs at least two alternatives")
    if increment < 1:
        raise ValueError("increment must be >= 1")
    means = np.array([e.mean for e in estimates], dtype=float)
    var = np.maximum([e.variance for e in estimates], config.epsilon_var)
    counts = np.array([e.count for e in estimates], dtype=float)
    b = _argmax(estimates)
    gap = np.maximum(means[b] - means, config.epsilon_delta)
    ratio = var / gap ** 2
    others = np.arange(k) != b
    ratio[b] = math.sqrt(var[b] * float(np.sum(ratio[others] ** 2 / var[others])))

    total = counts.sum() + increment
    active = np.ones(k, dtype=bool)
    while True:
        target = np.where(active, 0.0, counts)
        target[active] = (total - counts[~active].sum()) * ratio[active] / ratio[active].sum()
        frozen = active & (target < counts)
        if not frozen.any():
            break
        active &= ~frozen
    extra = np.maximum(target - counts, 0.0)
    extra *= increment / extra.sum()
    alloc = np.floor(extra).astype(int)
    short = increment - int(alloc.sum())
    order = sorted(range(k), key=lambda i: (-(extra[i] - alloc[i]), i))
    for i in order[:short]:
        alloc[i] += 1
    return [int(a) for a in alloc]


def ocba_rollout(model, state, policy: Policy, h: int | None, gamma: float, ocba: OcbaConfig,
                 streams: Streams, action_cap: int | None = None) -> Decision:
    """Rollout with OCBA-sequenced sampling under a fixed per-stage budget of SimQ calls."""
    cands = _candidates(model, state, policy, action_cap, streams)
    n = len(cands)
    samples = streams.child(_SAMPLES)
    estimates = [QEstimate(i) for i in range(n)]

    def draw(i: int) -> None:
        est = estimates[i]
        est.add(sim_q(model, state, cands[i], policy, h, gamma, samples.generator(i, est.count)))

    if n == 1:
        for _ in range(ocba.n0):
            draw(0)
        return Decision(cands[0], 0, cands, estimates, ocba.n0, None)

    B = ocba.budget(n)
    if B < n * ocba.n0:
        raise BudgetError(
            f"per-stage budget {B} below minimum feasible n*n0 = {n}*{ocba.n0} = {n * ocba.n0}")
    for i in range(n):
        for _ in range(ocba.n0):
            draw(i)
    used = n * ocba.n0
    while used < B:
        delta = min(ocba.increment(n), B - used)
        for i, extra in enumerate(ocba_allocate(estimates, delta, ocba)):
            for _ in range(extra):
                draw(i)
        used += delta
    k = _argmax(estimates)
    return Decision(cands[k], k, cands, estimates, used, B)


def approx_pcs(estimates: Sequence[QEstimate], epsilon_var: float = 1e-9) -> float:
    """Bonferroni-style lower bound on the probability that the sample-best action is best."""
    b = _argmax(estimates)
    best = estimates[b]
    pcs = 1.0
    for i, e in enumerate(estimates):
        if i == b:
            continue
        se = math.sqrt(max(best.variance, epsilon_var) / best.count
                       + max(e.variance, epsilon_var) / e.count)
        pcs *= float(norm.cdf((best.mean - e.mean) / se))
    return pcs
