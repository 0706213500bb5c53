"""Self-checks of the planners against the exact tabular oracle (``oracle-check`` CLI)."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import oracle
from .planner import RolloutConfig, uniform_rollout
from .streams import Streams


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _random_policy(mdp: oracle.TabularMdp, rng: np.random.Generator) -> np.ndarray:
    return np.array([rng.integers(0, k) for k in mdp.num_actions])


def check_value_iteration(seed: int = 0, num_mdps: int = 100, gamma: float = 0.99,
                          tol: float = 1e-8) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, violations = 0.0, 0
    start = time.perf_counter()
    for _ in range(num_mdps):
        mdp = oracle.random_mdp(rng, int(rng.integers(2, 9)), int(rng.integers(1, 5)))
        V = oracle.value_iteration(mdp, gamma, tol)
        worst = max(worst, float(oracle.bellman_residual(mdp, V, gamma).max()))
        pi = _random_policy(mdp, rng)
        V_pi = oracle.policy_value(mdp, pi, gamma, method="solve")
        pi2 = oracle.greedy_policy(mdp, oracle.q_from_value(mdp, V_pi, gamma))
        V_pi2 = oracle.policy_value(mdp, pi2, gamma, method="solve")
        violations += int(np.sum(V_pi2 < V_pi - 1e-9 * (1 + np.abs(V_pi))))
    secs = time.perf_counter() - start
    ok = worst <= tol and violations == 0
    return CheckResult("value iteration / greedy improvement", ok,
                       f"{num_mdps} MDPs, max Bellman residual {worst:.2e}, "
                       f"improvement violations {violations}, {secs:.2f}s")


def check_truncation(seed: int = 1, num_mdps: int = 20, gamma: float = 0.99,
                     horizons: tuple[int, ...] = (1, 5, 10, 25)) -> CheckResult:
    rng = np.random.default_rng(seed)
    violations, checked = 0, 0
    for _ in range(num_mdps):
        mdp = oracle.random_mdp(rng, int(rng.integers(2, 9)), int(rng.integers(1, 5)))
        pi = _random_policy(mdp, rng)
        Q = oracle.q_from_value(mdp, oracle.policy_value(mdp, pi, gamma, method="solve"), gamma)
        for h in horizons:
            Qh = oracle.finite_horizon_q(mdp, pi, h, gamma)
            bound = gamma ** h * mdp.r_max / (1 - gamma)
            mask = mdp.action_mask
            violations += int(np.sum(np.abs(Q[mask] - Qh[mask]) > bound))
            checked += int(mask.sum())
    return CheckResult("truncation bound", violations == 0,
                       f"{checked} (s,a,h) triples, {violations} violations")


def check_rollout_agreement(seed: int = 2, num_mdps: int = 4, num_states: int = 5,
                            num_actions: int = 3, alpha: int = 10_000, h: int = 5,
                            gamma: float = 0.99, min_rate: float = 0.95) -> CheckResult:
    rng = np.random.default_rng(seed)
    agree, total = 0, 0
    start = time.perf_counter()
    for m in range(num_mdps):
        mdp = oracle.random_mdp(rng, num_states, num_actions, varying_actions=False)
        pi = _random_policy(mdp, rng)
        exact = oracle.finite_horizon_q(mdp, pi, h, gamma)
        sim = oracle.TabularSimulator(mdp)
        policy = lambda s, _rng=None, pi=pi: int(pi[s])
        cfg = RolloutConfig(horizon_h=h, alpha=alpha, gamma=gamma)
        for s in range(mdp.num_states):
            d = uniform_rollout(sim, s, policy, cfg, Streams(seed, (m, s)))
            agree += int(d.action == int(np.argmax(exact[s])))
            total += 1
    rate = agree / total
    secs = time.perf_counter() - start
    return CheckResult("rollout vs exact argmax", rate >= min_rate,
                       f"{agree}/{total} states agree ({rate:.1%}), alpha={alpha}, h={h}, {secs:.1f}s")


def run_oracle_checks(seed: int = 0, rollout_alpha: int = 10_000) -> list[CheckResult]:
    return [
        check_value_iteration(seed),
        check_truncation(seed + 1),
        check_rollout_agreement(seed + 2, alpha=rollout_alpha),
    ]
