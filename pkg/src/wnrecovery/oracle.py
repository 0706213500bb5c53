"""Exact tabular MDP machinery used to check the planners on small instances.

Backups use the reward-inside-discount convention

    V(s) = max_a  gamma * sum_s' P(s'|s,a) * (V(s') + R(s,a,s'))

so every value here is ``gamma`` times the textbook value with the reward
outside the discount.  Finite-horizon Q values follow the same convention:
``finite_horizon_q(..., h)`` equals ``gamma`` times the expected SimQ return.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np


class InvalidMdpError(ValueError):
    pass


@dataclass(frozen=True)
class TabularMdp:
    """``transition[s, a, s']`` and ``reward[s, a, s']``; ``num_actions[s]`` actions are valid in s."""

    transition: np.ndarray
    reward: np.ndarray
    num_actions: np.ndarray
    r_max: float

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def action_mask(self) -> np.ndarray:
        return np.arange(self.transition.shape[1])[None, :] < self.num_actions[:, None]

    def validate(self) -> None:
        P, R = self.transition, self.reward
        if P.ndim != 3 or P.shape[0] != P.shape[2] or R.shape != P.shape:
            raise InvalidMdpError(f"bad shapes: transition {P.shape}, reward {R.shape}")
        if len(self.num_actions) != P.shape[0] or np.any(self.num_actions < 1) \
                or np.any(self.num_actions > P.shape[1]):
            raise InvalidMdpError("num_actions must be in [1, max actions] for every state")
        if np.any(P < 0):
            raise InvalidMdpError("negative transition probability")
        sums = P.sum(axis=2)[self.action_mask]
        if not np.allclose(sums, 1.0, atol=1e-12):
            raise InvalidMdpError("transition rows must sum to 1")
        if np.any(np.abs(R[self.action_mask]) > self.r_max + 1e-12):
            raise InvalidMdpError("reward exceeds r_max")

    def to_document(self) -> dict[str, Any]:
        S = self.num_states
        doc: dict[str, Any] = {"num_states": S, "num_actions": self.num_actions.tolist(),
                               "r_max": self.r_max, "transitions": []}
        for s in range(S):
            for a in range(int(self.num_actions[s])):
                for s2 in range(S):
                    if self.transition[s, a, s2] > 0:
                        doc["transitions"].append(
                            {"s": s, "a": a, "next": s2, "p": float(self.transition[s, a, s2]),
                             "r": float(self.reward[s, a, s2])})
        return doc

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "TabularMdp":
        S = int(doc["num_states"])
        nA = np.asarray(doc["num_actions"], dtype=int)
        A = int(nA.max())
        P = np.zeros((S, A, S))
        R = np.zeros((S, A, S))
        for t in doc["transitions"]:
            P[t["s"], t["a"], t["next"]] += float(t["p"])
            R[t["s"], t["a"], t["next"]] = float(t["r"])
        mdp = cls(P, R, nA, float(doc.get("r_max", np.abs(R).max())))
        mdp.validate()
        return mdp


def load_mdp(path: str | Path) -> TabularMdp:
    return TabularMdp.from_document(json.loads(Path(path).read_text()))


def random_mdp(rng: np.random.Generator, num_states: int = 5, max_actions: int = 3,
               reward_scale: float = 1.0, varying_actions: bool = True,
               branching: int | None = None) -> TabularMdp:
    """Random instance with rewards uniform on [0, reward_scale]."""
    S, A = num_states, max_actions
    nA = rng.integers(1, A + 1, size=S) if varying_actions else np.full(S, A)
    P = rng.random((S, A, S))
    if branching is not None and branching < S:
        for s in range(S):
            for a in range(A):
                keep = rng.choice(S, size=branching, replace=False)
                mask = np.zeros(S, dtype=bool)
                mask[keep] = True
                P[s, a, ~mask] = 0.0
    P /= P.sum(axis=2, keepdims=True)
    R = rng.random((S, A, S)) * reward_scale
    mdp = TabularMdp(P, R, nA, reward_scale)
    mdp.validate()
    return mdp


def _backup(mdp: TabularMdp, V: np.ndarray, gamma: float) -> np.ndarray:
    """Q(s, a) under ``V``; invalid actions get -inf."""
    Q = gamma * np.einsum("ijk,ijk->ij", mdp.transition, V[None, None, :] + mdp.reward)
    return np.where(mdp.action_mask, Q, -np.inf)


def value_iteration(mdp: TabularMdp, gamma: float, tol: float = 1e-10, max_iter: int = 1_000_000,
                    trace: list[float] | None = None) -> np.ndarray:
    """Repeated Bellman backups from V = 0 until the sup-norm change is at most ``tol``.

    If ``trace`` is given, each iteration's sup-norm change is appended to it.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must be in (0, 1)")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    mdp.validate()
    V = np.zeros(mdp.num_states)
    for _ in range(max_iter):
        V_next = _backup(mdp, V, gamma).max(axis=1)
        diff = float(np.max(np.abs(V_next - V)))
        if trace is not None:
            trace.append(diff)
        V = V_next
        if diff <= tol:
            return V
    raise RuntimeError(f"value iteration did not reach tol={tol} in {max_iter} iterations")


def bellman_residual(mdp: TabularMdp, V: np.ndarray, gamma: float) -> np.ndarray:
    return np.abs(_backup(mdp, V, gamma).max(axis=1) - V)


def q_from_value(mdp: TabularMdp, V: np.ndarray, gamma: float) -> np.ndarray:
    if len(V) != mdp.num_states:
        raise ValueError("V needs one entry per state")
    return _backup(mdp, np.asarray(V, dtype=float), gamma)


def _policy_matrices(mdp: TabularMdp, policy: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    pi = np.asarray(policy, dtype=int)
    if len(pi) != mdp.num_states or np.any(pi < 0) or np.any(pi >= mdp.num_actions):
        raise ValueError("policy must choose a valid action in every state")
    idx = np.arange(mdp.num_states)
    P = mdp.transition[idx, pi]
    r = np.sum(P * mdp.reward[idx, pi], axis=1)
    return P, r


def policy_value(mdp: TabularMdp, policy: Sequence[int], gamma: float, tol: float = 1e-10,
                 method: str = "iterate") -> np.ndarray:
    """Value of a deterministic stationary policy.

    ``method="iterate"`` runs the policy-restricted backup to ``tol``;
    ``method="solve"`` solves (I - gamma P_pi) V = gamma r_pi directly.
    """
    P, r = _policy_matrices(mdp, policy)
    if method == "solve":
        return np.linalg.solve(np.eye(mdp.num_states) - gamma * P, gamma * r)
    if method != "iterate":
        raise ValueError(f"unknown method {method!r}")
    V = np.zeros(mdp.num_states)
    while True:
        V_next = gamma * (P @ V + r)
        if np.max(np.abs(V_next - V)) <= tol:
            return V_next
        V = V_next


def greedy_policy(mdp: TabularMdp, Q: np.ndarray) -> np.ndarray:
    """Per-state argmax over valid actions, lowest index on ties."""
    Q = np.where(mdp.action_mask, Q, -np.inf)
    return np.argmax(Q, axis=1)


def finite_horizon_q(mdp: TabularMdp, policy: Sequence[int], h: int, gamma: float) -> np.ndarray:
    """Q of taking a, then following ``policy``, counting only the first ``h`` rewards."""
    if h < 1:
        raise ValueError("h must be >= 1")
    P, r = _policy_matrices(mdp, policy)
    V = np.zeros(mdp.num_states)
    for _ in range(h - 1):
        V = gamma * (P @ V + r)
    return _backup(mdp, V, gamma)


class TabularSimulator:
    """Sampling view of a :class:`TabularMdp` with the planner's simulator surface.

    States and actions are integers; the chain never terminates.
    """

    def __init__(self, mdp: TabularMdp) -> None:
        mdp.validate()
        self.mdp = mdp
        self._cdf = np.cumsum(mdp.transition, axis=2)
        self._cdf[..., -1] = 1.0

    def candidate_actions(self, state: int, rng=None, cap=None) -> list[int]:
        return list(range(int(self.mdp.num_actions[state])))

    def step(self, state: int, action: int, rng: np.random.Generator) -> tuple[int, float]:
        nxt = int(np.searchsorted(self._cdf[state, action], rng.random(), side="right"))
        return nxt, float(self.mdp.reward[state, action, nxt])

    @staticmethod
    def is_terminal(state: int) -> bool:
        return False
