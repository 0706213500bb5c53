"""How OCBA spends a fixed sampling budget compared to equal allocation.

Five noisy alternatives; two are close contenders, the rest are clearly worse.
OCBA should pour most samples into the contenders.

Run:  python3 demos/03_ocba_allocation.py
"""

import numpy as np

from wnrecovery.planner import OcbaConfig, RolloutConfig, approx_pcs, ocba_rollout, uniform_rollout
from wnrecovery.streams import Streams

MEANS = [1.0, 0.9, 0.2, 0.0, -0.5]
SD = 1.0


class NoisyArms:
    """A one-step simulator: action i pays N(MEANS[i], SD^2) and ends the episode."""

    def candidate_actions(self, state, rng=None, cap=None):
        return list(range(len(MEANS)))

    def step(self, state, action, rng):
        return "end", MEANS[action] + SD * rng.standard_normal()

    @staticmethod
    def is_terminal(state):
        return state == "end"


policy = lambda s, rng=None: 0  # never consulted: every episode is one step
budget = 500
trials = 200
wins = {"equal": 0, "ocba": 0}
counts = np.zeros(len(MEANS))
for t in range(trials):
    eq = uniform_rollout(NoisyArms(), "s", policy, RolloutConfig(alpha=budget // len(MEANS)),
                         Streams(1, (t,)))
    oc = ocba_rollout(NoisyArms(), "s", policy, 1, 0.99, OcbaConfig(per_stage_budget_B=budget),
                      Streams(2, (t,)))
    wins["equal"] += eq.index == 0
    wins["ocba"] += oc.index == 0
    counts += [e.count for e in oc.estimates]

print(f"budget {budget} samples, {trials} repetitions, best arm is 0")
print(f"P(correct selection): equal {wins['equal'] / trials:.2f}, OCBA {wins['ocba'] / trials:.2f}")
print("average OCBA samples per arm:", np.round(counts / trials).astype(int).tolist())
print(f"approx. PCS of the last OCBA run: {approx_pcs(oc.estimates):.2f}")
