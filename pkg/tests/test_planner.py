import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from wnrecovery.hazard import Scenario
from wnrecovery.mdp import RecoveryModel, RepairAction
from wnrecovery.network import DamageState as D
from wnrecovery.planner import (BudgetError, OcbaConfig, QEstimate, RolloutConfig, approx_pcs,
                                base_policy, make_policy, ocba_allocate, ocba_rollout, sim_q,
                                uniform_rollout)
from wnrecovery.streams import Streams


def toy_model(toy, damage, M=1, pipe_rate=0.5):
    full = {cid: D.NONE for cid in toy.component_ids}
    full.update(damage)
    return RecoveryModel(toy, Scenario(full, {c.id: pipe_rate for c in toy.components if c.is_pipe}), M)


def est(i, mean, var, count):
    return QEstimate(i, count, mean, var * (count - 1))


class TwoArmBandit:
    """One-step simulator: action a returns a uniform reward on [lo_a, hi_a] and terminates."""

    def __init__(self, ranges):
        self.ranges = ranges
        self.calls = 0

    def candidate_actions(self, state, rng=None, cap=None):
        return list(range(len(self.ranges)))

    def step(self, state, action, rng):
        self.calls += 1
        lo, hi = self.ranges[action]
        return "done", lo + (hi - lo) * rng.random()

    @staticmethod
    def is_terminal(state):
        return state == "done"


def never(state, rng=None):
    raise AssertionError("base policy should not be consulted after termination")


# ---- base policy


def test_base_prefers_well_over_tank(toy):
    m = toy_model(toy, {"W1": D.MINOR, "TK": D.MINOR})
    a = base_policy(m.initial_state(), m)
    assert [m.initial_state().damaged[i].id for i in a.indices] == ["W1"]


def test_base_prefers_quicker_repair(toy):
    m = toy_model(toy, {"W1": D.COMPLETE, "W2": D.MINOR})
    s = m.initial_state()
    assert [s.damaged[i].id for i in base_policy(s, m).indices] == ["W2"]


def test_base_assigns_everything_when_crews_suffice(toy):
    m = toy_model(toy, {"TK": D.COMPLETE, "p9": D.COMPLETE}, M=2)
    assert base_policy(m.initial_state(), m).assign == (1, 1)


def test_alternative_base_policies(toy):
    m = toy_model(toy, {"W1": D.COMPLETE, "W2": D.COMPLETE, "p9": D.COMPLETE}, M=1)
    s = m.initial_state()
    rnd = make_policy(m, "random")
    assert sum(rnd(s, np.random.default_rng(0)).assign) == 1
    imp = make_policy(m, "impact")(s)
    assert sum(imp.assign) == 1
    with pytest.raises(ValueError):
        make_policy(m, "nope")


# ---- SimQ


def test_simq_h1_is_immediate_reward(toy):
    m = toy_model(toy, {"W1": D.MODERATE, "W2": D.MODERATE})
    s = m.initial_state()
    a = RepairAction((1, 0))
    _, r = m.step(s, a, np.random.default_rng(5))
    assert sim_q(m, s, a, never, 1, 0.99, np.random.default_rng(5)) == r


def test_simq_single_component_terminates(toy):
    m = toy_model(toy, {"PS": D.EXTENSIVE})
    s = m.initial_state()
    a = RepairAction((1,))
    q1 = sim_q(m, s, a, never, 1, 0.99, np.random.default_rng(9))
    q10 = sim_q(m, s, a, never, 10, 0.99, np.random.default_rng(9))
    assert q1 == q10


def test_simq_trace_replay(toy):
    m = toy_model(toy, {"p3": D.COMPLETE, "p4": D.COMPLETE}, pipe_rate=0.5)
    s = m.initial_state()
    policy = make_policy(m)
    q = sim_q(m, s, RepairAction((1, 0)), policy, 2, 0.99, np.random.default_rng(2024))
    # replay by hand: p3 first, then the only remaining component
    rng = np.random.default_rng(2024)
    t1 = rng.exponential(0.5 * toy.component("p3").pipe_length_km)
    t2 = rng.exponential(0.5 * toy.component("p4").pipe_length_km)
    r0 = toy.served_population(frozenset({"p4"})) / t1
    r1 = toy.total_population / (t1 + t2)
    assert q == pytest.approx(r0 + 0.99 * r1, rel=1e-12)


# ---- uniform rollout


def test_uniform_counts_and_dominance():
    sim = TwoArmBandit([(0.0, 1.0), (2.0, 3.0), (0.5, 1.9)])
    d = uniform_rollout(sim, "s", never, RolloutConfig(horizon_h=5, alpha=7), Streams(1))
    assert d.action == 1 and d.index == 1
    assert d.simq_calls == sim.calls == 3 * 7
    assert [e.count for e in d.estimates] == [7, 7, 7]


def test_uniform_single_action():
    sim = TwoArmBandit([(0.0, 1.0)])
    d = uniform_rollout(sim, "s", never, RolloutConfig(alpha=4), Streams(0))
    assert d.action == 0 and sim.calls == 4


def test_uniform_tie_breaks_low_index():
    sim = TwoArmBandit([(1.0, 1.0), (1.0, 1.0)])
    assert uniform_rollout(sim, "s", never, RolloutConfig(alpha=3), Streams(0)).index == 0


def test_uniform_seed_determinism(toy):
    m = toy_model(toy, {"W1": D.MODERATE, "PS": D.COMPLETE, "p7": D.COMPLETE, "p9": D.COMPLETE}, M=2)
    s = m.initial_state()
    cfg = RolloutConfig(horizon_h=4, alpha=10)
    a = uniform_rollout(m, s, make_policy(m), cfg, Streams(77, (1, 0)))
    b = uniform_rollout(m, s, make_policy(m), cfg, Streams(77, (1, 0)))
    assert a.action == b.action
    assert [e.mean for e in a.estimates] == [e.mean for e in b.estimates]


# ---- OCBA allocation


def test_even_split_for_two_equal_variance():
    cfg = OcbaConfig()
    alloc = ocba_allocate([est(0, 1.0, 2.0, 5), est(1, 0.0, 2.0, 5)], 10, cfg)
    assert alloc == [5, 5]


def test_hopeless_alternative_gets_nothing():
    cfg = OcbaConfig()
    ests = [est(0, 0.0, 1.0, 5), est(1, -0.1, 1.0, 5), est(2, -100.0, 1e-6, 5)]
    alloc = ocba_allocate(ests, 10, cfg)
    assert alloc[2] == 0 and sum(alloc) == 10


def test_allocation_needs_two():
    with pytest.raises(ValueError):
        ocba_allocate([est(0, 0.0, 1.0, 5)], 3, OcbaConfig())


def fraction_reference(means, variances, counts, increment):
    """OCBA targets in exact arithmetic, for instances where the best's ratio is rational."""
    b = max(range(len(means)), key=lambda i: (means[i], -i))
    ratio = [Fraction(v) / Fraction(means[b] - m) ** 2 if i != b else None
             for i, (m, v) in enumerate(zip(means, variances))]
    sq = Fraction(variances[b]) * sum(ratio[i] ** 2 / Fraction(variances[i])
                                      for i in range(len(means)) if i != b)
    root = Fraction(math.isqrt(sq.numerator), math.isqrt(sq.denominator))
    assert root * root == sq, "instance chosen so the square root is rational"
    ratio[b] = root
    total = sum(counts) + increment
    active = [True] * len(means)
    while True:
        mass = total - sum(c for c, a in zip(counts, active) if not a)
        rsum = sum(r for r, a in zip(ratio, active) if a)
        target = [mass * r / rsum if a else Fraction(c) for r, a, c in zip(ratio, active, counts)]
        frozen = [a and t < c for a, t, c in zip(active, target, counts)]
        if not any(frozen):
            break
        active = [a and not f for a, f in zip(active, frozen)]
    extra = [max(t - c, 0) for t, c in zip(target, counts)]
    scale = Fraction(increment) / sum(extra)
    return [e * scale for e in extra]


@pytest.mark.parametrize("counts, increment", [((5, 5, 5), 12), ((5, 5, 5), 3), ((40, 5, 5), 7),
                                               ((5, 30, 5), 9)])
def test_allocation_matches_rational_reference(counts, increment):
    means, variances = (0, -1, -2), (Fraction(17, 16), 1, 1)
    ests = [est(i, float(m), float(v), c) for i, (m, v, c) in enumerate(zip(means, variances, counts))]
    alloc = ocba_allocate(ests, increment, OcbaConfig())
    ref = fraction_reference(means, variances, counts, increment)
    assert sum(alloc) == increment
    assert all(a >= 0 for a in alloc)
    assert all(abs(a - r) < 1 for a, r in zip(alloc, ref))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(0, 20), st.integers(2, 60)), min_size=2,
                max_size=8), st.integers(1, 40))
def test_allocation_conserves(spec, increment):
    ests = [est(i, m, v, c) for i, (m, v, c) in enumerate(spec)]
    alloc = ocba_allocate(ests, increment, OcbaConfig())
    assert sum(alloc) == increment and min(alloc) >= 0


# ---- OCBA rollout


def test_ocba_spends_exact_budget():
    sim = TwoArmBandit([(0.0, 1.0), (0.2, 1.3), (0.9, 1.1), (0.0, 0.5)])
    d = ocba_rollout(sim, "s", never, 3, 0.99, OcbaConfig(per_stage_budget_B=97, n0=5), Streams(4))
    assert d.simq_calls == sim.calls == 97 == sum(e.count for e in d.estimates)
    assert all(e.count >= 5 for e in d.estimates)


def test_ocba_callable_budget():
    sim = TwoArmBandit([(0.0, 1.0), (0.5, 1.5)])
    cfg = OcbaConfig(per_stage_budget_B=lambda n: 5 * n + 13, n0=5)
    assert ocba_rollout(sim, "s", never, 3, 0.99, cfg, Streams(0)).simq_calls == 23


def test_ocba_infeasible_budget():
    sim = TwoArmBandit([(0.0, 1.0)] * 4)
    with pytest.raises(BudgetError, match="20"):
        ocba_rollout(sim, "s", never, 3, 0.99, OcbaConfig(per_stage_budget_B=19, n0=5), Streams(0))


def test_ocba_single_action():
    sim = TwoArmBandit([(0.0, 1.0)])
    d = ocba_rollout(sim, "s", never, 3, 0.99, OcbaConfig(per_stage_budget_B=1000, n0=5), Streams(0))
    assert d.action == 0 and d.simq_calls == sim.calls == 5


def test_ocba_agrees_with_uniform_on_dominance():
    ranges = [(0.0, 1.0), (2.0, 3.0), (0.5, 1.9), (1.0, 1.99)]
    u = uniform_rollout(TwoArmBandit(ranges), "s", never, RolloutConfig(alpha=25), Streams(3))
    o = ocba_rollout(TwoArmBandit(ranges), "s", never, 3, 0.99,
                     OcbaConfig(per_stage_budget_B=100), Streams(3))
    assert u.action == o.action == 1


def test_ocba_config_validation():
    with pytest.raises(ValueError):
        OcbaConfig(n0=1)
    assert OcbaConfig().increment(20) == 3
    assert OcbaConfig().increment(2) == 1


# ---- approximate PCS


def test_pcs_zero_gap():
    assert approx_pcs([est(0, 1.0, 1.0, 10), est(1, 1.0, 1.0, 10)]) == pytest.approx(0.5)


def test_pcs_large_gap():
    assert approx_pcs([est(0, 1e6, 1.0, 10), est(1, 0.0, 1.0, 10)]) == pytest.approx(1.0)


def test_pcs_three_way():
    ests = [est(0, 0.0, 1.0, 10), est(1, -1.0, 1.0, 10), est(2, -2.0, 1.0, 10)]
    expected = norm.cdf(1 / math.sqrt(0.2)) * norm.cdf(2 / math.sqrt(0.2))
    assert approx_pcs(ests) == pytest.approx(expected, rel=1e-12)
