"""Recover one scenario with the base heuristic and with rollout, using the same repair times.

Run:  python3 demos/02_rollout_vs_base.py   (about half a minute)
"""

from wnrecovery.harness import PlannerSpec, auc, run_recovery, sample_scenarios
from wnrecovery.hazard import load_hazard_config
from wnrecovery.mdp import RecoveryModel
from wnrecovery.network import load_network

SEED, SCENARIO, CREWS = 2019, 3, 3

network = load_network()
scenario = sample_scenarios(network, load_hazard_config(), SCENARIO + 1, SEED)[SCENARIO]
print(f"scenario {SCENARIO}: {len(scenario.damaged_ids)} damaged components, {CREWS} crews")

planners = [PlannerSpec("base"), PlannerSpec("tea", "tea", h=10, alpha=20)]
curves = {}
for spec in planners:
    model = RecoveryModel(network, scenario, CREWS)
    # the same seed replays the same true repair durations for every planner
    traj = run_recovery(model, spec, SEED, SCENARIO)
    curves[spec.name] = traj.curve
    print(f"\n{spec.name}: {len(traj.stages)} stages, {traj.simq_calls} SimQ calls")
    for st, (day, served) in zip(traj.stages, traj.curve.points[1:]):
        print(f"  day {day:7.2f}  repair {', '.join(st.assigned):24s} done {', '.join(st.completed):8s}"
              f"  served {served}")

horizon = max(c.saturation_day() for c in curves.values())
print()
for name, c in curves.items():
    print(f"{name:>5s}: {auc(c, horizon):12.0f} person-days of service over {horizon:.1f} days")
