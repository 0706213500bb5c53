"""Sample one earthquake scenario on the default network and look at what broke.

Run:  python3 demos/01_damage_scenario.py
"""

import numpy as np

from wnrecovery.hazard import load_hazard_config, sample_scenario
from wnrecovery.network import ComponentKind, DamageState, load_network, serviceable_population

network = load_network()
hazard = load_hazard_config()
print(f"{network.name}: {len(network.components)} components, "
      f"{network.total_population} people in {len(network.demand_regions)} regions")

rng = np.random.default_rng(7)
scenario = sample_scenario(network, hazard, rng)

# Facilities get one of five damage states from their PGA; pipes either break or not.
for kind in ComponentKind:
    hit = [(cid, scenario.damage[cid].label) for cid in scenario.damaged_ids
           if network.component(cid).kind is kind]
    print(f"{kind.value:>12s}: {len(hit):2d} damaged  {hit}")

served = serviceable_population(network, scenario.damage)
print(f"people with water right after the quake: {served} ({served / network.total_population:.0%})")

# The damage count varies a lot from one draw to the next.
counts = [len(sample_scenario(network, hazard, rng).damaged_ids) for _ in range(200)]
print(f"damaged components over 200 draws: median {np.median(counts):.0f}, "
      f"5-95% range {np.percentile(counts, 5):.0f}-{np.percentile(counts, 95):.0f}")

# A weak, distant event should leave the network untouched.
quiet = sample_scenario(network, hazard, rng, event=type(hazard.event)(4.5, (300.0, 300.0)))
print("M4.5 at 300 km damages:", quiet.damaged_ids or "nothing")
assert all(ds == DamageState.NONE for ds in quiet.damage.values())
