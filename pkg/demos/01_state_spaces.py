"""Building and validating arm state spaces.

An arm is a DAG of belief states: each state knows the expected reward of
committing to the arm right there, what one more play costs, and where the
belief moves after observing the play's outcome.  Internal consistency is
the martingale identity: a state's reward is the mean of its children's.
"""

import json

from banditlp import (
    BanditInstance,
    Objective,
    build_beta_bernoulli_arm,
    build_two_level_arm,
    instance_to_json,
    validate_instance,
)

# A two-level (star) arm: one play fully reveals a reward drawn from the
# prior.  Here: 30% chance the arm is worth 0.9, otherwise nothing.
star = build_two_level_arm([0.0, 0.9], [0.7, 0.3], play_cost=1, switch_cost=0, arm_id="sensor")
print("star root reward (prior mean):", star.states[star.root].reward)

# A Beta-Bernoulli arm: a coin with unknown bias, uniform prior, explored
# for up to two tosses.  States are labelled by their posterior B(a,b).
coin = build_beta_bernoulli_arm(1, 1, depth=2, play_cost=1, arm_id="trial")
print("coin states:", sorted(coin.states))
for sid in ("B(1,1)", "B(2,1)", "B(1,2)"):
    st = coin.states[sid]
    print(f"  {sid}: reward {st.reward:.4f}, children {[c for c, _ in st.transitions]}")

instance = BanditInstance(arms=(star, coin), budget=3.0, objective=Objective("budgeted"))
print("diagnostics on the clean instance:", validate_instance(instance))

# Corrupt the martingale by hand and watch validation flag it.
bad_doc = instance_to_json(instance)
bad_doc["arms"][0]["states"][0]["reward"] += 1e-3
from banditlp import instance_from_json

bad = instance_from_json(bad_doc)
for d in validate_instance(bad):
    print("diagnostic:", d.kind, d.arm_id, d.state_id, f"magnitude {d.magnitude:.2e}")

print()
print("instance file schema (excerpt):")
print(json.dumps(instance_to_json(instance)["arms"][0], indent=1)[:400], "...")
