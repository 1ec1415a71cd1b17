"""The profit variant: pay for every play, keep what the chosen arm is worth.

No budget row; the LP objective subtracts play and switch costs directly.
At the optimum every arm's profit term is non-negative (zeroing an arm and
exploiting its prior is always available), and the greedy ordering by
(R - C)/P earns at least half of the LP profit in expectation.  Individual
runs can still lose money: exploration costs are sunk even when no arm fires.
"""

from banditlp import (
    BanditInstance,
    Objective,
    build_two_level_arm,
    evaluate_plan_exact,
    extract_single_arm_policies,
    make_greedy_plan,
    monte_carlo_evaluate,
    solve_relaxation,
)

# an informative arm worth exploring plus a safe fallback arm
risky = build_two_level_arm([0.0, 1.0], [0.5, 0.5], play_cost=0.1, arm_id="risky")
safe = build_two_level_arm([0.4], [1.0], play_cost=0.0, arm_id="safe")
inst = BanditInstance(arms=(risky, safe), budget=None, objective=Objective("lagrangean"))

solution = solve_relaxation(inst)
policies = extract_single_arm_policies(solution, inst)
print("gamma* (LP profit bound):", solution.gamma_star)
for pol in policies:
    print(f"  {pol.arm_id}: P={pol.explore_prob:.3f} R={pol.reward:.3f} C={pol.cost:.3f}  (R-C >= 0)")

plan = make_greedy_plan(policies, inst, "lagrangean")
print("order by (R-C)/P:", [r.arm_id for r in plan.order])

profit, cost = evaluate_plan_exact(inst, plan, solution)
print(f"exact expected profit {profit:.4f} >= gamma*/2 = {solution.gamma_star / 2:.4f}")

mc = monte_carlo_evaluate(inst, plan, solution, reps=50_000, seed=3)
print(f"Monte-Carlo profit {mc.mean:.4f} +- {mc.stderr:.4f}; worst single run {mc.values.min():.3f} (cost sunk, no arm fired)")
