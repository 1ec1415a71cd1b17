import pytest

from banditlp.bench import as_concave, as_lagrangean, gen_integrality_gap, gen_random_suite, GeneratorSpec
from banditlp.lp import solve_lp
from banditlp.relaxations import (
    RelaxationSolution,
    build_budgeted_lp,
    build_concave_lp,
    build_lagrangean_lp,
    extract_single_arm_policies,
    solve_relaxation,
)
from banditlp.statespace import (
    BanditInstance,
    Objective,
    build_two_level_arm,
    concave_grid_size,
    make_concave_problem,
)


def _single_arm_budgeted(budget=0.0, reward=0.7):
    arm = build_two_level_arm([reward], [1.0], play_cost=1, arm_id="a0")
    return BanditInstance(arms=(arm,), budget=budget, objective=Objective("budgeted"))


def test_gap_lp_value_and_extraction():
    inst = gen_integrality_gap(4)
    sol = solve_relaxation(inst)
    assert sol.gamma_star == pytest.approx(1.0, abs=1e-6)
    # at objective 1 the solution is forced: z_root = 1 and 1/4 exploit mass
    # at every reward-1 leaf (each x is capped by w = z/4)
    pols = extract_single_arm_policies(sol, inst)
    for pol in pols:
        assert pol.states["root"].z == pytest.approx(1.0, abs=1e-6)
        assert pol.states["v1"].x == pytest.approx(0.25, abs=1e-6)
        assert pol.explore_prob == pytest.approx(0.25, abs=1e-6)
        assert pol.reward == pytest.approx(0.25, abs=1e-6)
        assert pol.cost == pytest.approx(1.0, abs=1e-6)
    assert sum(p.reward for p in pols) == pytest.approx(sol.gamma_star, abs=1e-6)
    assert sum(p.explore_prob for p in pols) <= 1 + 1e-6
    assert sum(p.cost for p in pols) <= inst.budget + 1e-6


def test_budget_zero_exploits_prior():
    inst = _single_arm_budgeted(budget=0.0, reward=0.7)
    sol = solve_relaxation(inst)
    assert sol.gamma_star == pytest.approx(0.7, abs=1e-9)
    (pol,) = extract_single_arm_policies(sol, inst)
    assert pol.explore_prob == pytest.approx(1.0, abs=1e-9)  # all mass on x_root
    assert pol.reward == pytest.approx(0.7, abs=1e-9)
    assert pol.cost == pytest.approx(0.0, abs=1e-12)


def test_two_identical_arms_hand_solution():
    # two {0,1} w.p. 1/2 arms, c = 1, h = 0, C = 2: play both (cost 2),
    # exploit the reward-1 leaves with total mass 1/2 + 1/2 = 1, so gamma* = 1;
    # gamma* <= 1 because the exploit mass row caps sum x at 1 and rewards <= 1.
    arms = tuple(
        build_two_level_arm([0.0, 1.0], [0.5, 0.5], play_cost=1, arm_id=f"a{i}") for i in range(2)
    )
    inst = BanditInstance(arms=arms, budget=2.0, objective=Objective("budgeted"))
    sol = solve_relaxation(inst)
    assert sol.gamma_star == pytest.approx(1.0, abs=1e-6)


def test_wrong_variant_errors():
    inst = gen_integrality_gap(2)
    with pytest.raises(ValueError):
        build_lagrangean_lp(inst)
    with pytest.raises(ValueError):
        build_concave_lp(inst)
    lag = as_lagrangean(inst)
    with pytest.raises(ValueError):
        build_budgeted_lp(lag)


def test_lagrangean_single_symmetric_arm_never_plays():
    # for one symmetric {0,1} arm exploration has zero value of information:
    # exploiting the prior scores 0.5 while playing first scores 0.5 - c.
    # (hand-solve: the LP objective is 0.5 - c*t for play probability t)
    for c in (0.1, 0.6):
        arm = build_two_level_arm([0.0, 1.0], [0.5, 0.5], play_cost=c, arm_id="A")
        inst = BanditInstance(arms=(arm,), budget=None, objective=Objective("lagrangean"))
        sol = solve_relaxation(inst)
        assert sol.gamma_star == pytest.approx(0.5, abs=1e-7)
        assert sol.z[("A", "root")] == pytest.approx(0.0, abs=1e-7)
        assert sol.x[("A", "root")] == pytest.approx(1.0, abs=1e-6)


def test_lagrangean_two_arm_exploration_pays():
    # arm A {0,1} w.p. 1/2 at cost 0.1 plus a sure 0.4 fallback arm B:
    # play A, exploit its 1-leaf, park the leftover exploit mass on B:
    # 0.5*1 + 0.5*0.4 - 0.1 = 0.6  (hand enumeration of pure strategies)
    armA = build_two_level_arm([0.0, 1.0], [0.5, 0.5], play_cost=0.1, arm_id="A")
    armB = build_two_level_arm([0.4], [1.0], play_cost=0.0, arm_id="B")
    inst = BanditInstance(arms=(armA, armB), budget=None, objective=Objective("lagrangean"))
    sol = solve_relaxation(inst)
    assert sol.gamma_star == pytest.approx(0.6, abs=1e-6)


def test_lagrangean_zero_rewards():
    arm = build_two_level_arm([0.0, 0.0], [0.5, 0.5], play_cost=1, arm_id="A")
    inst = BanditInstance(arms=(arm,), budget=None, objective=Objective("lagrangean"))
    sol = solve_relaxation(inst)
    assert sol.gamma_star == pytest.approx(0.0, abs=1e-9)
    assert sol.z[("A", "root")] == pytest.approx(0.0, abs=1e-9)


def test_per_arm_profit_terms_nonnegative():
    suite = gen_random_suite(GeneratorSpec(family="random-beta", count=25, seed=42, budget_cap=5))
    suite += gen_random_suite(GeneratorSpec(family="random-two-level", count=25, seed=43, budget_cap=5))
    for inst in suite:
        lag = as_lagrangean(inst)
        sol = solve_relaxation(lag)
        for pol in extract_single_arm_policies(sol, lag):
            assert pol.reward - pol.cost >= -1e-7


def test_concave_grid_size():
    assert concave_grid_size(2, 0.5) == 4  # grid points {0, 1/4, 1/2, 3/4, 1}
    assert concave_grid_size(3, 0.25) == 12
    with pytest.raises(ValueError):
        concave_grid_size(2, 0.0)


def test_concave_top1_reduction_brackets_budgeted_value():
    # with g = r*y, sigma = 1, B = 1 the concave LP is the budgeted LP with the
    # exploit-mass row relaxed to 1 + eps, so the values agree up to that slack
    eps = 0.25
    for seed in range(6):
        inst = gen_random_suite(
            GeneratorSpec(family="random-two-level", count=1, seed=seed, budget_cap=5)
        )[0]
        conc = as_concave(inst, capacity=1.0, epsilon=eps)
        gamma_b = solve_relaxation(inst).gamma_star
        gamma_c = solve_relaxation(conc).gamma_star
        assert gamma_c >= gamma_b - 1e-6
        assert gamma_c <= (1 + eps) * gamma_b + 1e-6


def test_concave_top1_equality_on_gap_instance():
    # on the symmetric gap instance the leaf caps bind before the mass row,
    # so both relaxations solve to exactly 1
    inst = gen_integrality_gap(4)
    conc = as_concave(inst, capacity=1.0, epsilon=0.25)
    assert solve_relaxation(conc).gamma_star == pytest.approx(
        solve_relaxation(inst).gamma_star, abs=1e-6
    )


def test_concave_all_select_degenerate():
    # B = n and a huge budget: every arm can carry weight 1, so the LP collects
    # each arm's full prior mean (per-arm mass x+z <= w caps value at r_root)
    arms = tuple(
        build_two_level_arm([0.0, 1.0], [0.5, 0.5], play_cost=1, arm_id=f"a{i}") for i in range(2)
    )
    inst = BanditInstance(arms=arms, budget=10.0, objective=Objective("budgeted"))
    conc = as_concave(inst, capacity=2.0, epsilon=0.25)
    sol = solve_relaxation(conc)
    assert sol.gamma_star == pytest.approx(1.0, abs=1e-6)


def test_concave_stats_packing_row():
    inst = gen_random_suite(GeneratorSpec(family="random-two-level", count=1, seed=9, budget_cap=5))[0]
    conc = as_concave(inst, capacity=1.0, epsilon=0.25)
    sol = solve_relaxation(conc)
    pols = extract_single_arm_policies(sol, conc)
    prob = conc.objective.concave
    assert sum(prob.sigmas[p.arm_id] * p.explore_prob for p in pols) <= prob.capacity * (1 + prob.epsilon) + 1e-6
    assert sum(p.reward for p in pols) == pytest.approx(sol.gamma_star, abs=1e-6)


def test_concave_table_validation_errors():
    arms = (build_two_level_arm([0.0, 1.0], [0.5, 0.5], play_cost=1, arm_id="a0"),)
    grid = concave_grid_size(1, 0.5)
    # convex (not concave) table
    bad = {"a0": {s: tuple((l / grid) ** 2 for l in range(grid + 1)) for s in ("root", "v0", "v1")}}
    prob = make_concave_problem(arms, 1.0, 0.5, value_tables=bad)
    inst = BanditInstance(arms=arms, budget=2.0, objective=Objective("concave", concave=prob))
    with pytest.raises(ValueError, match="concavity"):
        build_concave_lp(inst)
    # super-martingale failure: a child outvalues its parent
    tables = {
        "a0": {
            "root": tuple(0.1 * l / grid for l in range(grid + 1)),
            "v0": tuple(0.0 for _ in range(grid + 1)),
            "v1": tuple(1.0 * l / grid for l in range(grid + 1)),
        }
    }
    prob = make_concave_problem(arms, 1.0, 0.5, value_tables=tables)
    inst = BanditInstance(arms=arms, budget=2.0, objective=Objective("concave", concave=prob))
    with pytest.raises(ValueError, match="super-martingale"):
        build_concave_lp(inst)


def test_solution_invariants_on_random_suite():
    suite = gen_random_suite(GeneratorSpec(family="random-beta", count=10, seed=7, budget_cap=5))
    for inst in suite:
        sol = solve_relaxation(inst)
        assert sol.check_invariants(inst, tol=1e-6) == []
        for arm in inst.arms:
            assert sol.w[(arm.arm_id, arm.root)] == 1.0
        pols = extract_single_arm_policies(sol, inst)
        assert sum(p.reward for p in pols) == pytest.approx(sol.gamma_star, abs=1e-6)
        assert sum(p.explore_prob for p in pols) <= 1 + 1e-6
        assert sum(p.cost for p in pols) <= inst.budget + 1e-6
        # stats are recomputable from the stored thresholds
        for pol, arm in zip(pols, inst.arms):
            p, r, c = pol.recompute_stats(arm, sol.grid, None)
            assert p == pytest.approx(pol.explore_prob, abs=1e-9)
            assert r == pytest.approx(pol.reward, abs=1e-9)
            assert c == pytest.approx(pol.cost, abs=1e-9)


def test_extraction_requires_optimal():
    inst = gen_integrality_gap(2)
    lp = build_budgeted_lp(inst)
    raw = solve_lp(lp)
    raw.status = "infeasible"
    with pytest.raises(ValueError):
        RelaxationSolution.from_raw(inst, raw, "budgeted")
