"""The integrality-gap family: where the LP bound and the true optimum part ways.

n identical star arms, each hiding reward 1 with probability 1/n, unit play
costs, budget n.  Every policy can afford to open all arms, so the optimal
adaptive value is 1 - (1 - 1/n)^n, while the LP relaxation always believes 1.
The ratio climbs toward e/(e-1) ~ 1.582 as n grows.
"""

from banditlp import dp_optimal, gen_integrality_gap, solve_relaxation

print(f"{'n':>4} {'gamma*':>8} {'OPT':>10} {'gamma*/OPT':>11}")
for n in (1, 2, 4, 8, 16):
    inst = gen_integrality_gap(n)
    gamma = solve_relaxation(inst).gamma_star
    opt, _ = dp_optimal(inst)
    closed = 1 - (1 - 1 / n) ** n
    assert abs(opt - closed) < 1e-9
    print(f"{n:>4} {gamma:>8.4f} {opt:>10.6f} {gamma / opt:>11.4f}")

print()
print("e/(e-1) =", 1 / (1 - pow(2.718281828459045, -1)))
