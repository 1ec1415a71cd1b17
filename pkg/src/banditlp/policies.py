"""Sequential rounding of single-arm policies and their evaluation.

The greedy plans order arms by a bang-per-buck ratio of the single-arm
statistics and then run each arm's randomized stopping policy to completion,
never revisiting an abandoned arm.  Four executors share the machinery:

* greedy order    - checks the remaining budget before every play; an
                    unaffordable play stops exploration and exploits the
                    current arm where it stands,
* greedy violate  - the analysis twin; plays each arm's policy to completion
                    and only then checks the budget (may overshoot by the
                    cost of one arm),
* lagrangean      - no budget; stops at the first exploit event; pays for
                    everything it played,
* concave         - assigns grid weights instead of a single exploit pick,
                    then halves all weights to restore packing feasibility.

Exact expectations come from a forward pass over arms in plan order,
convolving each arm's per-budget outcome distribution; Monte-Carlo runs use
counter-based Philox streams keyed by (seed, replication) so results are
reproducible regardless of scheduling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product as iter_product
from typing import Mapping, Sequence

import numpy as np

from .relaxations import (
    RelaxationSolution,
    SingleArmPolicy,
    build_budgeted_lp,
    var_name,
)
from .statespace import ArmStateSpace, BanditInstance
from .lp import solve_lp

UNREACHABLE_W = 1e-9


# ---------------------------------------------------------------------------
# Plans


@dataclass(frozen=True)
class RankedArm:
    """An arm's greedy key: value rate nu over congestion rate mu."""

    arm_id: str
    nu: float
    mu: float
    ratio: float


@dataclass(frozen=True)
class GreedyPlan:
    variant: str  # "budgeted" | "lagrangean" | "concave"
    order: tuple[RankedArm, ...]
    budget: float | None  # effective execution budget (alpha * C for bicriteria)
    alpha: float = 1.0


def _ratio(nu: float, mu: float) -> float:
    if mu > 0.0:
        return nu / mu
    if nu > 0.0:
        return math.inf  # free value first
    return -math.inf  # dead weight last


def _cost_share(cost: float, budget: float | None) -> float:
    if cost == 0.0:
        return 0.0
    return cost / budget


def make_greedy_plan(
    policies: Sequence[SingleArmPolicy],
    instance: BanditInstance,
    variant: str | None = None,
    alpha: float = 1.0,
) -> GreedyPlan:
    """Rank arms for sequential execution.

    budgeted:   nu = R,       mu = alpha*P + C_phi/C   (alpha > 1 is the
                bicriteria variant, executed with budget alpha*C)
    lagrangean: nu = R - C_phi, mu = P
    concave:    nu = R,       mu = (sigma/B)*P + C_phi/C
    """
    if variant is None:
        variant = instance.objective.kind
    if alpha < 1.0:
        raise ValueError("bicriteria factor alpha must be >= 1")
    ranked = []
    for pol in policies:
        if variant == "budgeted":
            nu = pol.reward
            mu = alpha * pol.explore_prob + _cost_share(pol.cost, instance.budget)
        elif variant == "lagrangean":
            nu = pol.reward - pol.cost
            mu = pol.explore_prob
        elif variant == "concave":
            prob = instance.objective.concave
            sigma = prob.sigmas[pol.arm_id]
            nu = pol.reward
            mu = (sigma / prob.capacity) * pol.explore_prob + _cost_share(pol.cost, instance.budget)
        else:
            raise ValueError(f"unknown plan variant {variant!r}")
        ranked.append(RankedArm(pol.arm_id, nu, mu, _ratio(nu, mu)))
    ranked.sort(key=lambda r: (-r.ratio, r.arm_id))
    budget = None
    if variant == "budgeted":
        budget = alpha * instance.budget
    elif variant == "concave":
        budget = instance.budget
    return GreedyPlan(variant=variant, order=tuple(ranked), budget=budget, alpha=alpha)


# ---------------------------------------------------------------------------
# Execution tables and RNG streams


class _StateExec:
    __slots__ = ("sid", "w", "z", "zx", "cum_grid", "children", "cum_probs", "cost", "reward", "leaf")

    def __init__(self, sid, w, z, zx, cum_grid, children, cum_probs, cost, reward, leaf):
        self.sid = sid
        self.w = w
        self.z = z
        self.zx = zx
        self.cum_grid = cum_grid
        self.children = children
        self.cum_probs = cum_probs
        self.cost = cost
        self.reward = reward
        self.leaf = leaf


class _ArmExec:
    __slots__ = ("arm_id", "h", "root", "root_reward", "states", "topo")

    def __init__(self, arm: ArmStateSpace, solution: RelaxationSolution):
        self.arm_id = arm.arm_id
        self.h = arm.switch_cost
        self.root = arm.root
        self.root_reward = arm.states[arm.root].reward
        self.topo = arm.topo_order()
        self.states = {}
        for sid in self.topo:
            st = arm.states[sid]
            key = (arm.arm_id, sid)
            w = solution.w[key]
            z = 0.0 if st.is_leaf else solution.z[key]
            grid = solution.x_grid.get(key)
            if grid is None:
                zx = z + solution.x.get(key, 0.0)
                cum_grid = None
            else:
                acc = z
                cum_grid = []
                for v in grid:
                    acc += v
                    cum_grid.append(acc)
                zx = acc
                cum_grid = tuple(cum_grid)
            children = tuple(c for c, p in st.transitions if p > 0.0)
            cum = []
            acc_p = 0.0
            for c, p in st.transitions:
                if p > 0.0:
                    acc_p += p
                    cum.append(acc_p)
            self.states[sid] = _StateExec(
                sid, w, z, zx, cum_grid, children, tuple(cum), st.play_cost, st.reward, st.is_leaf
            )


def _tables(instance: BanditInstance, solution: RelaxationSolution) -> dict[str, _ArmExec]:
    return {arm.arm_id: _ArmExec(arm, solution) for arm in instance.arms}


def rng_stream(seed: int, rep: int) -> "_DrawStream":
    """Counter-based uniform stream keyed by (seed, replication)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, rep & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return _DrawStream(np.random.Generator(np.random.Philox(key=key)))


class _DrawStream:
    """Buffered uniform draws; same values as scalar Generator.random() calls."""

    __slots__ = ("_rng", "_buf", "_i")

    def __init__(self, rng: np.random.Generator, block: int = 32):
        self._rng = rng
        self._buf = rng.random(block).tolist()
        self._i = 0

    def random(self) -> float:
        i = self._i
        buf = self._buf
        if i >= len(buf):
            buf = self._rng.random(64).tolist()
            self._buf = buf
            i = 0
        self._i = i + 1
        return buf[i]


class _StreamPool:
    """Re-keys one Philox generator per replication; streams match rng_stream.

    Rebuilding the bit-generator state in place avoids the construction cost
    that dominates tight Monte-Carlo loops while producing bit-identical
    draws.
    """

    __slots__ = ("_bg", "_gen", "_seed")

    def __init__(self, seed: int):
        self._seed = seed & 0xFFFFFFFFFFFFFFFF
        self._bg = np.random.Philox(key=np.zeros(2, dtype=np.uint64))
        self._gen = np.random.Generator(self._bg)

    def stream(self, rep: int) -> _DrawStream:
        self._bg.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.zeros(4, dtype=np.uint64),
                "key": np.array([self._seed, rep & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64),
            },
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return _DrawStream(self._gen)


def _sample_child(se: _StateExec, rng: "_DrawStream") -> str:
    u = rng.random()
    cum = se.cum_probs
    for i in range(len(cum) - 1):
        if u < cum[i]:
            return se.children[i]
    return se.children[-1]


def _affordable_first_play(instance: BanditInstance, budget: float) -> bool:
    for arm in instance.arms:
        first = arm.first_play_cost()
        if first is not None and first <= budget:
            return True
    return False


def _argmax_root(instance: BanditInstance) -> tuple[str, str, float]:
    best = None
    for arm in instance.arms:
        r = arm.states[arm.root].reward
        if best is None or r > best[2]:
            best = (arm.arm_id, arm.root, r)
    return best


def prior_best_value(instance: BanditInstance) -> tuple[str, float]:
    """Naive no-exploration comparator: pick the best prior mean outright."""
    arm_id, _, r = _argmax_root(instance)
    return arm_id, r


# ---------------------------------------------------------------------------
# Traces


@dataclass(frozen=True)
class TraceEvent:
    arm: str
    state: str
    action: str  # switch | play | stop-exploit | stop-null | budget-stop
    cost: float
    q: float | None


@dataclass
class ExecutionTrace:
    variant: str
    seed: int
    events: list[TraceEvent]
    exploited: tuple[str, str] | None
    total_cost: float
    value: float
    weights: dict[str, float] | None = None
    weight_numerators: dict[str, int] | None = None
    grid: int | None = None
    visited: list[str] = field(default_factory=list)
    switches: dict[str, int] = field(default_factory=dict)


def trace_to_jsonl(trace: ExecutionTrace) -> str:
    """One JSON object per event plus a final summary record."""
    lines = [
        json.dumps(
            {"arm": e.arm, "state": e.state, "action": e.action, "cost": e.cost, "q": e.q}
        )
        for e in trace.events
    ]
    summary = {
        "summary": True,
        "variant": trace.variant,
        "seed": trace.seed,
        "value": trace.value,
        "cost": trace.total_cost,
        "exploited_arm": None if trace.exploited is None else trace.exploited[0],
        "exploited_state": None if trace.exploited is None else trace.exploited[1],
    }
    if trace.weights is not None:
        summary["weights"] = trace.weights
    lines.append(json.dumps(summary))
    return "\n".join(lines) + "\n"


class _Run:
    """Mutable per-trace scratch; collects events only when recording."""

    __slots__ = ("record", "events", "visited", "switches", "spent")

    def __init__(self, record: bool):
        self.record = record
        self.events: list[TraceEvent] = []
        self.visited: list[str] = []
        self.switches: dict[str, int] = {}
        self.spent = 0.0

    def event(self, arm, state, action, cost, q):
        if self.record:
            self.events.append(TraceEvent(arm, state, action, cost, q))


def _run_budgeted(
    instance: BanditInstance,
    plan: GreedyPlan,
    tables: Mapping[str, _ArmExec],
    rule: str,
    rng: "_DrawStream",
    record: bool,
):
    budget = plan.budget
    run = _Run(record)
    if not _affordable_first_play(instance, budget):
        arm_id, root, r = _argmax_root(instance)
        return run, (arm_id, root), r, None
    exploited = None
    terminal: dict[str, str] = {}
    for ra in plan.order:
        ax = tables[ra.arm_id]
        run.visited.append(ax.arm_id)
        state = ax.root
        played = False
        while True:
            se = ax.states[state]
            if se.w < UNREACHABLE_W:
                run.event(ax.arm_id, state, "stop-null", 0.0, None)
                terminal[ax.arm_id] = state
                break
            q = rng.random() * se.w
            if q <= se.z:
                cost = se.cost + (ax.h if not played else 0.0)
                if rule == "order" and run.spent + cost > budget:
                    run.event(ax.arm_id, state, "budget-stop", 0.0, q)
                    exploited = (ax.arm_id, state)
                    break
                if not played:
                    run.event(ax.arm_id, state, "switch", ax.h, None)
                    run.switches[ax.arm_id] = run.switches.get(ax.arm_id, 0) + 1
                    played = True
                run.event(ax.arm_id, state, "play", se.cost, q)
                run.spent += cost
                state = _sample_child(se, rng)
            elif q <= se.zx:
                run.event(ax.arm_id, state, "stop-exploit", 0.0, q)
                exploited = (ax.arm_id, state)
                break
            else:
                run.event(ax.arm_id, state, "stop-null", 0.0, q)
                terminal[ax.arm_id] = state
                break
        if exploited is not None:
            break
        if rule == "violate" and run.spent > budget:
            run.event(ax.arm_id, terminal[ax.arm_id], "budget-stop", 0.0, None)
            exploited = (ax.arm_id, terminal[ax.arm_id])
            break
    if exploited is None:
        # Every policy stopped dead: exploit the best terminal state anywhere.
        best_arm, best_state, best_r = None, None, -1.0
        for arm in instance.arms:
            sid = terminal.get(arm.arm_id, arm.root)
            r = arm.states[sid].reward
            if r > best_r:
                best_arm, best_state, best_r = arm.arm_id, sid, r
        exploited = (best_arm, best_state)
    arm_id, sid = exploited
    value = instance.arm(arm_id).states[sid].reward
    return run, exploited, value, None


def _run_lagrangean(
    instance: BanditInstance,
    plan: GreedyPlan,
    tables: Mapping[str, _ArmExec],
    rng: "_DrawStream",
    record: bool,
):
    run = _Run(record)
    exploited = None
    for ra in plan.order:
        ax = tables[ra.arm_id]
        run.visited.append(ax.arm_id)
        state = ax.root
        played = False
        while True:
            se = ax.states[state]
            if se.w < UNREACHABLE_W:
                run.event(ax.arm_id, state, "stop-null", 0.0, None)
                break
            q = rng.random() * se.w
            if q <= se.z:
                cost = se.cost + (ax.h if not played else 0.0)
                if not played:
                    run.event(ax.arm_id, state, "switch", ax.h, None)
                    run.switches[ax.arm_id] = run.switches.get(ax.arm_id, 0) + 1
                    played = True
                run.event(ax.arm_id, state, "play", se.cost, q)
                run.spent += cost
                state = _sample_child(se, rng)
            elif q <= se.zx:
                run.event(ax.arm_id, state, "stop-exploit", 0.0, q)
                exploited = (ax.arm_id, state)
                break
            else:
                run.event(ax.arm_id, state, "stop-null", 0.0, q)
                break
        if exploited is not None:
            break
    reward = 0.0
    if exploited is not None:
        reward = instance.arm(exploited[0]).states[exploited[1]].reward
    value = reward - run.spent
    return run, exploited, value, None


def _run_concave(
    instance: BanditInstance,
    plan: GreedyPlan,
    tables: Mapping[str, _ArmExec],
    rng: "_DrawStream",
    record: bool,
):
    prob = instance.objective.concave
    run = _Run(record)
    budget = plan.budget
    L = _solution_grid(tables)
    sigmas = prob.sigmas
    numerators: dict[str, int] = {}
    final_state: dict[str, str] = {a.arm_id: a.root for a in instance.arms}
    acc_units = 0.0  # sum sigma_i * eps_i in units of 1/L
    cap_units = prob.capacity * L
    stop_all = False
    for ra in plan.order:
        if acc_units >= cap_units:
            break
        ax = tables[ra.arm_id]
        run.visited.append(ax.arm_id)
        state = ax.root
        played = False
        while True:
            se = ax.states[state]
            if se.w < UNREACHABLE_W:
                run.event(ax.arm_id, state, "stop-null", 0.0, None)
                numerators[ax.arm_id] = 0
                final_state[ax.arm_id] = state
                break
            q = rng.random() * se.w
            if q <= se.z:
                cost = se.cost + (ax.h if not played else 0.0)
                if run.spent + cost > budget:
                    run.event(ax.arm_id, state, "budget-stop", 0.0, q)
                    numerators[ax.arm_id] = L  # eps forced to 1
                    final_state[ax.arm_id] = state
                    acc_units += sigmas[ax.arm_id] * L
                    stop_all = True
                    break
                if not played:
                    run.event(ax.arm_id, state, "switch", ax.h, None)
                    run.switches[ax.arm_id] = run.switches.get(ax.arm_id, 0) + 1
                    played = True
                run.event(ax.arm_id, state, "play", se.cost, q)
                run.spent += cost
                state = _sample_child(se, rng)
            else:
                level = _smallest_level(se, q)
                numerators[ax.arm_id] = level
                final_state[ax.arm_id] = state
                acc_units += sigmas[ax.arm_id] * level
                run.event(
                    ax.arm_id, state, "stop-exploit" if level > 0 else "stop-null", 0.0, q
                )
                break
        if stop_all:
            break
    weights = {}
    value = 0.0
    for arm in instance.arms:
        num = numerators.get(arm.arm_id, 0)
        y = num / (2 * L)
        weights[arm.arm_id] = y
        value += prob.value_at(arm.arm_id, final_state[arm.arm_id], y)
    numerators_full = {a.arm_id: numerators.get(a.arm_id, 0) for a in instance.arms}
    return run, None, value, (weights, numerators_full, L)


def _solution_grid(tables: Mapping[str, _ArmExec]) -> int:
    for ax in tables.values():
        for se in ax.states.values():
            if se.cum_grid is not None:
                return len(se.cum_grid) - 1
    raise ValueError("concave execution needs a solution with grid exploit masses")


def _smallest_level(se: _StateExec, q: float) -> int:
    cum = se.cum_grid
    if cum is None:
        raise ValueError("state has no grid thresholds; was the solution concave?")
    for l, threshold in enumerate(cum):
        if q <= threshold:
            return l
    return 0  # slack past z + sum_l x_l: stop with weight 0


def _finish_trace(run: _Run, variant, seed, exploited, value, extra) -> ExecutionTrace:
    trace = ExecutionTrace(
        variant=variant,
        seed=seed,
        events=run.events,
        exploited=exploited,
        total_cost=run.spent,
        value=value,
        visited=run.visited,
        switches=run.switches,
    )
    if extra is not None:
        weights, numerators, grid = extra
        trace.weights = weights
        trace.weight_numerators = numerators
        trace.grid = grid
    return trace


def execute_greedy_order(
    instance: BanditInstance, plan: GreedyPlan, solution: RelaxationSolution, rng_seed: int
) -> ExecutionTrace:
    """One sampled run of the budget-respecting greedy policy."""
    if plan.variant != "budgeted":
        raise ValueError("execute_greedy_order needs a budgeted (or bicriteria) plan")
    tables = _tables(instance, solution)
    run, exploited, value, extra = _run_budgeted(
        instance, plan, tables, "order", rng_stream(rng_seed, 0), record=True
    )
    return _finish_trace(run, "budgeted", rng_seed, exploited, value, extra)


def execute_greedy_violate(
    instance: BanditInstance, plan: GreedyPlan, solution: RelaxationSolution, rng_seed: int
) -> ExecutionTrace:
    """One sampled run of the analysis twin that checks the budget only between arms."""
    if plan.variant != "budgeted" or plan.alpha != 1.0:
        raise ValueError("execute_greedy_violate needs a plain budgeted plan")
    tables = _tables(instance, solution)
    run, exploited, value, extra = _run_budgeted(
        instance, plan, tables, "violate", rng_stream(rng_seed, 0), record=True
    )
    return _finish_trace(run, "budgeted", rng_seed, exploited, value, extra)


def execute_lagrangean_greedy(
    instance: BanditInstance, plan: GreedyPlan, solution: RelaxationSolution, rng_seed: int
) -> ExecutionTrace:
    if plan.variant != "lagrangean":
        raise ValueError("execute_lagrangean_greedy needs a lagrangean plan")
    tables = _tables(instance, solution)
    run, exploited, value, extra = _run_lagrangean(
        instance, plan, tables, rng_stream(rng_seed, 0), record=True
    )
    return _finish_trace(run, "lagrangean", rng_seed, exploited, value, extra)


def execute_concave_greedy(
    instance: BanditInstance, plan: GreedyPlan, solution: RelaxationSolution, rng_seed: int
) -> ExecutionTrace:
    if plan.variant != "concave":
        raise ValueError("execute_concave_greedy needs a concave plan")
    tables = _tables(instance, solution)
    run, exploited, value, extra = _run_concave(
        instance, plan, tables, rng_stream(rng_seed, 0), record=True
    )
    return _finish_trace(run, "concave", rng_seed, exploited, value, extra)


# ---------------------------------------------------------------------------
# Trace verification


def verify_trace(
    trace: ExecutionTrace, instance: BanditInstance, plan: GreedyPlan, rule: str = "order"
) -> list[str]:
    """Event-level invariant audit; returns human-readable violations."""
    out: list[str] = []
    blocks: list[str] = []
    for e in trace.events:
        if not blocks or blocks[-1] != e.arm:
            blocks.append(e.arm)
    if len(set(blocks)) != len(blocks):
        out.append("an arm block is revisited")
    plan_ids = [ra.arm_id for ra in plan.order]
    if blocks and blocks != plan_ids[: len(blocks)]:
        out.append("arm blocks do not follow the plan order")
    switch_counts: dict[str, int] = {}
    for e in trace.events:
        if e.action == "switch":
            switch_counts[e.arm] = switch_counts.get(e.arm, 0) + 1
    if any(c > 1 for c in switch_counts.values()):
        out.append("an arm is switched into more than once")
    event_cost = sum(e.cost for e in trace.events)
    if abs(event_cost - trace.total_cost) > 1e-9:
        out.append("event costs do not add up to the trace cost")
    if plan.variant == "budgeted":
        if rule == "order" and trace.total_cost > plan.budget + 1e-9:
            out.append("greedy-order trace exceeds the budget")
        if rule == "violate":
            cap = plan.budget + instance.max_single_arm_cost()
            if trace.total_cost > cap + 1e-9:
                out.append("greedy-violate trace exceeds budget + c_max")
    if plan.variant == "concave" and trace.weight_numerators is not None:
        prob = instance.objective.concave
        L = trace.grid
        units = sum(prob.sigmas[a] * n for a, n in trace.weight_numerators.items())
        if units > 2 * prob.capacity * L + 1e-9:
            out.append("pre-scaling weights exceed twice the packing capacity")
    return out


# ---------------------------------------------------------------------------
# Monte-Carlo evaluation


@dataclass
class MonteCarloReport:
    mean: float
    stderr: float
    reps: int
    values: np.ndarray
    max_cost: float
    mean_cost: float
    violations: list[str]


def monte_carlo_evaluate(
    instance: BanditInstance,
    plan: GreedyPlan,
    solution: RelaxationSolution,
    reps: int,
    seed: int,
    rule: str = "order",
) -> MonteCarloReport:
    """Mean realized value over reps independent traces with invariant checks.

    The stream for replication k is derived from (seed, k), so results do not
    depend on evaluation order and the first k traces of a longer run match a
    shorter run with the same seed.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    tables = _tables(instance, solution)
    values = np.empty(reps)
    max_cost = 0.0
    total_cost = 0.0
    violations: dict[str, int] = {}
    plan_ids = [ra.arm_id for ra in plan.order]
    cap = None
    if plan.variant == "budgeted":
        cap = plan.budget if rule == "order" else plan.budget + instance.max_single_arm_cost()
    elif plan.variant == "concave":
        cap = plan.budget
    prob = instance.objective.concave

    def note(msg: str) -> None:
        violations[msg] = violations.get(msg, 0) + 1

    pool = _StreamPool(seed)
    for k in range(reps):
        rng = pool.stream(k)
        if plan.variant == "budgeted":
            run, exploited, value, extra = _run_budgeted(instance, plan, tables, rule, rng, False)
        elif plan.variant == "lagrangean":
            run, exploited, value, extra = _run_lagrangean(instance, plan, tables, rng, False)
        elif plan.variant == "concave":
            run, exploited, value, extra = _run_concave(instance, plan, tables, rng, False)
        else:
            raise ValueError(f"unknown plan variant {plan.variant!r}")
        values[k] = value
        max_cost = max(max_cost, run.spent)
        total_cost += run.spent
        if cap is not None and run.spent > cap + 1e-9:
            note("trace cost exceeds the allowed cap")
        if run.visited != plan_ids[: len(run.visited)]:
            note("visited arms do not form a plan-order prefix")
        if any(c > 1 for c in run.switches.values()):
            note("multiple switch charges on one arm")
        if extra is not None:
            _, numerators, L = extra
            units = sum(prob.sigmas[a] * n for a, n in numerators.items())
            if units > 2 * prob.capacity * L + 1e-9:
                note("pre-scaling weights exceed 2B")
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return MonteCarloReport(
        mean=mean,
        stderr=stderr,
        reps=reps,
        values=values,
        max_cost=max_cost,
        mean_cost=total_cost / reps,
        violations=[f"{k} (x{v})" for k, v in violations.items()],
    )


# ---------------------------------------------------------------------------
# Exact evaluation


def _require_integer_budgeted(instance: BanditInstance, budget: float) -> None:
    if not instance.has_integer_costs():
        raise ValueError("exact evaluation of budgeted plans requires integer costs")
    if not float(budget).is_integer():
        raise ValueError("exact evaluation of budgeted plans requires an integer budget")


def _arm_outcome_dist(ax: _ArmExec, avail: float | None) -> dict[tuple[str, str, float], float]:
    """Outcome distribution of running one arm's stopping policy.

    Keys are (mode, state, spent) with mode 'exploit' (eps = 1), 'null'
    (eps = 0), or 'stop' (an unaffordable play; only when avail is given).
    Integer-valued costs stay exact in float arithmetic.
    """
    out: dict[tuple[str, str, float], float] = {}

    def add(key, p):
        out[key] = out.get(key, 0.0) + p

    masses: dict[str, dict[tuple[float, bool], float]] = {ax.root: {(0.0, False): 1.0}}
    for sid in ax.topo:
        cur = masses.pop(sid, None)
        if not cur:
            continue
        se = ax.states[sid]
        for (spent, played), pr in cur.items():
            if se.w < UNREACHABLE_W:
                add(("null", sid, spent), pr)
                continue
            pz = se.z / se.w
            px = max((se.zx - se.z) / se.w, 0.0)
            pn = max(1.0 - pz - px, 0.0)
            if px > 0.0:
                add(("exploit", sid, spent), pr * px)
            if pn > 0.0:
                add(("null", sid, spent), pr * pn)
            if pz > 0.0:
                cost = se.cost + (ax.h if not played else 0.0)
                if avail is not None and spent + cost > avail:
                    add(("stop", sid, spent), pr * pz)
                else:
                    for child, p_child in zip(se.children, _probs_from_cum(se.cum_probs)):
                        bucket = masses.setdefault(child, {})
                        key = (spent + cost, True)
                        bucket[key] = bucket.get(key, 0.0) + pr * pz * p_child
    return out


def _probs_from_cum(cum: tuple[float, ...]) -> list[float]:
    probs = []
    prev = 0.0
    for c in cum:
        probs.append(c - prev)
        prev = c
    return probs


def evaluate_plan_exact(
    instance: BanditInstance,
    plan: GreedyPlan,
    solution: RelaxationSolution,
    rule: str = "order",
) -> tuple[float, float]:
    """Exact expected (value, exploration cost) of a rounded plan.

    Budgeted/bicriteria plans need integer costs and budget (the remaining
    budget is a state of the forward pass); lagrangean plans use the closed
    form over independent per-arm runs and accept any costs.  Concave plans
    are evaluated by Monte-Carlo only.
    """
    tables = _tables(instance, solution)
    order = [tables[ra.arm_id] for ra in plan.order]

    if plan.variant == "lagrangean":
        reach = 1.0
        value = cost = 0.0
        for ax in order:
            dist = _arm_outcome_dist(ax, None)
            p_exploit = sum(p for (mode, _, _), p in dist.items() if mode == "exploit")
            exp_reward = sum(
                p * ax.states[sid].reward for (mode, sid, _), p in dist.items() if mode == "exploit"
            )
            exp_cost = sum(p * spent for (_, _, spent), p in dist.items())
            value += reach * (exp_reward - exp_cost)
            cost += reach * exp_cost
            reach *= 1.0 - p_exploit
        return value, cost

    if plan.variant == "concave":
        raise ValueError("exact evaluation is not available for concave plans; use monte_carlo_evaluate")

    if plan.variant != "budgeted":
        raise ValueError(f"unknown plan variant {plan.variant!r}")
    if rule == "violate" and plan.alpha != 1.0:
        raise ValueError("the violate rule applies to plain budgeted plans only")
    _require_integer_budgeted(instance, plan.budget)
    budget = float(plan.budget)

    if not _affordable_first_play(instance, budget):
        _, _, r = _argmax_root(instance)
        return r, 0.0

    value = cost = 0.0
    dist_cache: dict[tuple[str, float | None], dict] = {}

    def outcomes(ax: _ArmExec, avail: float | None):
        key = (ax.arm_id, avail)
        d = dist_cache.get(key)
        if d is None:
            d = _arm_outcome_dist(ax, avail)
            dist_cache[key] = d
        return d

    # forward state: (remaining budget, best null-terminal reward so far)
    frontier: dict[tuple[float, float], float] = {(budget, -1.0): 1.0}
    for ax in order:
        nxt: dict[tuple[int, float], float] = {}
        for (avail, m), pr in frontier.items():
            dist = outcomes(ax, avail if rule == "order" else None)
            for (mode, sid, spent), p in dist.items():
                mass = pr * p
                r = ax.states[sid].reward
                cost += mass * spent
                if mode in ("exploit", "stop"):
                    value += mass * r
                elif rule == "violate" and spent > avail:
                    value += mass * r  # budget overshot: exploit this arm where it stopped
                else:
                    key = (avail - spent, max(m, r))
                    nxt[key] = nxt.get(key, 0.0) + mass
        frontier = nxt
    for (_, m), pr in frontier.items():
        value += pr * max(m, 0.0)
    return value, cost


# ---------------------------------------------------------------------------
# Compilation into a randomized joint-state process (for the statistics oracle)


class GreedyOrderProcess:
    """GreedyOrder as a randomized policy over joint states.

    Implements the `branches` protocol of
    ``oracle.enumerate_policy_statistics``: at each decision point the active
    arm's uniform draw splits into play / exploit / dead branches, with the
    budget gate and the argmax fallback mirrored from the executor.  The aux
    value is the index of the active arm in plan order (or "pre" before the
    affordability pre-check resolves).
    """

    def __init__(self, instance: BanditInstance, plan: GreedyPlan, solution: RelaxationSolution):
        if plan.variant != "budgeted":
            raise ValueError("only budgeted plans compile to a joint-state process")
        self.instance = instance
        self.plan = plan
        self.tables = _tables(instance, solution)
        self.order = [self.tables[ra.arm_id] for ra in plan.order]
        self.arm_index = {a.arm_id: i for i, a in enumerate(instance.arms)}

    def initial_aux(self):
        return "pre"

    def _fallback(self, joint) -> tuple:
        best_arm, best_r = None, -1.0
        for i, arm in enumerate(self.instance.arms):
            r = arm.states[joint.states[i]].reward
            if r > best_r:
                best_arm, best_r = arm.arm_id, r
        return ("stop", best_arm)

    def branches(self, joint, aux):
        if aux == "pre":
            if not _affordable_first_play(self.instance, self.plan.budget):
                arm_id, _, _ = _argmax_root(self.instance)
                return [(1.0, ("stop", arm_id), None)]
            aux = 0
        if aux >= len(self.order):
            return [(1.0, self._fallback(joint), None)]
        ax = self.order[aux]
        i = self.arm_index[ax.arm_id]
        se = ax.states[joint.states[i]]
        if se.w < UNREACHABLE_W:
            return [(1.0, ("noop",), aux + 1)]
        pz = se.z / se.w
        px = max((se.zx - se.z) / se.w, 0.0)
        pn = max(1.0 - pz - px, 0.0)
        out = []
        if pz > 0.0:
            cost = se.cost + (ax.h if joint.last != i else 0.0)
            if cost > joint.budget:
                out.append((pz, ("stop", ax.arm_id), None))  # budget-stop: exploit in place
            else:
                out.append((pz, ("play", ax.arm_id), aux))
        if px > 0.0:
            out.append((px, ("stop", ax.arm_id), None))
        if pn > 0.0:
            out.append((pn, ("noop",), aux + 1))
        return out


# ---------------------------------------------------------------------------
# Non-adaptive probing for two-level instances


@dataclass(frozen=True)
class NonadaptiveResult:
    """A probe set plus decision rule with its exact value and LP ratio."""

    case: str  # "prior-best" | "boundary-arm" | "probe-set"
    probe_set: tuple[str, ...]
    select_arm: str | None  # fixed selection for the no-probe cases
    expected_value: float
    probe_cost: float
    gamma_star: float

    @property
    def lp_ratio(self) -> float:
        if self.gamma_star <= 0.0:
            return math.inf
        return self.expected_value / self.gamma_star


def nonadaptive_two_level(
    instance: BanditInstance, solution: RelaxationSolution
) -> NonadaptiveResult:
    """Three-case probe-set construction for depth-1 star instances.

    Either exploits the best prior outright, or commits to the greedy
    boundary arm, or probes an affordable set S and then selects the best of
    the observed values and the unprobed priors.  The achieved exact value is
    at least gamma*/7.
    """
    if instance.objective.kind != "budgeted":
        raise ValueError("the non-adaptive construction applies to budgeted instances")
    for arm in instance.arms:
        if not arm.is_two_level():
            raise ValueError(f"arm {arm.arm_id!r} is not a two-level star")
    C = float(instance.budget)
    gamma = solution.gamma_star

    root_mass = sum(
        arm.states[arm.root].reward * solution.x[(arm.arm_id, arm.root)] for arm in instance.arms
    )
    if root_mass >= gamma / 7.0 - 1e-12:
        arm_id, _, r = _argmax_root(instance)
        return NonadaptiveResult("prior-best", (), arm_id, r, 0.0, gamma)

    # Re-solve with exploit mass forbidden at the roots.
    lp = build_budgeted_lp(instance)
    root_names = {var_name("x", a.arm_id, a.root) for a in instance.arms}
    lp.variables = [
        (name, lb, 0.0 if name in root_names else ub) for name, lb, ub in lp.variables
    ]
    raw = solve_lp(lp)
    if raw.status != "optimal":
        raise RuntimeError(f"restricted LP is {raw.status}")
    restricted = RelaxationSolution.from_raw(instance, raw, "budgeted")

    items = []
    for arm in instance.arms:
        z_i = restricted.z[(arm.arm_id, arm.root)]
        leaf_mass = sum(
            restricted.x[(arm.arm_id, sid)] for sid in arm.states if sid != arm.root
        )
        leaf_value = sum(
            restricted.x[(arm.arm_id, sid)] * arm.states[sid].reward
            for sid in arm.states
            if sid != arm.root
        )
        if z_i > 1e-12:
            X_i = leaf_mass / z_i
            R_i = leaf_value / z_i
        else:
            X_i = R_i = 0.0
        c_i = arm.switch_cost + arm.states[arm.root].play_cost
        if C > 0:
            m_i = c_i / C + X_i
        else:
            m_i = X_i if c_i == 0 else math.inf
        items.append((arm.arm_id, R_i, X_i, c_i, m_i))
    items.sort(key=lambda it: (-_ratio(it[1], it[4]), it[0]))

    probe: list[str] = []
    probe_cost = 0.0
    boundary = None  # (arm_id, fractional z, R)
    remaining = 1.0
    for arm_id, R_i, X_i, c_i, m_i in items:
        if math.isinf(m_i):
            continue
        if m_i <= 1e-15:
            probe.append(arm_id)
            probe_cost += c_i
            continue
        if m_i <= remaining:
            probe.append(arm_id)
            probe_cost += c_i
            remaining -= m_i
        else:
            boundary = (arm_id, remaining / m_i, R_i)
            remaining = 0.0
            break

    if boundary is not None and boundary[1] * boundary[2] > gamma / 7.0:
        arm = instance.arm(boundary[0])
        return NonadaptiveResult(
            "boundary-arm", (), arm.arm_id, arm.states[arm.root].reward, 0.0, gamma
        )

    probe_set = tuple(probe)
    value = _two_level_rule_value(instance, probe_set)
    return NonadaptiveResult("probe-set", probe_set, None, value, probe_cost, gamma)


def _two_level_rule_value(instance: BanditInstance, probe_set: tuple[str, ...]) -> float:
    """Exact value of: probe S, then pick max(observed values, unprobed priors)."""
    probed = [instance.arm(a) for a in probe_set]
    unprobed_best = max(
        (a.states[a.root].reward for a in instance.arms if a.arm_id not in probe_set),
        default=0.0,
    )
    supports = []
    size = 1
    for arm in probed:
        root = arm.states[arm.root]
        supports.append([(arm.states[c].reward, p) for c, p in root.transitions if p > 0.0])
        size *= max(len(supports[-1]), 1)
    if size > 1_000_000:
        raise ValueError("probe set too large for exhaustive outcome enumeration")
    value = 0.0
    for combo in iter_product(*supports):
        pr = 1.0
        best = unprobed_best
        for leaf_reward, p in combo:
            pr *= p
            if leaf_reward > best:
                best = leaf_reward
        value += pr * best
    return value
