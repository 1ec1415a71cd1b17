"""Belief-state DAGs for Bayesian bandit arms.

An arm is a DAG of belief states.  Each state carries the expected posterior
reward of committing to the arm there, the cost of one more play, and the
outcome distribution of that play (transition probabilities to child states).
Bayes-consistency shows up as the martingale identity: an internal state's
reward equals the probability-weighted mean of its children's rewards.

Two canonical families are provided: two-level star spaces (a single play
reveals a deterministic underlying reward drawn from the prior) and
Beta-Bernoulli posterior DAGs (coin arms with Beta priors, truncated at a
play depth).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

MODEL_TOL = 1e-9


@dataclass(frozen=True)
class BeliefState:
    """One belief state of an arm.

    ``transitions`` is empty for leaves; otherwise it lists
    ``(child_state_id, probability)`` pairs that sum to 1.
    """

    id: str
    reward: float
    play_cost: float = 0.0
    transitions: tuple[tuple[str, float], ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.transitions


@dataclass(frozen=True)
class ArmStateSpace:
    """A single arm: a reward-martingale DAG rooted at the prior state."""

    arm_id: str
    root: str
    states: Mapping[str, BeliefState]
    switch_cost: float = 0.0

    def state(self, state_id: str) -> BeliefState:
        return self.states[state_id]

    def topo_order(self) -> list[str]:
        """State ids in a topological order starting at the root.

        Only states reachable from the root are returned.  Raises
        ``ValueError`` on a cycle; use ``validate_instance`` for a
        non-throwing diagnosis.  Iterative DFS: belief DAGs can be deeper
        than the interpreter stack (depth tracks the play budget).
        """
        order: list[str] = []
        mark: dict[str, int] = {}  # 1 = on the DFS path, 2 = done
        stack: list[tuple[str, bool]] = [(self.root, False)]
        while stack:
            sid, expanded = stack.pop()
            if expanded:
                mark[sid] = 2
                order.append(sid)
                continue
            if mark.get(sid) is not None:  # stale duplicate entry
                continue
            mark[sid] = 1
            stack.append((sid, True))
            st = self.states.get(sid)
            if st is not None:
                for child, _ in st.transitions:
                    if child not in self.states:
                        continue
                    status = mark.get(child)
                    if status == 1:  # back edge onto the active path
                        raise ValueError(f"arm {self.arm_id!r}: cycle through state {child!r}")
                    if status is None:
                        stack.append((child, False))
        order.reverse()
        return order

    def max_exploration_cost(self) -> float:
        """Switch cost plus the maximum total play cost along any root-leaf path."""
        best: dict[str, float] = {}
        for sid in reversed(self.topo_order()):
            st = self.states[sid]
            if st.is_leaf:
                best[sid] = 0.0
            else:
                best[sid] = st.play_cost + max(best.get(c, 0.0) for c, _ in st.transitions)
        return self.switch_cost + best.get(self.root, 0.0)

    def first_play_cost(self) -> float | None:
        """Cost of the first possible play (switch + root play); None if the root is a leaf."""
        root = self.states[self.root]
        if root.is_leaf:
            return None
        return self.switch_cost + root.play_cost

    def is_two_level(self) -> bool:
        """True when the arm is a depth-1 star: root plays once, all children are leaves."""
        root = self.states[self.root]
        if root.is_leaf:
            return False
        for child, _ in root.transitions:
            if child not in self.states or not self.states[child].is_leaf:
                return False
        return len(self.states) == 1 + len(root.transitions)

    def structural_key(self) -> tuple:
        """Hashable fingerprint; arms with equal keys are interchangeable copies."""
        return (
            self.switch_cost,
            self.root,
            tuple(sorted((s.id, s.reward, s.play_cost, s.transitions) for s in self.states.values())),
        )


@dataclass(frozen=True)
class ConcaveProblem:
    """Concave-utility exploitation data.

    Weights y_i in [0,1] are assigned under the packing constraint
    sum_i sigma_i y_i <= capacity.  State values are sampled on the grid
    {0, 1/grid, ..., 1}: ``value_tables[arm][state][l]`` is the utility of
    committing weight l/grid to the arm in that state.
    """

    capacity: float
    epsilon: float
    grid: int
    sigmas: Mapping[str, float]
    value_tables: Mapping[str, Mapping[str, tuple[float, ...]]]

    def table(self, arm_id: str, state_id: str) -> tuple[float, ...]:
        return self.value_tables[arm_id][state_id]

    def value_at(self, arm_id: str, state_id: str, weight: float) -> float:
        """Table value at an arbitrary weight, linear between grid points.

        Concavity makes the interpolant a conservative lower bound on the
        underlying utility.
        """
        zeta = self.table(arm_id, state_id)
        y = min(max(weight, 0.0), 1.0) * self.grid
        lo = min(int(math.floor(y)), self.grid - 1) if self.grid > 0 else 0
        frac = y - lo
        return zeta[lo] + frac * (zeta[lo + 1] - zeta[lo])


@dataclass(frozen=True)
class Objective:
    """Objective variant of an instance: budgeted, lagrangean, or concave."""

    kind: str  # "budgeted" | "lagrangean" | "concave"
    alpha: float = 1.0  # default bicriteria budget factor for budgeted runs
    concave: ConcaveProblem | None = None


BUDGETED = Objective("budgeted")
LAGRANGEAN = Objective("lagrangean")


@dataclass(frozen=True)
class BanditInstance:
    """A set of arms plus a budget and an objective variant."""

    arms: tuple[ArmStateSpace, ...]
    budget: float | None = None
    objective: Objective = BUDGETED

    def arm(self, arm_id: str) -> ArmStateSpace:
        for a in self.arms:
            if a.arm_id == arm_id:
                return a
        raise KeyError(arm_id)

    def max_single_arm_cost(self) -> float:
        """c_max: the largest cost of fully exploring any one arm."""
        return max((a.max_exploration_cost() for a in self.arms), default=0.0)

    def has_integer_costs(self) -> bool:
        for a in self.arms:
            if not float(a.switch_cost).is_integer():
                return False
            for s in a.states.values():
                if not s.is_leaf and not float(s.play_cost).is_integer():
                    return False
        return True


def concave_grid_size(n_arms: int, epsilon: float) -> int:
    """Grid resolution L = ceil(n / epsilon)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return int(math.ceil(n_arms / epsilon))


def linear_value_tables(arms: Sequence[ArmStateSpace], grid: int) -> dict[str, dict[str, tuple[float, ...]]]:
    """Tables for the plain max-reward utility g_u(y) = r_u * y."""
    return {
        a.arm_id: {s.id: tuple(s.reward * l / grid for l in range(grid + 1)) for s in a.states.values()}
        for a in arms
    }


def make_concave_problem(
    arms: Sequence[ArmStateSpace],
    capacity: float,
    epsilon: float,
    sigmas: Mapping[str, float] | None = None,
    value_tables: Mapping[str, Mapping[str, Sequence[float]]] | None = None,
) -> ConcaveProblem:
    """Assemble a ConcaveProblem; defaults: sigma_i = 1, linear tables g = r*y."""
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    grid = concave_grid_size(len(arms), epsilon)
    if sigmas is None:
        sigmas = {a.arm_id: 1.0 for a in arms}
    if value_tables is None:
        value_tables = linear_value_tables(arms, grid)
    tables = {
        arm: {state: tuple(float(v) for v in tab) for state, tab in per_arm.items()}
        for arm, per_arm in value_tables.items()
    }
    return ConcaveProblem(
        capacity=float(capacity),
        epsilon=float(epsilon),
        grid=grid,
        sigmas={k: float(v) for k, v in sigmas.items()},
        value_tables=tables,
    )


# ---------------------------------------------------------------------------
# Builders


def _check_id(state_id: str) -> str:
    if "|" in state_id:
        raise ValueError(f"state/arm ids may not contain '|': {state_id!r}")
    return state_id


def build_two_level_arm(
    values: Sequence[float],
    probs: Sequence[float],
    play_cost: float,
    switch_cost: float = 0.0,
    arm_id: str = "arm",
) -> ArmStateSpace:
    """Star-shaped arm: one play fully reveals a reward drawn from the prior.

    The root reward is the prior mean sum_j p_j a_j; leaf j has reward a_j
    and is reached with probability p_j.  Duplicate values stay separate
    leaves.
    """
    if len(values) != len(probs):
        raise ValueError("values and probs must have the same length")
    if len(values) == 0:
        raise ValueError("need at least one (value, prob) pair")
    if any(v < 0 for v in values):
        raise ValueError("reward values must be non-negative")
    if any(p < 0 for p in probs):
        raise ValueError("probabilities must be non-negative")
    if abs(sum(probs) - 1.0) > MODEL_TOL:
        raise ValueError(f"probabilities sum to {sum(probs)!r}, not 1")
    if play_cost < 0 or switch_cost < 0:
        raise ValueError("costs must be non-negative")
    _check_id(arm_id)

    mean = float(sum(p * v for v, p in zip(values, probs)))
    leaves = {
        f"v{j}": BeliefState(id=f"v{j}", reward=float(v), play_cost=0.0)
        for j, v in enumerate(values)
    }
    root = BeliefState(
        id="root",
        reward=mean,
        play_cost=float(play_cost),
        transitions=tuple((f"v{j}", float(p)) for j, p in enumerate(probs)),
    )
    states = {"root": root, **leaves}
    return ArmStateSpace(arm_id=arm_id, root="root", states=states, switch_cost=float(switch_cost))


def build_beta_bernoulli_arm(
    alpha1: int,
    alpha2: int,
    depth: int,
    play_cost: float,
    switch_cost: float = 0.0,
    arm_id: str = "arm",
) -> ArmStateSpace:
    """Beta-posterior DAG for a Bernoulli arm, truncated after ``depth`` plays.

    State B(a,b) has reward a/(a+b); a success (probability a/(a+b)) moves to
    B(a+1,b), a failure to B(a,b+1).  The DAG has (depth+1)(depth+2)/2 states.
    """
    if alpha1 < 1 or alpha2 < 1:
        raise ValueError("Beta parameters must be positive integers")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if play_cost < 0 or switch_cost < 0:
        raise ValueError("costs must be non-negative")
    _check_id(arm_id)

    def name(a: int, b: int) -> str:
        return f"B({a},{b})"

    states: dict[str, BeliefState] = {}
    for d in range(depth + 1):
        for s in range(d + 1):
            a = alpha1 + s
            b = alpha2 + (d - s)
            reward = a / (a + b)
            if d < depth:
                transitions = (
                    (name(a + 1, b), a / (a + b)),
                    (name(a, b + 1), b / (a + b)),
                )
                cost = float(play_cost)
            else:
                transitions = ()
                cost = 0.0
            sid = name(a, b)
            states[sid] = BeliefState(id=sid, reward=reward, play_cost=cost, transitions=transitions)
    return ArmStateSpace(
        arm_id=arm_id, root=name(alpha1, alpha2), states=states, switch_cost=float(switch_cost)
    )


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Diagnostic:
    """One model violation found by validate_instance."""

    arm_id: str | None
    state_id: str | None
    kind: str
    magnitude: float
    message: str


def _validate_arm(arm: ArmStateSpace, out: list[Diagnostic]) -> None:
    def add(state_id, kind, magnitude, message):
        out.append(Diagnostic(arm.arm_id, state_id, kind, float(magnitude), message))

    if arm.root not in arm.states:
        add(None, "missing-root", 1.0, f"root state {arm.root!r} not defined")
        return
    if arm.switch_cost < 0:
        add(None, "negative-value", -arm.switch_cost, "switch cost is negative")

    for s in arm.states.values():
        if s.reward < 0:
            add(s.id, "negative-value", -s.reward, "reward is negative")
        if s.play_cost < 0:
            add(s.id, "negative-value", -s.play_cost, "play cost is negative")
        for child, p in s.transitions:
            if child not in arm.states:
                add(s.id, "unknown-state", 1.0, f"transition to undefined state {child!r}")
            if p < -MODEL_TOL or p > 1 + MODEL_TOL:
                add(s.id, "probability-range", max(-p, p - 1.0), f"transition probability {p!r} outside [0,1]")
        if s.transitions:
            total = sum(p for _, p in s.transitions)
            if abs(total - 1.0) > MODEL_TOL:
                add(s.id, "normalization", abs(total - 1.0), f"transition probabilities sum to {total!r}")
            if all(c in arm.states for c, _ in s.transitions):
                mean = sum(p * arm.states[c].reward for c, p in s.transitions)
                if abs(s.reward - mean) > MODEL_TOL:
                    add(
                        s.id,
                        "martingale",
                        abs(s.reward - mean),
                        f"reward {s.reward!r} != child mean {mean!r}",
                    )

    # DAG-ness and reachability from the root.
    try:
        reachable = set(arm.topo_order())
    except ValueError as exc:
        add(None, "cycle", 1.0, str(exc))
        return
    for sid in arm.states:
        if sid not in reachable:
            add(sid, "unreachable", 1.0, "state not reachable from root")


def validate_instance(instance: BanditInstance) -> list[Diagnostic]:
    """Model diagnostics; empty iff every arm is a reward-martingale DAG.

    Reports DAG violations, probability normalization and martingale errors
    beyond 1e-9, negative quantities, and instance-level problems (duplicate
    arm ids, missing/invalid budget for budgeted/concave objectives).
    Non-integer costs are not flagged here; the exact evaluator and the DP
    oracle enforce integrality themselves.
    """
    out: list[Diagnostic] = []
    seen: set[str] = set()
    for arm in instance.arms:
        if arm.arm_id in seen:
            out.append(Diagnostic(arm.arm_id, None, "duplicate-arm", 1.0, "duplicate arm id"))
        seen.add(arm.arm_id)
        _validate_arm(arm, out)

    kind = instance.objective.kind
    if kind not in ("budgeted", "lagrangean", "concave"):
        out.append(Diagnostic(None, None, "objective", 1.0, f"unknown objective kind {kind!r}"))
    if kind in ("budgeted", "concave"):
        b = instance.budget
        if b is None or not math.isfinite(b) or b < 0:
            out.append(Diagnostic(None, None, "budget", 1.0, f"{kind} objective requires a finite budget >= 0, got {b!r}"))
    if kind == "concave":
        prob = instance.objective.concave
        if prob is None:
            out.append(Diagnostic(None, None, "concave", 1.0, "concave objective without ConcaveProblem data"))
        else:
            for arm in instance.arms:
                sigma = prob.sigmas.get(arm.arm_id)
                if sigma is None:
                    out.append(Diagnostic(arm.arm_id, None, "concave", 1.0, "missing sigma"))
                elif sigma < 0 or sigma > prob.capacity:
                    out.append(
                        Diagnostic(arm.arm_id, None, "concave", abs(sigma), f"sigma {sigma!r} outside [0, B]")
                    )
    return out


# ---------------------------------------------------------------------------
# JSON instance files


def instance_to_json(instance: BanditInstance) -> dict:
    """Plain-dict form of an instance (the on-disk schema)."""
    obj: dict = {"type": instance.objective.kind}
    if instance.objective.kind == "budgeted" and instance.objective.alpha != 1.0:
        obj["alpha"] = instance.objective.alpha
    prob = instance.objective.concave
    if prob is not None:
        obj["epsilon"] = prob.epsilon
        obj["B"] = prob.capacity
        obj["sigmas"] = dict(prob.sigmas)
        obj["value_tables"] = {
            arm: {state: list(tab) for state, tab in per_arm.items()}
            for arm, per_arm in prob.value_tables.items()
        }
    return {
        "budget": instance.budget,
        "objective": obj,
        "arms": [
            {
                "id": a.arm_id,
                "switch_cost": a.switch_cost,
                "root": a.root,
                "states": [
                    {
                        "id": s.id,
                        "reward": s.reward,
                        "play_cost": s.play_cost,
                        "children": [{"state": c, "prob": p} for c, p in s.transitions],
                    }
                    for s in a.states.values()
                ],
            }
            for a in instance.arms
        ],
    }


def instance_from_json(doc: Mapping) -> BanditInstance:
    arms = []
    for a in doc["arms"]:
        states = {}
        for s in a["states"]:
            states[s["id"]] = BeliefState(
                id=s["id"],
                reward=float(s["reward"]),
                play_cost=float(s.get("play_cost", 0.0)),
                transitions=tuple((c["state"], float(c["prob"])) for c in s.get("children", ())),
            )
        arms.append(
            ArmStateSpace(
                arm_id=a["id"],
                root=a["root"],
                states=states,
                switch_cost=float(a.get("switch_cost", 0.0)),
            )
        )
    obj_doc = doc.get("objective") or {"type": "budgeted"}
    kind = obj_doc.get("type", "budgeted")
    concave = None
    if kind == "concave":
        tables = {
            arm: {state: tuple(float(v) for v in tab) for state, tab in per_arm.items()}
            for arm, per_arm in obj_doc["value_tables"].items()
        }
        concave = ConcaveProblem(
            capacity=float(obj_doc["B"]),
            epsilon=float(obj_doc["epsilon"]),
            grid=concave_grid_size(len(arms), float(obj_doc["epsilon"])),
            sigmas={k: float(v) for k, v in obj_doc["sigmas"].items()},
            value_tables=tables,
        )
    objective = Objective(kind=kind, alpha=float(obj_doc.get("alpha", 1.0)), concave=concave)
    budget = doc.get("budget")
    return BanditInstance(
        arms=tuple(arms),
        budget=None if budget is None else float(budget),
        objective=objective,
    )


def save_instance(instance: BanditInstance, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_json(instance), fh, indent=1)
        fh.write("\n")


def load_instance(path: str) -> BanditInstance:
    with open(path) as fh:
        return instance_from_json(json.load(fh))
