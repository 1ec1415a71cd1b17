"""Exact optima and policy statistics by dynamic programming on joint states.

The joint state is (per-arm belief states, remaining integer budget,
last-played arm).  Memoization keys canonicalize over structurally identical
arms (value functions are invariant under permuting interchangeable arms),
which collapses the n-fold product space to multisets; the symmetric
integrality-gap family at n = 16 would otherwise need ~3^16 entries.

Also walks any policy (deterministic table or randomized process) forward to
its exact per-state occupancy probabilities w/x/z, which can be fed back into
the relaxation rows for verification.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import NamedTuple

from .statespace import BanditInstance

ORACLE_GUARD = 10_000_000


class OracleGuardError(RuntimeError):
    """Estimated joint-state count exceeds the configured limit."""


class JointState(NamedTuple):
    states: tuple[str, ...]  # current state id per arm, in instance order
    budget: int | None  # remaining budget; None for the lagrangean objective
    last: int | None  # index of the last-played arm, for switch-cost accounting


def _require_integer_costs(instance: BanditInstance, with_budget: bool) -> None:
    # integrality matters only when the remaining budget is a DP dimension
    if not with_budget:
        return
    if not instance.has_integer_costs():
        raise ValueError("the DP oracle requires integer play and switch costs")
    b = instance.budget
    if b is None or not float(b).is_integer() or b < 0:
        raise ValueError(f"the DP oracle requires a non-negative integer budget, got {b!r}")


def _arm_classes(instance: BanditInstance) -> list[int]:
    seen: dict[tuple, int] = {}
    classes = []
    for arm in instance.arms:
        key = arm.structural_key()
        classes.append(seen.setdefault(key, len(seen)))
    return classes


def _multiset_count(n_items: int, n_kinds: int) -> int:
    return math.comb(n_items + n_kinds - 1, n_items)


def estimate_joint_states(instance: BanditInstance, with_budget: bool) -> int:
    """Canonical joint-state count used against the oracle guard."""
    classes = _arm_classes(instance)
    per_class: dict[int, int] = {}
    sizes: dict[int, int] = {}
    for idx, cls in enumerate(classes):
        per_class[cls] = per_class.get(cls, 0) + 1
        sizes[cls] = len(instance.arms[idx].states)
    count = 1
    for cls, n_arms in per_class.items():
        count *= _multiset_count(n_arms, sizes[cls])
    if with_budget:
        count *= int(instance.budget) + 1
    if any(a.switch_cost > 0 for a in instance.arms):
        count *= len(instance.arms) + 1
    return count


class DecisionTable:
    """Optimal policy produced by dp_optimal.

    ``decide(joint)`` returns ("play", arm_id) or ("stop",); the stop action
    exploits the best current arm (argmax reward, lowest arm id on ties).
    """

    def __init__(self, instance: BanditInstance, memo, classes, track_last):
        self._instance = instance
        self._memo = memo
        self._classes = classes
        self._track_last = track_last

    def _canon(self, joint: JointState):
        last = joint.last if self._track_last else None
        last_entry = None if last is None else (self._classes[last], joint.states[last])
        entries = tuple(sorted(zip(self._classes, joint.states)))
        return (joint.budget, last_entry, entries)

    def decide(self, joint: JointState) -> tuple:
        action = self._memo[self._canon(joint)][1]
        if action[0] == "stop":
            return ("stop",)
        _, cls, sid, is_last = action
        for idx, arm in enumerate(self._instance.arms):
            if self._classes[idx] != cls or joint.states[idx] != sid:
                continue
            if self._track_last and is_last != (idx == joint.last):
                continue
            return ("play", arm.arm_id)
        raise KeyError(f"no arm matches canonical action {action!r} in {joint!r}")


def dp_optimal(
    instance: BanditInstance, limits: int = ORACLE_GUARD
) -> tuple[float, DecisionTable]:
    """Optimal adaptive value (budgeted reward or lagrangean profit) and policy.

    Budgeted: maximize expected exploited reward with play+switch cost at most
    the budget on every trajectory.  Lagrangean: maximize exploited reward
    minus accumulated cost, stop always available.
    """
    kind = instance.objective.kind
    if kind not in ("budgeted", "lagrangean"):
        raise ValueError(f"the DP oracle handles budgeted/lagrangean objectives, not {kind!r}")
    with_budget = kind == "budgeted"
    _require_integer_costs(instance, with_budget)
    est = estimate_joint_states(instance, with_budget)
    if est > limits:
        raise OracleGuardError(f"estimated joint-state count {est} exceeds the limit {limits}")

    arms = instance.arms
    n = len(arms)
    classes = _arm_classes(instance)
    track_last = any(a.switch_cost > 0 for a in arms)
    memo: dict[tuple, tuple[float, tuple]] = {}

    depth_bound = sum(len(a.states) for a in arms) + 10
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 10 * depth_bound + 1000))

    def canon(states, budget, last):
        last_entry = None if last is None else (classes[last], states[last])
        return (budget, last_entry, tuple(sorted(zip(classes, states))))

    def value(states: tuple[str, ...], budget: int | None, last: int | None) -> float:
        key = canon(states, budget, last if track_last else None)
        hit = memo.get(key)
        if hit is not None:
            return hit[0]
        best = max(arms[i].states[states[i]].reward for i in range(n))
        action: tuple = ("stop",)
        for i in range(n):
            st = arms[i].states[states[i]]
            if st.is_leaf:
                continue
            cost = st.play_cost + (arms[i].switch_cost if last != i else 0.0)
            if with_budget:
                icost = int(cost)
                if icost > budget:
                    continue
                v = 0.0
                for child, p in st.transitions:
                    if p:
                        v += p * value(states[:i] + (child,) + states[i + 1 :], budget - icost, i)
            else:
                v = -cost
                for child, p in st.transitions:
                    if p:
                        v += p * value(states[:i] + (child,) + states[i + 1 :], None, i)
            if v > best + 1e-12:
                best = v
                action = ("play", classes[i], states[i], i == last)
        memo[key] = (best, action)
        return best

    roots = tuple(a.root for a in arms)
    opt = value(roots, int(instance.budget) if with_budget else None, None)
    return opt, DecisionTable(instance, memo, classes, track_last)


# ---------------------------------------------------------------------------
# Policy statistics


@dataclass
class PolicyStatistics:
    """Exact occupancy probabilities of a policy: per-(arm, state) w, x, z."""

    w: dict[tuple[str, str], float]
    x: dict[tuple[str, str], float]
    z: dict[tuple[str, str], float]
    expected_reward: float

    def as_lp_values(self) -> dict[str, float]:
        """Values keyed by relaxation variable names, for row checking."""
        from .relaxations import var_name

        out: dict[str, float] = {}
        for (arm, sid), v in self.w.items():
            out[var_name("w", arm, sid)] = v
        for (arm, sid), v in self.x.items():
            out[var_name("x", arm, sid)] = v
        for (arm, sid), v in self.z.items():
            out[var_name("z", arm, sid)] = v
        return out


def enumerate_policy_statistics(
    instance: BanditInstance,
    policy,
    limits: int = ORACLE_GUARD,
) -> PolicyStatistics:
    """Walk a policy forward over the joint chain and accumulate w/x/z exactly.

    ``policy`` is either a DecisionTable (or anything with ``decide(joint)``
    returning ("play", arm_id) / ("stop",) / ("stop", arm_id)), or a
    randomized process exposing ``initial_aux()`` and
    ``branches(joint, aux) -> [(prob, action, next_aux)]`` where actions may
    additionally be ("noop",) for internal transitions.
    """
    kind = instance.objective.kind
    with_budget = kind == "budgeted"
    if with_budget:
        _require_integer_costs(instance, True)
    est = estimate_joint_states(instance, with_budget)
    if est > limits:
        raise OracleGuardError(f"estimated joint-state count {est} exceeds the limit {limits}")

    arms = instance.arms
    n = len(arms)
    arm_index = {a.arm_id: i for i, a in enumerate(arms)}

    if hasattr(policy, "branches"):
        initial_aux = policy.initial_aux()
        branches = policy.branches
    else:
        initial_aux = None

        def branches(joint, aux):
            return [(1.0, policy.decide(joint), None)]

    w = {(a.arm_id, sid): 0.0 for a in arms for sid in a.states}
    x = dict(w)
    z = dict(w)
    for a in arms:
        w[(a.arm_id, a.root)] = 1.0
    expected_reward = 0.0

    start = JointState(tuple(a.root for a in arms), int(instance.budget) if with_budget else None, None)
    # Levels ordered by total plays made; noop transitions stay within a level.
    frontier: dict[tuple[JointState, object], float] = {(start, initial_aux): 1.0}
    while frontier:
        next_frontier: dict[tuple[JointState, object], float] = {}
        while frontier:
            (joint, aux), prob = frontier.popitem()
            if prob <= 0.0:
                continue
            for bp, action, next_aux in branches(joint, aux):
                mass = prob * bp
                if mass <= 0.0:
                    continue
                if action[0] == "stop":
                    if len(action) > 1 and action[1] is not None:
                        i = arm_index[action[1]]
                    else:
                        i = max(range(n), key=lambda k: (arms[k].states[joint.states[k]].reward, -k))
                    sid = joint.states[i]
                    x[(arms[i].arm_id, sid)] += mass
                    expected_reward += mass * arms[i].states[sid].reward
                elif action[0] == "noop":
                    key = (joint, next_aux)
                    frontier[key] = frontier.get(key, 0.0) + mass
                elif action[0] == "play":
                    i = arm_index[action[1]]
                    st = arms[i].states[joint.states[i]]
                    if st.is_leaf:
                        raise ValueError(f"policy plays leaf state {st.id!r} of arm {arms[i].arm_id!r}")
                    cost = st.play_cost + (arms[i].switch_cost if joint.last != i else 0.0)
                    budget = joint.budget
                    if with_budget:
                        budget = joint.budget - int(cost)
                        if budget < 0:
                            raise ValueError("policy exceeds the budget")
                    z[(arms[i].arm_id, st.id)] += mass
                    for child, p in st.transitions:
                        if not p:
                            continue
                        w[(arms[i].arm_id, child)] += mass * p
                        nxt = JointState(
                            joint.states[:i] + (child,) + joint.states[i + 1 :], budget, i
                        )
                        key = (nxt, next_aux)
                        next_frontier[key] = next_frontier.get(key, 0.0) + mass * p
                else:
                    raise ValueError(f"unknown policy action {action!r}")
        frontier = next_frontier

    return PolicyStatistics(w=w, x=x, z=z, expected_reward=expected_reward)
