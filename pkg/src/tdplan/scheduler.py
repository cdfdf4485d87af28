"""Test-action pairs, deadline-driven schedulability and P1 escalation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import SchedulingFailure, UnguardableState
from .kb import ActionTransition, Condition, KnowledgeBase, StateVector
from .planner import PlanGraph, PlannerConfig, Status, StateClass, classify_states, plan
from .probability import TOL, ActionKind, epsilon_time

logger = logging.getLogger(__name__)

GUARANTEED = "guaranteed"
BEST_EFFORT = "best_effort"


@dataclass(frozen=True)
class Tap:
    name: str
    test: Condition
    action: ActionTransition
    kind: str
    deadline: Optional[float] = None
    period: Optional[float] = None
    guarded_states: frozenset = frozenset()

    @property
    def test_wcet(self) -> float:
        return self.action.test_wcet

    @property
    def action_wcet(self) -> float:
        return self.action.action_wcet

    @property
    def wcet(self) -> float:
        return self.action.test_wcet + self.action.action_wcet

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "action": self.action.name,
            "test": self.test.to_dict(),
            "test_wcet": self.test_wcet,
            "action_wcet": self.action_wcet,
            "t_delay": self.action.t_delay,
            "deadline": self.deadline,
            "period": self.period,
            "guarded_states": sorted(v.label() for v in self.guarded_states),
        }


@dataclass(frozen=True)
class Escalation:
    p1: float
    removed: int
    utilization: float  # of the pass that triggered the escalation

    def to_dict(self) -> dict:
        return {"p1": self.p1, "removed": self.removed, "utilization": self.utilization}


@dataclass
class TapSchedule:
    taps: list[Tap]
    utilization: float
    feasible: bool
    escalations: list[Escalation] = field(default_factory=list)
    passes: list[float] = field(default_factory=list)  # utilization of every pass

    @property
    def guaranteed(self) -> list[Tap]:
        return [t for t in self.taps if t.kind == GUARANTEED]

    @property
    def best_effort(self) -> list[Tap]:
        return [t for t in self.taps if t.kind == BEST_EFFORT]

    def to_dict(self) -> dict:
        return {
            "utilization": self.utilization,
            "feasible": self.feasible,
            "taps": [t.to_dict() for t in self.taps],
            "escalations": [e.to_dict() for e in self.escalations],
            "passes": self.passes,
        }


def _common_clauses(vectors) -> Condition:
    vectors = list(vectors)
    shared = set(vectors[0].items)
    for v in vectors[1:]:
        shared &= set(v.items)
    return Condition(tuple(shared))


def ttf_epsilon_time(vector: StateVector, kb: KnowledgeBase, epsilon: float) -> float:
    """Earliest epsilon-time over the state's failure transitions (inf if none)."""
    tset = kb.transition_set_for(vector)
    if tset is None or not tset.ttfs:
        return math.inf
    return min(epsilon_time(m.curve, epsilon) for m in tset.ttfs)


def derive_taps(graph: PlanGraph, kb: KnowledgeBase, epsilon: float) -> list[Tap]:
    """One guaranteed tap per preemptive action, one best-effort tap per other action.

    A guaranteed tap's deadline is the smallest ``epsilon_time - t_delay`` over
    the states it guards and its period is ``deadline - wcet``.

    Raises:
        UnguardableState: a deadline leaves no room for the tap's own wcet.
    """
    guarded: dict[tuple[str, str], list[StateVector]] = {}
    deadlines: dict[str, tuple[float, StateVector]] = {}
    actions: dict[str, ActionTransition] = {}
    for vector in sorted(graph.states):
        node = graph.states[vector]
        if node.status is not Status.EXPANDED or node.chosen_action is None:
            continue
        action = node.chosen_action
        actions[action.name] = action
        if node.action_kind is ActionKind.PREEMPTIVE:
            guarded.setdefault((GUARANTEED, action.name), []).append(vector)
            d = ttf_epsilon_time(vector, kb, epsilon) - action.t_delay
            if action.name not in deadlines or d < deadlines[action.name][0]:
                deadlines[action.name] = (d, vector)
        else:
            guarded.setdefault((BEST_EFFORT, action.name), []).append(vector)

    taps = []
    for (kind, name), vectors in sorted(guarded.items()):
        action = actions[name]
        if kind == GUARANTEED:
            deadline, worst = deadlines[name]
            if deadline <= action.wcet:
                raise UnguardableState(
                    worst,
                    f"deadline {deadline:.6g}s for {name!r} does not exceed its wcet {action.wcet:.6g}s",
                )
            period = deadline - action.wcet
            taps.append(Tap(f"guard:{name}", _common_clauses(vectors), action, kind,
                            deadline, period, frozenset(vectors)))
        else:
            taps.append(Tap(f"best_effort:{name}", _common_clauses(vectors), action, kind,
                            guarded_states=frozenset(vectors)))
    return taps


def utilization(taps) -> float:
    return math.fsum(t.wcet / t.period for t in taps if t.kind == GUARANTEED)


def schedulability(taps: list[Tap]) -> TapSchedule:
    """Deadline-driven (EDF) feasibility: utilization of guaranteed taps <= 1."""
    for t in taps:
        if t.kind == GUARANTEED and not (t.period and t.period > 0):
            raise ValueError(f"tap {t.name} has non-positive period {t.period}")
    u = utilization(taps)
    return TapSchedule(list(taps), u, u <= 1.0)


def audit(schedule: TapSchedule, kb: KnowledgeBase, epsilon: float, tol: float = TOL) -> list[str]:
    """Guarded states whose worst-case action landing misses the TTF epsilon time."""
    problems = []
    for tap in schedule.guaranteed:
        landing = tap.period + tap.wcet + tap.action.t_delay
        for v in tap.guarded_states:
            limit = ttf_epsilon_time(v, kb, epsilon)
            if landing > limit + tol:
                problems.append(f"{tap.name}: lands at {landing:.9g}s > {limit:.9g}s in {v}")
    return problems


def _escalation_target(graph: PlanGraph) -> Optional[float]:
    probs = [
        n.prob
        for n in graph.states.values()
        if n.status is not Status.REMOVED
        and n.state_class is not StateClass.FAILURE
        and n.prob > graph.p1
    ]
    return min(probs) if probs else None


def prune(graph: PlanGraph, p1: float) -> int:
    """Raise P1 in place: remove live states below it and everything cut off by them.

    Returns the number of newly removed states.
    """
    graph.p1 = p1
    removed = 0
    for node in graph.states.values():
        if (node.status is not Status.REMOVED and node.state_class is not StateClass.FAILURE
                and node.prob < p1):
            node.status = Status.REMOVED
            removed += 1

    succ: dict[StateVector, list[StateVector]] = {}
    for e in graph.edges:
        succ.setdefault(e.source, []).append(e.target)
    seen = set()
    stack = [v for v in graph.initial if graph.live(v)]
    seen.update(stack)
    while stack:
        v = stack.pop()
        for w in succ.get(v, ()):
            if w not in seen and graph.live(w):
                seen.add(w)
                stack.append(w)
    for v, node in graph.states.items():
        if node.status is not Status.REMOVED and v not in seen:
            node.status = Status.REMOVED
            removed += 1
    classify_states(graph)
    return removed


def plan_and_schedule(kb: KnowledgeBase, cfg: Optional[PlannerConfig] = None):
    """Plan, then raise P1 until the guaranteed taps fit the processor.

    Each escalation lifts P1 just past the least probable live state, so at
    least one state is removed per round and the loop terminates. States on
    the goal path are never removed: if the next escalation would do so the
    run fails instead.

    Returns:
        (PlanGraph, TapSchedule)

    Raises:
        PlanningFailure: propagated from :func:`plan`.
        SchedulingFailure: no escalation can make the plan feasible.
    """
    cfg = cfg or PlannerConfig()
    graph = plan(kb, cfg)
    escalations: list[Escalation] = []
    passes: list[float] = []
    while True:
        try:
            taps = derive_taps(graph, kb, cfg.epsilon)
            sched = schedulability(taps)
        except UnguardableState as exc:
            logger.info("unguardable tap: %s", exc)
            taps, sched = [], TapSchedule([], math.inf, False)
        passes.append(sched.utilization)
        if sched.feasible:
            sched.escalations = escalations
            sched.passes = passes
            return graph, sched

        q = _escalation_target(graph)
        if q is None:
            raise SchedulingFailure(
                f"infeasible (utilization {sched.utilization:.4g}) with nothing left to remove",
                sched.utilization, escalations)
        new_p1 = math.nextafter(q, math.inf)
        on_path = [v for v in graph.goal_path or () if graph.states[v].prob < new_p1]
        if on_path:
            raise SchedulingFailure(
                f"infeasible (utilization {sched.utilization:.4g}); raising P1 to {new_p1:.6g} "
                f"would remove goal-path state {on_path[0]}",
                sched.utilization, escalations)
        removed = prune(graph, new_p1)
        logger.info("P1 -> %.6g removed %d state(s)", new_p1, removed)
        escalations.append(Escalation(new_p1, removed, sched.utilization))
