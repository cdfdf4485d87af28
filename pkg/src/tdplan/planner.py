"""Best-first expansion of the reachable state graph with local probabilities."""

from __future__ import annotations

import enum
import heapq
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .errors import PlanningFailure, UnguardableState
from .kb import ActionTransition, Condition, KnowledgeBase, StateVector, matching_transitions
from .probability import (
    INF,
    ActionKind,
    CriticalTimeContext,
    OffspringContribution,
    critical_time,
    epsilon_time,
    merge_contribution,
    offspring_probabilities,
)

logger = logging.getLogger(__name__)


class Status(str, enum.Enum):
    UNEXPANDED = "unexpanded"
    EXPANDED = "expanded"
    REMOVED = "removed"


class StateClass(str, enum.Enum):
    UNKNOWN = "unknown"
    GOAL = "goal"
    GOAL_REACHING = "goal_reaching"
    DEADEND = "deadend"
    FAILURE = "failure"


class Order(str, enum.Enum):
    PROBABILISTIC = "probabilistic"
    DEPTH_FIRST = "depth_first"


@dataclass
class PlannerConfig:
    epsilon: float = 0.01
    initial_p1: float = 0.0
    max_expansions: int = 100_000
    goal_weight: float = 1.0
    ttf_penalty: float = 0.5
    order: Order = Order.PROBABILISTIC
    seed_order: Optional[int] = None  # shuffles offspring push order in depth-first mode

    def __post_init__(self):
        self.order = Order(self.order)
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 <= self.initial_p1 < 1.0:
            raise ValueError(f"initial P1 must lie in [0, 1), got {self.initial_p1}")
        if self.max_expansions < 1:
            raise ValueError("max_expansions must be positive")


@dataclass
class PlannedState:
    vector: StateVector
    prob: float
    status: Status = Status.UNEXPANDED
    state_class: StateClass = StateClass.UNKNOWN
    chosen_action: Optional[ActionTransition] = None
    action_kind: ActionKind = ActionKind.NONE
    critical_time: Optional[float] = None
    discarded_mass: float = 0.0
    expansion_index: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "state": self.vector.to_dict(),
            "label": self.vector.label(),
            "prob": self.prob,
            "status": self.status.value,
            "class": self.state_class.value,
            "action": self.chosen_action.name if self.chosen_action else None,
            "action_kind": self.action_kind.value,
            "critical_time": None if self.critical_time in (None, INF) else self.critical_time,
            "discarded_mass": self.discarded_mass,
            "expansion_index": self.expansion_index,
        }


@dataclass(frozen=True)
class Edge:
    source: StateVector
    name: str
    kind: str  # "action" | "temporal"
    target: StateVector
    fraction: float
    mass: float

    def to_dict(self) -> dict:
        return {
            "from": self.source.label(),
            "via": self.name,
            "kind": self.kind,
            "to": self.target.label(),
            "fraction": self.fraction,
            "mass": self.mass,
        }


class Frontier:
    """Max-probability queue with increase-key via lazy invalidation.

    Ties go to the lexicographically smaller state vector.
    """

    def __init__(self):
        self._heap: list = []
        self._live: dict[StateVector, list] = {}

    def push(self, vector: StateVector, prob: float) -> None:
        old = self._live.pop(vector, None)
        if old is not None:
            old[2] = False
        entry = [-prob, vector, True]
        self._live[vector] = entry
        heapq.heappush(self._heap, entry)

    update = push

    def pop(self) -> StateVector:
        while self._heap:
            _, vector, alive = heapq.heappop(self._heap)
            if alive:
                del self._live[vector]
                return vector
        raise IndexError("pop from empty frontier")

    def discard(self, vector: StateVector) -> None:
        entry = self._live.pop(vector, None)
        if entry is not None:
            entry[2] = False

    def priorities(self) -> dict[StateVector, float]:
        return {v: -e[0] for v, e in self._live.items()}

    def __contains__(self, vector) -> bool:
        return vector in self._live

    def __len__(self) -> int:
        return len(self._live)


class StackFrontier:
    """Insertion-order stack; reproduces the probability-blind depth-first planner."""

    def __init__(self):
        self._stack: list[StateVector] = []
        self._live: set[StateVector] = set()

    def push(self, vector: StateVector, prob: float) -> None:
        if vector not in self._live:
            self._live.add(vector)
            self._stack.append(vector)

    def update(self, vector: StateVector, prob: float) -> None:
        pass

    def pop(self) -> StateVector:
        while self._stack:
            vector = self._stack.pop()
            if vector in self._live:
                self._live.discard(vector)
                return vector
        raise IndexError("pop from empty frontier")

    def discard(self, vector: StateVector) -> None:
        self._live.discard(vector)

    def priorities(self) -> dict[StateVector, float]:
        return {v: math.nan for v in self._live}

    def __contains__(self, vector) -> bool:
        return vector in self._live

    def __len__(self) -> int:
        return len(self._live)


@dataclass
class PlanGraph:
    kb_name: str
    goal: Condition
    states: dict[StateVector, PlannedState] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)
    initial: tuple[StateVector, ...] = ()
    frontier: object = field(default_factory=Frontier)
    p1: float = 0.0
    p2: Optional[float] = None
    epsilon: float = 0.01
    order: Order = Order.PROBABILISTIC
    goal_path: Optional[list[StateVector]] = None
    goal_path_prob: Optional[float] = None
    first_goal: Optional[StateVector] = None
    expansions: int = 0
    discarded_total: float = 0.0
    planned_actions: dict[str, ActionTransition] = field(default_factory=dict)

    def edges_from(self, vector: StateVector) -> list[Edge]:
        return [e for e in self.edges if e.source == vector]

    def live(self, vector: StateVector) -> bool:
        node = self.states.get(vector)
        return node is not None and node.status is not Status.REMOVED

    def counts(self) -> dict:
        by_class: dict[str, int] = {}
        for node in self.states.values():
            key = "removed" if node.status is Status.REMOVED else node.state_class.value
            by_class[key] = by_class.get(key, 0) + 1
        return dict(sorted(by_class.items()))

    def to_dict(self) -> dict:
        return {
            "kb": self.kb_name,
            "order": self.order.value,
            "epsilon": self.epsilon,
            "p1": self.p1,
            "p2": self.p2,
            "expansions": self.expansions,
            "discarded_total": self.discarded_total,
            "goal_path": [v.label() for v in self.goal_path] if self.goal_path else None,
            "goal_path_prob": self.goal_path_prob,
            "counts": self.counts(),
            "states": [self.states[v].to_dict() for v in sorted(self.states)],
            "edges": [
                e.to_dict()
                for e in sorted(self.edges, key=lambda e: (e.source, e.kind, e.name, e.target))
            ],
        }


@dataclass
class ExpansionRecord:
    parent: StateVector
    action: Optional[ActionTransition]
    action_kind: ActionKind
    critical_time: float
    contributions: list[OffspringContribution]
    discarded: float


def _score(vector, action, kb, goal, cfg) -> float:
    result = vector.apply(action.post)
    gained = 0
    if goal is not None:
        for f, v in goal.clauses:
            if result.mapping[f] == v and vector.mapping[f] != v:
                gained += 1
    tset = kb.transition_set_for(result)
    risky = 1 if tset is not None and tset.ttfs else 0
    return cfg.goal_weight * gained - cfg.ttf_penalty * risky


def select_action(
    state: PlannedState,
    kb: KnowledgeBase,
    goal: Optional[Condition],
    cfg: PlannerConfig,
) -> tuple[Optional[ActionTransition], ActionKind]:
    """Choose the action a state will run, if any.

    A state exposed to a temporal transition to failure must get an action
    whose delay beats the earliest epsilon-time of those transitions; the best
    scoring one is returned as preemptive. Otherwise the best action with a
    positive score is non-preemptive. Score: goal clauses newly satisfied
    minus a penalty when the successor faces a failure transition; ties go to
    the alphabetically first name. Pass ``goal=None`` to disable goal scoring.
    """
    vector = state.vector
    tset, actions = matching_transitions(vector, kb)
    candidates = [a for a in actions if vector.apply(a.post) != vector]
    ttfs = tset.ttfs if tset is not None else ()
    if ttfs:
        deadline = min(epsilon_time(m.curve, cfg.epsilon) for m in ttfs)
        feasible = [a for a in candidates if a.t_delay < deadline]
        if not feasible:
            raise UnguardableState(
                vector, f"no applicable action has t_delay < {deadline:.6g}s (TTF epsilon time)"
            )
        best = min(feasible, key=lambda a: (-_score(vector, a, kb, goal, cfg), a.name))
        return best, ActionKind.PREEMPTIVE
    scored = [(_score(vector, a, kb, goal, cfg), a) for a in candidates]
    scored = [(s, a) for s, a in scored if s > 0]
    if not scored:
        return None, ActionKind.NONE
    _, best = min(scored, key=lambda sa: (-sa[0], sa[1].name))
    return best, ActionKind.NONPREEMPTIVE


def _context(graph: PlanGraph, action: ActionTransition) -> CriticalTimeContext:
    planned = dict(graph.planned_actions)
    planned.setdefault(action.name, action)
    return CriticalTimeContext(
        test_time=math.fsum(a.test_wcet for a in planned.values()),
        n_actions=len(planned),
        action_time=math.fsum(a.action_wcet for a in planned.values()),
        t_delay=action.t_delay,
    )


def new_graph(kb: KnowledgeBase, cfg: PlannerConfig) -> PlanGraph:
    """Seed a graph with the initial states under a uniform prior."""
    frontier = Frontier() if cfg.order is Order.PROBABILISTIC else StackFrontier()
    graph = PlanGraph(
        kb_name=kb.name,
        goal=kb.goal,
        frontier=frontier,
        p1=cfg.initial_p1,
        epsilon=cfg.epsilon,
        order=cfg.order,
        initial=tuple(sorted(kb.initial_states)),
    )
    prior = 1.0 / len(kb.initial_states)
    for vector in graph.initial:
        node = PlannedState(vector, prior)
        graph.states[vector] = node
        if kb.goal.matches(vector):
            node.state_class = StateClass.GOAL
            if graph.first_goal is None:
                graph.first_goal = vector
        else:
            frontier.push(vector, prior)
    return graph


def _merge_offspring(graph: PlanGraph, kb: KnowledgeBase, c: OffspringContribution) -> float:
    """Fold one contribution into its target; return the mass discarded."""
    target = c.target
    node = graph.states.get(target)
    if node is None:
        node = PlannedState(target, merge_contribution(None, False, c.mass))
        graph.states[target] = node
        if target.failed:
            node.state_class = StateClass.FAILURE
            return 0.0
        if kb.goal.matches(target):
            node.state_class = StateClass.GOAL
        if node.prob < graph.p1:
            node.status = Status.REMOVED
        elif node.state_class is StateClass.GOAL:
            if graph.first_goal is None:
                graph.first_goal = target
        else:
            graph.frontier.push(target, node.prob)
        return 0.0
    if node.status is Status.EXPANDED:
        node.discarded_mass += c.mass
        graph.discarded_total += c.mass
        return c.mass
    node.prob = merge_contribution(node.prob, False, c.mass)
    if node.state_class is StateClass.FAILURE:
        return 0.0
    if node.status is Status.REMOVED:
        if node.prob >= graph.p1:
            node.status = Status.UNEXPANDED
            if node.state_class is StateClass.GOAL:
                if graph.first_goal is None:
                    graph.first_goal = target
            else:
                graph.frontier.push(target, node.prob)
    elif node.state_class is not StateClass.GOAL:
        graph.frontier.update(target, node.prob)
    return 0.0


def expand_one(
    graph: PlanGraph, kb: KnowledgeBase, cfg: PlannerConfig, rng: Optional[random.Random] = None
) -> ExpansionRecord:
    """Expand the next frontier state and merge its offspring into the graph."""
    if not len(graph.frontier):
        raise IndexError("expand_one called with an empty frontier")
    vector = graph.frontier.pop()
    node = graph.states[vector]
    p_init = node.prob

    goal = None if graph.first_goal is not None else kb.goal
    action, kind = select_action(node, kb, goal, cfg)
    tset = kb.transition_set_for(vector)
    temporals = [m for m in (tset.members if tset else ()) if m.curve.asymptote > 0]

    if kind is ActionKind.PREEMPTIVE:
        t = critical_time(kind, ttf_deadline=min(
            epsilon_time(m.curve, cfg.epsilon) for m in tset.ttfs))
    elif kind is ActionKind.NONPREEMPTIVE:
        t = critical_time(kind, ctx=_context(graph, action))
    else:
        t = critical_time(kind)

    contributions = offspring_probabilities(p_init, temporals, action, kind, t, parent=vector)

    node.status = Status.EXPANDED
    node.chosen_action = action
    node.action_kind = kind
    node.critical_time = t
    node.expansion_index = graph.expansions
    graph.expansions += 1
    if action is not None:
        graph.planned_actions.setdefault(action.name, action)

    order = list(contributions)
    if rng is not None:
        rng.shuffle(order)
    discarded = 0.0
    for c in order:
        graph.edges.append(Edge(vector, c.via, c.kind, c.target, c.fraction, c.mass))
        discarded += _merge_offspring(graph, kb, c)
    return ExpansionRecord(vector, action, kind, t, contributions, discarded)


def classify_states(graph: PlanGraph) -> PlanGraph:
    """Label live states goal, goal-reaching or deadend from graph connectivity."""
    preds: dict[StateVector, list[StateVector]] = {}
    for e in graph.edges:
        preds.setdefault(e.target, []).append(e.source)

    def usable(v):
        node = graph.states[v]
        return node.status is not Status.REMOVED and node.state_class is not StateClass.FAILURE

    reaching = set()
    queue = deque(v for v, n in graph.states.items() if n.state_class is StateClass.GOAL and usable(v))
    reaching.update(queue)
    while queue:
        v = queue.popleft()
        for u in preds.get(v, ()):
            if u not in reaching and usable(u):
                reaching.add(u)
                queue.append(u)

    for v, node in graph.states.items():
        if node.state_class in (StateClass.GOAL, StateClass.FAILURE):
            continue
        if node.status is Status.REMOVED:
            node.state_class = StateClass.UNKNOWN
        elif v in reaching:
            node.state_class = StateClass.GOAL_REACHING
        elif node.status is Status.EXPANDED:
            node.state_class = StateClass.DEADEND
        else:
            node.state_class = StateClass.UNKNOWN
    return graph


def extract_goal_path(graph: PlanGraph, target: StateVector) -> tuple[Optional[list[StateVector]], float]:
    """Most probable path from an initial state to ``target``.

    Path probability is the initial prior times the product of the edge
    fractions; only live, non-failure states are traversed.
    """
    def usable(v):
        node = graph.states.get(v)
        return (
            node is not None
            and node.status is not Status.REMOVED
            and node.state_class is not StateClass.FAILURE
        )

    out: dict[StateVector, list[Edge]] = {}
    for e in graph.edges:
        if e.fraction > 0 and usable(e.source) and usable(e.target) and e.source != e.target:
            out.setdefault(e.source, []).append(e)

    prior = 1.0 / len(graph.initial)
    dist: dict[StateVector, float] = {}
    back: dict[StateVector, Optional[Edge]] = {}
    heap = []
    for v in graph.initial:
        if usable(v):
            dist[v] = -math.log(prior)
            back[v] = None
            heap.append((dist[v], v))
    heapq.heapify(heap)
    done = set()
    while heap:
        d, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        if v == target:
            break
        for e in out.get(v, ()):
            nd = d - math.log(e.fraction)
            if nd < dist.get(e.target, INF):
                dist[e.target] = nd
                back[e.target] = e
                heapq.heappush(heap, (nd, e.target))
    if target not in done:
        return None, 0.0
    path = [target]
    prob = 1.0
    while back[path[-1]] is not None:
        e = back[path[-1]]
        prob *= e.fraction
        path.append(e.source)
    path.reverse()
    return path, prior * prob


def finalize(graph: PlanGraph) -> PlanGraph:
    classify_states(graph)
    if graph.first_goal is not None and graph.live(graph.first_goal):
        path, prob = extract_goal_path(graph, graph.first_goal)
    else:
        path, prob = None, 0.0
    graph.goal_path = path
    graph.goal_path_prob = prob if path else None
    graph.p2 = min(graph.states[v].prob for v in path) if path else None
    return graph


def plan(kb: KnowledgeBase, cfg: Optional[PlannerConfig] = None) -> PlanGraph:
    """Expand every state reachable above P1 and pick the goal path.

    Raises:
        PlanningFailure: no goal state above P1, a state that cannot be
            guarded, or the expansion budget ran out.
    """
    cfg = cfg or PlannerConfig()
    graph = new_graph(kb, cfg)
    rng = None
    if cfg.order is Order.DEPTH_FIRST and cfg.seed_order is not None:
        rng = random.Random(cfg.seed_order)
    while len(graph.frontier):
        if graph.expansions >= cfg.max_expansions:
            raise PlanningFailure(
                f"expansion budget of {cfg.max_expansions} exhausted with "
                f"{len(graph.frontier)} states pending"
            )
        try:
            expand_one(graph, kb, cfg, rng)
        except UnguardableState as exc:
            raise PlanningFailure(str(exc), witness=exc.vector) from exc
    finalize(graph)
    if graph.goal_path is None:
        raise PlanningFailure(f"no goal state {kb.goal} reachable above P1={graph.p1:g}")
    return graph


def deadend_causes(graph: PlanGraph, kb: KnowledgeBase, limit: int = 20_000) -> dict[str, int]:
    """Split deadends into avoidable ('by_choice') and unavoidable ('by_necessity').

    A deadend is by choice when some sequence of actions and temporal
    transitions in the full model could still reach the goal; the search is
    abandoned after ``limit`` states and the deadend counted as undetermined.
    """
    counts = {"by_choice": 0, "by_necessity": 0, "undetermined": 0}
    for v, node in sorted(graph.states.items()):
        if node.state_class is not StateClass.DEADEND:
            continue
        seen = {v}
        queue = deque([v])
        verdict = "by_necessity"
        while queue:
            if len(seen) > limit:
                verdict = "undetermined"
                break
            u = queue.popleft()
            if kb.goal.matches(u):
                verdict = "by_choice"
                break
            tset, actions = matching_transitions(u, kb)
            nexts = [u.apply(a.post) for a in actions]
            if tset is not None:
                nexts += [u.apply(m.post) for m in tset.members
                          if not m.is_failure and m.curve.asymptote > 0]
            for w in nexts:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        counts[verdict] += 1
    return counts
