"""Domain knowledge base: features, states, transitions and their validation."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Union

from .errors import AmbiguousTransitionSets, KBParseError, KBReferenceError, KBValidationError
from .probability import TOL, TemporalCurve, curve_from_dict

ENUMERATION_LIMIT = 10**6


@dataclass(frozen=True)
class Feature:
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class Condition:
    """Conjunction of ``feature == value`` clauses, stored sorted by feature."""

    clauses: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(sorted(tuple(c) for c in self.clauses)))

    @classmethod
    def of(cls, mapping: Optional[Mapping[str, str]] = None, **kw) -> "Condition":
        items = dict(mapping or {})
        items.update(kw)
        return cls(tuple(items.items()))

    def __len__(self):
        return len(self.clauses)

    def __iter__(self):
        return iter(self.clauses)

    def features(self) -> set[str]:
        return {f for f, _ in self.clauses}

    def get(self, feature: str) -> Optional[str]:
        for f, v in self.clauses:
            if f == feature:
                return v
        return None

    def matches(self, state: "StateVector") -> bool:
        values = state.mapping
        for f, v in self.clauses:
            if values[f] != v:
                return False
        return True

    def compatible(self, other: "Condition") -> bool:
        """True iff some state can satisfy both conditions."""
        mine = dict(self.clauses)
        return all(mine.get(f, v) == v for f, v in other.clauses)

    def to_dict(self) -> dict:
        return dict(self.clauses)

    def __str__(self):
        return "{" + ", ".join(f"{f}={v}" for f, v in self.clauses) + "}"


@dataclass(frozen=True, order=True)
class StateVector:
    """Total assignment over the knowledge base's features.

    ``items`` follows the feature declaration order, so ordering two vectors
    compares them lexicographically by value. ``failed`` marks the sink
    reached through a temporal transition to failure.
    """

    items: tuple[tuple[str, str], ...]
    failed: bool = False
    mapping: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(tuple(i) for i in self.items))
        object.__setattr__(self, "mapping", dict(self.items))

    def __getitem__(self, feature: str) -> str:
        return self.mapping[feature]

    def apply(self, post: Condition, failed: bool = False) -> "StateVector":
        changes = dict(post.clauses)
        return StateVector(
            tuple((f, changes.get(f, v)) for f, v in self.items), failed or self.failed
        )

    def to_dict(self) -> dict:
        out = dict(self.items)
        if self.failed:
            out["__failed__"] = True
        return out

    def label(self) -> str:
        body = ",".join(f"{f}={v}" for f, v in self.items)
        return f"FAIL[{body}]" if self.failed else body

    def __str__(self):
        return self.label()

    def __getstate__(self):
        return (self.items, self.failed)

    def __setstate__(self, state):
        object.__setattr__(self, "items", state[0])
        object.__setattr__(self, "failed", state[1])
        object.__setattr__(self, "mapping", dict(state[0]))


@dataclass(frozen=True)
class ActionTransition:
    name: str
    pre: Condition
    post: Condition
    t_delay: float
    test_wcet: float
    action_wcet: float

    @property
    def wcet(self) -> float:
        return self.test_wcet + self.action_wcet

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pre": self.pre.to_dict(),
            "post": self.post.to_dict(),
            "t_delay": self.t_delay,
            "test_wcet": self.test_wcet,
            "action_wcet": self.action_wcet,
        }


@dataclass(frozen=True)
class TemporalTransition:
    name: str
    post: Condition
    curve: TemporalCurve
    is_failure: bool = False

    def to_dict(self) -> dict:
        out = {"name": self.name, "post": self.post.to_dict(), "curve": self.curve.to_dict()}
        if self.is_failure:
            out["is_failure"] = True
        return out


@dataclass(frozen=True)
class TransitionSet:
    pre: Condition
    members: tuple[TemporalTransition, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def ttfs(self) -> tuple[TemporalTransition, ...]:
        return tuple(m for m in self.members if m.is_failure)

    def asymptote_sum(self) -> float:
        return math.fsum(m.curve.asymptote for m in self.members)

    def to_dict(self) -> dict:
        return {"pre": self.pre.to_dict(), "members": [m.to_dict() for m in self.members]}


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "message": self.message}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass(frozen=True)
class KnowledgeBase:
    features: tuple[Feature, ...]
    initial_states: tuple[StateVector, ...]
    goal: Condition
    actions: tuple[ActionTransition, ...]
    temporal_sets: tuple[TransitionSet, ...]
    name: str = "kb"

    def __post_init__(self):
        for attr in ("features", "initial_states", "actions", "temporal_sets"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def feature(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def action(self, name: str) -> ActionTransition:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def make_state(self, assignments: Mapping[str, str]) -> StateVector:
        """Build a total StateVector, checking every feature and value."""
        extra = set(assignments) - set(self.feature_names)
        if extra:
            raise KBReferenceError(f"unknown feature(s) {sorted(extra)}")
        items = []
        for f in self.features:
            if f.name not in assignments:
                raise KBReferenceError(f"state does not assign feature {f.name!r}")
            v = assignments[f.name]
            if v not in f.values:
                raise KBReferenceError(f"unknown value {v!r} for feature {f.name!r}")
            items.append((f.name, v))
        return StateVector(tuple(items))

    def domain_size(self) -> int:
        return math.prod(len(f.values) for f in self.features)

    def iter_states(self) -> Iterator[StateVector]:
        names = self.feature_names
        for combo in itertools.product(*(f.values for f in self.features)):
            yield StateVector(tuple(zip(names, combo)))

    def transition_set_for(self, state: StateVector) -> Optional[TransitionSet]:
        found = None
        for ts in self.temporal_sets:
            if ts.pre.matches(state):
                if found is not None:
                    raise AmbiguousTransitionSets(
                        f"state {state} matches transition sets {found.pre} and {ts.pre}"
                    )
                found = ts
        return found

    def applicable_actions(self, state: StateVector) -> list[ActionTransition]:
        return [a for a in self.actions if a.pre.matches(state)]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "features": [{"name": f.name, "values": list(f.values)} for f in self.features],
            "initial_states": [dict(s.items) for s in self.initial_states],
            "goal": self.goal.to_dict(),
            "actions": [a.to_dict() for a in self.actions],
            "temporal_sets": [ts.to_dict() for ts in self.temporal_sets],
        }


def matching_transitions(
    state: StateVector, kb: KnowledgeBase
) -> tuple[Optional[TransitionSet], list[ActionTransition]]:
    """The unique transition set and all actions whose preconditions ``state`` meets."""
    return kb.transition_set_for(state), kb.applicable_actions(state)


# -- parsing -----------------------------------------------------------------

def _condition(doc, where: str, features: dict[str, tuple[str, ...]]) -> Condition:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise KBParseError(f"{where}: condition must be an object, got {type(doc).__name__}")
    for f, v in doc.items():
        if f not in features:
            raise KBReferenceError(f"{where}: unknown feature {f!r}")
        if v not in features[f]:
            raise KBReferenceError(f"{where}: unknown value {v!r} for feature {f!r}")
    return Condition.of(doc)


def _number(doc: dict, key: str, where: str, default=None) -> float:
    if key not in doc:
        if default is not None:
            return default
        raise KBParseError(f"{where}: missing {key!r}")
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise KBParseError(f"{where}: {key!r} must be a number")
    return float(value)


def parse_knowledge_base(doc: Union[str, bytes, dict]) -> KnowledgeBase:
    """Build a KnowledgeBase from a document without running validation."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise KBParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise KBParseError("knowledge base must be a JSON object")
    missing = {"features", "initial_states", "goal", "actions", "temporal_sets"} - set(doc)
    if missing:
        raise KBParseError(f"missing top-level key(s) {sorted(missing)}")

    raw_features = doc["features"]
    if isinstance(raw_features, dict):
        raw_features = [{"name": k, "values": v} for k, v in raw_features.items()]
    if not isinstance(raw_features, list) or not raw_features:
        raise KBParseError("features must be a nonempty list")
    features = []
    for i, fd in enumerate(raw_features):
        if not isinstance(fd, dict) or "name" not in fd or not isinstance(fd.get("values"), list):
            raise KBParseError(f"features[{i}] needs 'name' and a 'values' list")
        features.append(Feature(str(fd["name"]), tuple(str(v) for v in fd["values"])))
    domains = {f.name: f.values for f in features}

    try:
        actions = []
        for i, ad in enumerate(doc["actions"]):
            where = f"actions[{i}]"
            if "name" not in ad:
                raise KBParseError(f"{where}: missing 'name'")
            actions.append(
                ActionTransition(
                    name=str(ad["name"]),
                    pre=_condition(ad.get("pre"), where + ".pre", domains),
                    post=_condition(ad.get("post"), where + ".post", domains),
                    t_delay=_number(ad, "t_delay", where),
                    test_wcet=_number(ad, "test_wcet", where),
                    action_wcet=_number(ad, "action_wcet", where),
                )
            )

        sets = []
        for i, sd in enumerate(doc["temporal_sets"]):
            where = f"temporal_sets[{i}]"
            members = []
            for j, md in enumerate(sd.get("members", [])):
                mwhere = f"{where}.members[{j}]"
                if "name" not in md or "curve" not in md:
                    raise KBParseError(f"{mwhere}: needs 'name' and 'curve'")
                try:
                    curve = curve_from_dict(md["curve"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise KBParseError(f"{mwhere}: bad curve ({exc})") from exc
                members.append(
                    TemporalTransition(
                        name=str(md["name"]),
                        post=_condition(md.get("post"), mwhere + ".post", domains),
                        curve=curve,
                        is_failure=bool(md.get("is_failure", False)),
                    )
                )
            sets.append(TransitionSet(_condition(sd.get("pre"), where + ".pre", domains), members))

        goal = _condition(doc["goal"], "goal", domains)
    except (TypeError, AttributeError) as exc:
        raise KBParseError(f"malformed document: {exc}") from exc

    kb = KnowledgeBase(
        features=features,
        initial_states=(),
        goal=goal,
        actions=actions,
        temporal_sets=sets,
        name=str(doc.get("name", "kb")),
    )
    if not isinstance(doc["initial_states"], list):
        raise KBParseError("initial_states must be a list")
    initial = [kb.make_state(s) for s in doc["initial_states"]]
    return KnowledgeBase(
        features=kb.features,
        initial_states=initial,
        goal=kb.goal,
        actions=kb.actions,
        temporal_sets=kb.temporal_sets,
        name=kb.name,
    )


def load_knowledge_base(doc: Union[str, bytes, dict], validate: bool = True) -> KnowledgeBase:
    kb = parse_knowledge_base(doc)
    if validate:
        violations = validate_knowledge_base(kb)
        if violations:
            raise KBValidationError(violations)
    return kb


def load_knowledge_base_file(path: Union[str, Path], validate: bool = True) -> KnowledgeBase:
    return load_knowledge_base(Path(path).read_text(), validate=validate)


def dump_knowledge_base(kb: KnowledgeBase) -> str:
    return json.dumps(kb.to_dict(), indent=2, sort_keys=False)


# -- validation --------------------------------------------------------------

def _witness(kb: KnowledgeBase, *conds: Condition) -> dict:
    fixed = {}
    for c in conds:
        fixed.update(c.clauses)
    return {f.name: fixed.get(f.name, f.values[0]) for f in kb.features}


def _overlaps_by_enumeration(kb: KnowledgeBase) -> Iterable[tuple[int, int, StateVector]]:
    seen = set()
    for state in kb.iter_states():
        hits = [i for i, ts in enumerate(kb.temporal_sets) if ts.pre.matches(state)]
        for i, j in itertools.combinations(hits, 2):
            if (i, j) not in seen:
                seen.add((i, j))
                yield i, j, state


def _overlaps_pairwise(kb: KnowledgeBase) -> Iterable[tuple[int, int, dict]]:
    for (i, a), (j, b) in itertools.combinations(enumerate(kb.temporal_sets), 2):
        if a.pre.compatible(b.pre):
            yield i, j, _witness(kb, a.pre, b.pre)


def _reference_problems(kb: KnowledgeBase, cond: Condition, where: str) -> list[Violation]:
    domains = {f.name: f.values for f in kb.features}
    out = []
    for f, v in cond.clauses:
        if f not in domains:
            out.append(Violation("reference", f"{where}: unknown feature {f!r}"))
        elif v not in domains[f]:
            out.append(Violation("reference", f"{where}: unknown value {v!r} for {f!r}"))
    return out


def validate_knowledge_base(kb: KnowledgeBase) -> list[Violation]:
    """Every violated knowledge-base invariant; an empty list means valid."""
    out: list[Violation] = []

    if not kb.features:
        out.append(Violation("features", "knowledge base declares no features"))
    names = [f.name for f in kb.features]
    for dup in sorted({n for n in names if names.count(n) > 1}):
        out.append(Violation("features", f"duplicate feature name {dup!r}"))
    for f in kb.features:
        if len(f.values) < 2:
            out.append(Violation("features", f"feature {f.name!r} needs at least two values"))
        if len(set(f.values)) != len(f.values):
            out.append(Violation("features", f"feature {f.name!r} has duplicate values"))

    if not kb.initial_states:
        out.append(Violation("initial_states", "no initial states"))
    if len(set(kb.initial_states)) != len(kb.initial_states):
        out.append(Violation("initial_states", "initial states are not pairwise distinct"))
    for s in kb.initial_states:
        if tuple(f for f, _ in s.items) != tuple(names):
            out.append(Violation("initial_states", f"initial state {s} is not a total assignment"))

    out.extend(_reference_problems(kb, kb.goal, "goal"))

    action_names = [a.name for a in kb.actions]
    for dup in sorted({n for n in action_names if action_names.count(n) > 1}):
        out.append(Violation("actions", f"duplicate action name {dup!r}"))
    for a in kb.actions:
        where = f"action {a.name!r}"
        out.extend(_reference_problems(kb, a.pre, where + " pre"))
        out.extend(_reference_problems(kb, a.post, where + " post"))
        for attr in ("t_delay", "test_wcet", "action_wcet"):
            value = getattr(a, attr)
            if not (math.isfinite(value) and value >= 0):
                out.append(Violation("actions", f"{where}: {attr}={value} must be finite and >= 0"))
        if not a.post:
            out.append(Violation("actions", f"{where}: empty postcondition"))
        elif all(a.pre.get(f) == v for f, v in a.post.clauses):
            out.append(Violation("actions", f"{where}: postcondition changes nothing"))

    for i, ts in enumerate(kb.temporal_sets):
        where = f"transition set #{i} {ts.pre}"
        out.extend(_reference_problems(kb, ts.pre, where + " pre"))
        member_names = [m.name for m in ts.members]
        for dup in sorted({n for n in member_names if member_names.count(n) > 1}):
            out.append(Violation("temporal_sets", f"{where}: duplicate member {dup!r}"))
        for m in ts.members:
            out.extend(_reference_problems(kb, m.post, f"{where} member {m.name!r} post"))
            if not m.post:
                out.append(Violation("temporal_sets", f"{where}: member {m.name!r} has empty post"))
            for p in m.curve.problems():
                out.append(Violation("curve", f"{where}: member {m.name!r}: {p}"))
        total = ts.asymptote_sum()
        if total > 1.0 + TOL:
            out.append(
                Violation(
                    "asymptote_sum",
                    f"{where}: asymptotes sum to {total:.6g} > 1.0",
                )
            )

    if any(v.kind in ("features", "reference") for v in out):
        return out

    if kb.domain_size() <= ENUMERATION_LIMIT:
        for i, j, state in _overlaps_by_enumeration(kb):
            out.append(
                Violation(
                    "overlap",
                    f"transition sets #{i} {kb.temporal_sets[i].pre} and #{j} "
                    f"{kb.temporal_sets[j].pre} both match {state}",
                    dict(state.items),
                )
            )
    else:
        for i, j, witness in _overlaps_pairwise(kb):
            out.append(
                Violation(
                    "overlap",
                    f"transition sets #{i} {kb.temporal_sets[i].pre} and #{j} "
                    f"{kb.temporal_sets[j].pre} overlap",
                    witness,
                )
            )
    return out
