import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

import tdplan
from conftest import FIXTURES
from tdplan.errors import SchedulingFailure, UnguardableState
from tdplan.kb import ActionTransition, Condition, load_knowledge_base
from tdplan.planner import PlanGraph, PlannedState, PlannerConfig, Status, plan
from tdplan.probability import ActionKind
from tdplan.scheduler import (
    BEST_EFFORT,
    GUARANTEED,
    Tap,
    audit,
    derive_taps,
    plan_and_schedule,
    schedulability,
)


def tap(wcet, period, kind=GUARANTEED, name="t"):
    action = ActionTransition(name, Condition(), Condition.of(X="1"), 0.0, wcet / 2, wcet / 2)
    deadline = period + wcet if kind == GUARANTEED else None
    return Tap(name, Condition(), action, kind, deadline, period if kind == GUARANTEED else None)


def m1_variant(**action_fields):
    doc = json.loads(tdplan.fixture_path("micro_m1.json").read_text())
    doc["actions"][0].update(action_fields)
    return load_knowledge_base(doc)


def test_m1_tap():
    kb = tdplan.load_fixture("micro_m1.json")
    (t,) = derive_taps(plan(kb), kb, 0.01)
    assert t.kind == GUARANTEED and t.name == "guard:climb"
    assert t.deadline == pytest.approx(4.1)
    assert t.period == pytest.approx(3.95)
    sched = schedulability([t])
    assert sched.utilization == pytest.approx(0.15 / 3.95)
    assert sched.feasible


def test_min_merge_across_guarded_states():
    ramp = lambda start, top: {"kind": "piecewise", "knots": [[start, 0], [start + 1, top]],
                               "asymptote": top}
    doc = {
        "features": [{"name": "ALT", "values": ["low", "ok"]}, {"name": "ZONE", "values": ["a", "b"]}],
        "initial_states": [{"ALT": "low", "ZONE": "a"}, {"ALT": "low", "ZONE": "b"}],
        "goal": {"ALT": "ok"},
        "actions": [{"name": "climb", "pre": {"ALT": "low"}, "post": {"ALT": "ok"},
                     "t_delay": 1.0, "test_wcet": 0.05, "action_wcet": 0.1}],
        "temporal_sets": [
            {"pre": {"ALT": "low", "ZONE": "a"},
             "members": [{"name": "crash", "post": {"ALT": "low"}, "is_failure": True,
                          "curve": {"kind": "piecewise", "knots": [[5, 0], [10, 0.5]], "asymptote": 0.5}}]},
            {"pre": {"ALT": "low", "ZONE": "b"},
             "members": [{"name": "crash", "post": {"ALT": "low"}, "is_failure": True,
                          "curve": ramp(3.9, 0.1)}]},
        ],
    }
    kb = load_knowledge_base(doc)
    (t,) = derive_taps(plan(kb), kb, 0.01)
    assert t.deadline == pytest.approx(3.0)
    assert len(t.guarded_states) == 2
    assert t.test == Condition.of(ALT="low")


def test_instant_failure_is_unguardable():
    kb = m1_variant()
    v = kb.initial_states[0]
    doc = json.loads(tdplan.dump_knowledge_base(kb))
    doc["temporal_sets"][0]["members"][0]["curve"] = {"kind": "piecewise", "knots": [[0, 0.5]],
                                                      "asymptote": 0.5}
    kb = load_knowledge_base(doc)
    node = PlannedState(v, 1.0, Status.EXPANDED, chosen_action=kb.actions[0],
                        action_kind=ActionKind.PREEMPTIVE)
    graph = PlanGraph(kb.name, kb.goal, states={v: node}, initial=(v,))
    with pytest.raises(UnguardableState):
        derive_taps(graph, kb, 0.01)


def test_best_effort_taps(flight_kb):
    taps = derive_taps(plan(flight_kb), flight_kb, 0.01)
    kinds = {t.name: t.kind for t in taps}
    assert kinds["best_effort:turn-left-to-W"] == BEST_EFFORT
    assert kinds["guard:climb"] == GUARANTEED
    assert all(t.deadline is None and t.period is None for t in taps if t.kind == BEST_EFFORT)


def test_schedulability_examples():
    s = schedulability([tap(1, 4, name="a"), tap(2, 8, name="b")])
    assert s.utilization == pytest.approx(0.5) and s.feasible
    s = schedulability([tap(2, 1.9)])
    assert s.utilization == pytest.approx(2 / 1.9) and not s.feasible
    s = schedulability([tap(5, None, kind=BEST_EFFORT)])
    assert s.utilization == 0 and s.feasible
    assert schedulability([]).feasible


def test_nonpositive_period_rejected():
    with pytest.raises(ValueError):
        schedulability([tap(1, 0.0)])


@given(st.lists(st.tuples(st.floats(1e-3, 10), st.floats(1e-3, 100)), max_size=12),
       st.lists(st.floats(1e-3, 10), max_size=4))
def test_feasible_iff_utilization_at_most_one(guaranteed, best_effort):
    taps = [tap(w, p, name=f"g{i}") for i, (w, p) in enumerate(guaranteed)]
    taps += [tap(w, None, kind=BEST_EFFORT, name=f"b{i}") for i, w in enumerate(best_effort)]
    s = schedulability(taps)
    assert s.utilization == math.fsum(w / p for w, p in guaranteed)
    assert s.feasible == (s.utilization <= 1.0)


def test_m1_needs_no_escalation(m1_kb):
    g, s = plan_and_schedule(m1_kb)
    assert s.feasible and s.escalations == [] and s.passes == [s.utilization]


def test_tornado_escalates_once(tornado_kb):
    g, s = plan_and_schedule(tornado_kb)
    assert s.passes[0] > 1.0
    assert len(s.escalations) == 1
    assert s.feasible and s.passes[-1] <= 1.0
    removed = [v for v, n in g.states.items() if n.status is Status.REMOVED]
    assert removed and all(v["WX"] == "tornado" for v in removed)
    assert all(g.live(v) for v in g.goal_path)


def test_goal_path_overload_fails_loudly():
    kb = m1_variant(test_wcet=3.0, action_wcet=1.0)
    with pytest.raises(SchedulingFailure) as info:
        plan_and_schedule(kb)
    assert info.value.details()["utilization"] > 1


@pytest.mark.parametrize("name", FIXTURES)
def test_audit_and_escalation_invariants(name):
    kb = tdplan.load_fixture(name)
    g, s = plan_and_schedule(kb)
    assert audit(s, kb, 0.01, tol=1e-9) == []
    for t in s.guaranteed:
        assert t.deadline > t.wcet and t.period == pytest.approx(t.deadline - t.wcet)
    p1s = [e.p1 for e in s.escalations]
    assert p1s == sorted(set(p1s))
    assert all(e.removed >= 1 for e in s.escalations)
    assert s.feasible == (s.utilization <= 1.0)
