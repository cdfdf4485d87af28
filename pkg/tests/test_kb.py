import copy
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tdplan
from conftest import FIXTURES
from tdplan.errors import AmbiguousTransitionSets, KBParseError, KBReferenceError, KBValidationError
from tdplan.kb import (
    Condition,
    StateVector,
    dump_knowledge_base,
    load_knowledge_base,
    matching_transitions,
    parse_knowledge_base,
    validate_knowledge_base,
)


def m1_doc():
    return json.loads(tdplan.fixture_path("micro_m1.json").read_text())


def kinds(violations):
    return sorted({v.kind for v in violations})


def test_flight_fixture_loads(flight_kb):
    names = set(flight_kb.feature_names)
    assert {"ALT", "LOC", "HEAD", "GEAR", "TRAFFIC"} <= names
    assert "turn-left-to-W" in {a.name for a in flight_kb.actions}
    assert any(m.is_failure for ts in flight_kb.temporal_sets for m in ts.members)


def test_m1_shape(m1_kb):
    assert len(m1_kb.actions) == 1 and len(m1_kb.temporal_sets) == 1
    assert m1_kb.initial_states == (StateVector((("ALT", "low"),)),)


def test_zero_features_rejected():
    doc = m1_doc()
    doc["features"] = []
    with pytest.raises(KBParseError):
        load_knowledge_base(doc)


@pytest.mark.parametrize("text", ["{not json", "[]", '{"features": []}'])
def test_malformed_documents(text):
    with pytest.raises(KBParseError):
        parse_knowledge_base(text)


def test_unknown_references():
    doc = m1_doc()
    doc["goal"] = {"ALT": "sideways"}
    with pytest.raises(KBReferenceError):
        load_knowledge_base(doc)
    doc = m1_doc()
    doc["actions"][0]["post"] = {"SPEED": "fast"}
    with pytest.raises(KBReferenceError):
        load_knowledge_base(doc)


def test_overlap_reported_with_witness():
    doc = m1_doc()
    doc["temporal_sets"].append({"pre": {}, "members": []})
    violations = validate_knowledge_base(parse_knowledge_base(doc))
    overlap = [v for v in violations if v.kind == "overlap"]
    assert len(overlap) == 1
    assert overlap[0].witness == {"ALT": "low"}
    with pytest.raises(KBValidationError):
        load_knowledge_base(doc)


def test_asymptote_sum_violation():
    doc = m1_doc()
    doc["temporal_sets"][0]["members"] = [
        {"name": "a", "post": {"ALT": "ok"}, "curve": {"kind": "piecewise", "knots": [], "asymptote": 0.7}},
        {"name": "b", "post": {"ALT": "ok"}, "curve": {"kind": "piecewise", "knots": [], "asymptote": 0.4}},
    ]
    violations = validate_knowledge_base(parse_knowledge_base(doc))
    assert kinds(violations) == ["asymptote_sum"]


def test_malformed_curve_and_action_reported():
    doc = m1_doc()
    doc["temporal_sets"][0]["members"][0]["curve"]["knots"] = [[5, 0.4], [10, 0.1]]
    doc["actions"][0]["t_delay"] = -1
    doc["actions"].append({"name": "noop", "pre": {"ALT": "ok"}, "post": {"ALT": "ok"},
                           "t_delay": 0, "test_wcet": 0, "action_wcet": 0})
    violations = validate_knowledge_base(parse_knowledge_base(doc))
    assert kinds(violations) == ["actions", "curve"]
    assert len([v for v in violations if v.kind == "actions"]) == 2


def test_pairwise_overlap_path_for_huge_domains():
    features = [{"name": f"F{i}", "values": ["a", "b", "c", "d"]} for i in range(12)]
    doc = {
        "features": features,
        "initial_states": [{f"F{i}": "a" for i in range(12)}],
        "goal": {"F0": "b"},
        "actions": [],
        "temporal_sets": [{"pre": {"F0": "a"}, "members": []},
                          {"pre": {"F1": "a"}, "members": []},
                          {"pre": {"F0": "b", "F1": "b"}, "members": []}],
    }
    kb = parse_knowledge_base(doc)
    assert kb.domain_size() > 10**6
    overlap = [v for v in validate_knowledge_base(kb) if v.kind == "overlap"]
    assert len(overlap) == 1
    witness = kb.make_state(overlap[0].witness)
    assert kb.temporal_sets[0].pre.matches(witness) and kb.temporal_sets[1].pre.matches(witness)


@pytest.mark.parametrize("name", FIXTURES)
def test_fixtures_validate_and_sets_are_exclusive(name):
    kb = tdplan.load_fixture(name)
    assert validate_knowledge_base(kb) == []
    for state in kb.iter_states():
        assert sum(ts.pre.matches(state) for ts in kb.temporal_sets) <= 1
    for ts in kb.temporal_sets:
        assert ts.asymptote_sum() <= 1.0 + 1e-9


@pytest.mark.parametrize("name", FIXTURES)
def test_round_trip(name):
    kb = tdplan.load_fixture(name)
    assert load_knowledge_base(dump_knowledge_base(kb)) == kb


def test_matching_transitions_m1(m1_kb):
    tset, actions = matching_transitions(m1_kb.make_state({"ALT": "low"}), m1_kb)
    assert [m.name for m in tset.members] == ["crash"]
    assert [a.name for a in actions] == ["climb"]
    assert matching_transitions(m1_kb.make_state({"ALT": "ok"}), m1_kb) == (None, [])


def test_matching_transitions_flight(flight_kb):
    state = flight_kb.initial_states[0]
    _, actions = matching_transitions(state, flight_kb)
    assert "turn-left-to-W" in [a.name for a in actions]


def test_ambiguous_sets_raise():
    doc = m1_doc()
    doc["temporal_sets"].append({"pre": {}, "members": []})
    kb = parse_knowledge_base(doc)
    with pytest.raises(AmbiguousTransitionSets):
        kb.transition_set_for(kb.make_state({"ALT": "low"}))


def test_make_state_checks_assignments(m1_kb):
    with pytest.raises(KBReferenceError):
        m1_kb.make_state({})
    with pytest.raises(KBReferenceError):
        m1_kb.make_state({"ALT": "ok", "GEAR": "up"})


def test_condition_semantics():
    s = StateVector((("A", "1"), ("B", "2")))
    assert Condition().matches(s)
    assert Condition.of(B="2").matches(s)
    assert not Condition.of(A="2").matches(s)
    assert Condition.of(A="1").compatible(Condition.of(B="3"))
    assert not Condition.of(A="1").compatible(Condition.of(A="2"))


def test_apply_and_failure_flag():
    s = StateVector((("A", "1"), ("B", "2")))
    t = s.apply(Condition.of(B="3"))
    assert t == StateVector((("A", "1"), ("B", "3")))
    assert s.apply(Condition.of(B="3"), failed=True) != t
    assert s.apply(Condition.of(B="3"), failed=True).label().startswith("FAIL[")


@settings(max_examples=50)
@given(st.dictionaries(st.sampled_from(["LOC", "HEAD", "OBS", "ALT", "TRAFFIC"]),
                       st.integers(0, 1), min_size=0, max_size=5))
def test_round_trip_with_perturbed_goal(flight_kb, picks):
    doc = json.loads(dump_knowledge_base(flight_kb))
    goal = {}
    for name, idx in picks.items():
        goal[name] = flight_kb.feature(name).values[idx]
    doc = copy.deepcopy(doc)
    doc["goal"] = goal
    kb = load_knowledge_base(doc)
    assert kb.goal == Condition.of(goal)
    assert load_knowledge_base(dump_knowledge_base(kb)) == kb
