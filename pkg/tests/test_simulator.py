import json
import math

import numpy as np
import pytest

import tdplan
from tdplan.errors import ModelIncomplete
from tdplan.kb import Condition, TemporalTransition, TransitionSet
from tdplan.planner import PlannerConfig
from tdplan.probability import PiecewiseCurve
from tdplan.scheduler import plan_and_schedule
from tdplan.simulator import (
    RESULTS,
    TapTimer,
    estimate,
    run_trial,
    run_trials,
    sample_temporal_outcome,
    trial_rng,
    wilson_interval,
    without_taps,
)

CRASH = PiecewiseCurve(((5.0, 0.0), (10.0, 0.5)), 0.5)


class FixedDraws:
    def __init__(self, *values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def tset(*curves):
    return TransitionSet(Condition(), [
        TemporalTransition(f"m{i}", Condition.of(X=str(i)), c) for i, c in enumerate(curves)
    ])


def test_draw_past_the_stack_never_fires():
    assert sample_temporal_outcome(tset(PiecewiseCurve((), 0.8)), FixedDraws(0.9)) == (None, math.inf)
    assert sample_temporal_outcome(None, FixedDraws()) == (None, math.inf)


def test_selected_member_fires_at_inverse():
    member, t = sample_temporal_outcome(tset(CRASH), FixedDraws(0.1, 0.5))
    assert member.name == "m0"
    assert t == pytest.approx(7.5)


def test_empirical_fired_by_probability():
    rng = np.random.default_rng(11)
    s = tset(CRASH)
    n = 100_000
    fired = sum(sample_temporal_outcome(s, rng)[1] <= 7.5 for _ in range(n))
    assert abs(fired / n - 0.25) < 0.005


def test_marginals_of_competing_members():
    a = PiecewiseCurve(((0.0, 0.0), (10.0, 0.3), (20.0, 0.4)), 0.4)
    b = PiecewiseCurve(((2.0, 0.0), (6.0, 0.35)), 0.35)
    s = tset(a, b)
    rng = np.random.default_rng(5)
    n = 40_000
    draws = [sample_temporal_outcome(s, rng) for _ in range(n)]
    for i, curve in enumerate((a, b)):
        times = np.array([t for m, t in draws if m is not None and m.name == f"m{i}"])
        for probe in np.linspace(1.0, 25.0, 10):
            expected = curve.cum_prob(probe)
            observed = np.count_nonzero(times <= probe) / n
            sigma = math.sqrt(max(expected * (1 - expected), 1e-12) / n)
            assert abs(observed - expected) <= 4 * sigma + 1e-12


def test_wilson_interval_reference_values():
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    lo, hi = wilson_interval(0, 10)
    assert lo == 0.0 and hi == pytest.approx(0.2775, abs=1e-4)


def test_m1_climb_wins(m1_kb):
    g, s = plan_and_schedule(m1_kb)
    out = run_trial(g, s, m1_kb, trial_rng(0, 0), horizon=100.0)
    assert out.result == "goal"
    assert [via for _, _, via in out.trace] == [None, "climb"]
    assert out.elapsed == pytest.approx(1.15)  # release at 0, wcet 0.15, delay 1.0


def test_tap_release_times(m1_kb):
    g, s = plan_and_schedule(m1_kb)
    timer = TapTimer(s)
    low = m1_kb.initial_states[0]
    assert timer.landing(low, 0.0)[1] == pytest.approx(1.15)
    assert timer.landing(low, 0.1)[1] == pytest.approx(3.95 + 1.15)
    assert timer.landing(m1_kb.make_state({"ALT": "ok"}), 0.0) == (None, math.inf)


def test_m1_estimate(m1_kb):
    g, s = plan_and_schedule(m1_kb)
    r = estimate(g, s, m1_kb, 2000, seed=3)
    bound = 0.01 * r.mean_ttf_visits
    assert r.frequencies["failure"] <= bound + 4 * math.sqrt(bound * (1 - bound) / 2000)
    unguarded = estimate(g, without_taps(s, ["climb"]), m1_kb, 4000, seed=3)
    assert abs(unguarded.frequencies["failure"] - 0.5) < 4 * math.sqrt(0.25 / 4000)
    assert unguarded.counts["deadend_stuck"] + unguarded.counts["failure"] == 4000


def test_gear_removal_detected(gear_kb):
    g, s = plan_and_schedule(gear_kb, PlannerConfig(initial_p1=0.002))
    n = 10_000
    outcomes = run_trials(g, s, gear_kb, n, seed=2, keep_trace=True)
    detected = [o for o in outcomes if o.result == "removed_detected"]
    for o in detected:
        assert g.states[o.trace[-1][1]].prob < g.p1
    # Each visit selects gear-up with probability equal to its asymptote.
    via_gear = sum(o.trace[-1][2] == "gear-up" for o in detected) / n
    visits = math.fsum(len(o.trace) - 1 for o in outcomes) / n
    bound = 0.001 * max(visits, 1.0)
    assert 0 < via_gear <= bound + 4 * math.sqrt(bound / n)


def test_report_shape_and_determinism(flight_kb):
    g, s = plan_and_schedule(flight_kb)
    a = estimate(g, s, flight_kb, 300, seed=9)
    b = estimate(g, s, flight_kb, 300, seed=9)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    assert set(a.counts) == set(RESULTS)
    assert math.fsum(a.frequencies.values()) == pytest.approx(1.0, abs=1e-9)
    assert a.planner_goal_prob == g.goal_path_prob
    one = estimate(g, s, flight_kb, 1, seed=9)
    assert sorted(one.frequencies.values()) == [0.0] * 4 + [1.0]
    with pytest.raises(ValueError):
        estimate(g, s, flight_kb, 0)


def test_parallel_matches_serial(flight_kb):
    g, s = plan_and_schedule(flight_kb)
    serial = estimate(g, s, flight_kb, 200, seed=4)
    parallel = estimate(g, s, flight_kb, 200, seed=4, workers=2)
    assert serial.to_dict() == parallel.to_dict()


def test_traces(flight_kb, tmp_path):
    g, s = plan_and_schedule(flight_kb)
    path = tmp_path / "trace.jsonl"
    estimate(g, s, flight_kb, 200, seed=1, trace_path=path)
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert [x["trial"] for x in lines] == list(range(200))
    for trial in lines:
        times = [step[0] for step in trial["trace"]]
        assert all(a < b for a, b in zip(times, times[1:]))
        ends_failed = trial["trace"][-1][1].startswith("FAIL[")
        assert ends_failed == (trial["result"] == "failure")


def test_one_member_fires_per_visit(tornado_kb):
    g, s = plan_and_schedule(tornado_kb)
    for i in range(200):
        out = run_trial(g, s, tornado_kb, trial_rng(8, i), horizon=1e4)
        for (_, before, _), (_, after, via) in zip(out.trace, out.trace[1:]):
            tset = tornado_kb.transition_set_for(before)
            names = {m.name for m in tset.members} if tset else set()
            actions = {a.name for a in tornado_kb.actions}
            assert via in names | actions


def test_missing_state_is_reported(m1_kb):
    g, s = plan_and_schedule(m1_kb)
    del g.states[m1_kb.make_state({"ALT": "ok"})]
    with pytest.raises(ModelIncomplete):
        run_trial(g, s, m1_kb, trial_rng(0, 0), horizon=100.0)
