"""Monte Carlo execution of a tap schedule against the stochastic world model.

Every state entry restarts the in-state clock: one draw picks which member of
the state's transition set (if any) will fire and a second draw places its
firing time. The plan's tap for the state races it; whichever lands first
moves the world on.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ModelIncomplete
from .kb import KnowledgeBase, StateVector, TemporalTransition, TransitionSet
from .planner import PlanGraph, Status
from .scheduler import GUARANTEED, Tap, TapSchedule

INF = math.inf
RESULTS = ("goal", "failure", "deadend_stuck", "removed_detected", "timeout")
Z95 = 1.959963984540054


def _open_uniform(rng) -> float:
    u = rng.random()
    while u <= 0.0:
        u = rng.random()
    return u


def sample_temporal_outcome(
    tset: Optional[TransitionSet], rng
) -> tuple[Optional[TemporalTransition], float]:
    """Draw which member of ``tset`` fires first, and when.

    Members' asymptotes are stacked on [0, 1); a draw past the stack means
    nothing ever fires. The selected member's time is the generalized
    inverse of its curve at a uniform fraction of its asymptote, so member
    ``i`` has fired by ``t`` with probability exactly ``C_i(t)``.
    """
    if tset is None:
        return None, INF
    u = rng.random()
    acc = 0.0
    for m in tset.members:
        a = m.curve.asymptote
        if a <= 0:
            continue
        if u < acc + a:
            return m, m.curve.inverse(a * _open_uniform(rng))
        acc += a
    return None, INF


@dataclass
class TrialOutcome:
    result: str
    elapsed: float
    trace: list = field(default_factory=list)  # (time, state, transition name)
    ttf_visits: int = 0

    def to_dict(self) -> dict:
        return {
            "result": self.result,
            "elapsed": self.elapsed,
            "ttf_visits": self.ttf_visits,
            "trace": [[t, s.label(), via] for t, s, via in self.trace],
        }


class TapTimer:
    """When the tap guarding a state lands its action, for an entry at time T.

    Guaranteed taps are released every period from time 0. Best-effort taps
    run in slack ``per_cycle`` times per schedule cycle (the longest
    guaranteed period, or the summed wcet of all taps when nothing is
    guaranteed). Either way the effect lands ``wcet + t_delay`` after release.
    """

    def __init__(self, schedule: TapSchedule, per_cycle: int = 1):
        self.by_state: dict[StateVector, Tap] = {}
        for tap in schedule.taps:
            for v in tap.guarded_states:
                self.by_state[v] = tap
        periods = [t.period for t in schedule.taps if t.kind == GUARANTEED]
        if periods:
            cycle = max(periods)
        else:
            cycle = math.fsum(t.wcet for t in schedule.taps) or 1.0
        self.slot = cycle / max(1, per_cycle)

    def landing(self, vector: StateVector, now: float) -> tuple[Optional[Tap], float]:
        tap = self.by_state.get(vector)
        if tap is None:
            return None, INF
        if tap.kind == GUARANTEED:
            step = tap.period
            release = math.ceil(now / step) * step
        else:
            step = self.slot
            release = (math.floor(now / step) + 1) * step
        if release < now:
            release += step
        return tap, release + tap.wcet + tap.action.t_delay


def run_trial(
    graph: PlanGraph,
    schedule: TapSchedule,
    kb: KnowledgeBase,
    rng,
    horizon: float,
    timer: Optional[TapTimer] = None,
    keep_trace: bool = True,
) -> TrialOutcome:
    """Simulate one execution from a uniformly drawn initial state.

    Raises:
        ModelIncomplete: the world entered a live state missing from the graph.
    """
    timer = timer or TapTimer(schedule)
    initial = graph.initial
    vector = initial[min(int(rng.random() * len(initial)), len(initial) - 1)]
    now = 0.0
    trace = [(now, vector, None)] if keep_trace else []
    ttf_visits = 0
    while True:
        if vector.failed:
            return TrialOutcome("failure", now, trace, ttf_visits)
        node = graph.states.get(vector)
        if node is None:
            raise ModelIncomplete(vector)
        if node.status is Status.REMOVED:
            return TrialOutcome("removed_detected", now, trace, ttf_visits)
        if kb.goal.matches(vector):
            return TrialOutcome("goal", now, trace, ttf_visits)

        tset = kb.transition_set_for(vector)
        if tset is not None and tset.ttfs:
            ttf_visits += 1
        member, dt = sample_temporal_outcome(tset, rng)
        t_temporal = now + dt
        tap, t_action = timer.landing(vector, now)
        if t_temporal == INF and t_action == INF:
            return TrialOutcome("deadend_stuck", now, trace, ttf_visits)
        if t_action <= t_temporal:
            nxt, via, when = vector.apply(tap.action.post), tap.action.name, t_action
        else:
            nxt, via, when = vector.apply(member.post, failed=member.is_failure), member.name, t_temporal
        if when > horizon:
            return TrialOutcome("timeout", horizon, trace, ttf_visits)
        now, vector = when, nxt
        if keep_trace:
            trace.append((now, vector, via))


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class SimReport:
    trials: int
    seed: int
    horizon: float
    counts: dict[str, int]
    frequencies: dict[str, float]
    intervals: dict[str, tuple[float, float]]
    planner_goal_prob: Optional[float]
    mean_time_to_goal: Optional[float]
    mean_ttf_visits: float

    def half_width(self, result: str) -> float:
        lo, hi = self.intervals[result]
        return (hi - lo) / 2

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "horizon": self.horizon,
            "counts": self.counts,
            "frequencies": self.frequencies,
            "wilson95": {k: list(v) for k, v in self.intervals.items()},
            "half_widths": {k: self.half_width(k) for k in RESULTS},
            "planner_goal_prob": self.planner_goal_prob,
            "mean_time_to_goal": self.mean_time_to_goal,
            "mean_ttf_visits": self.mean_ttf_visits,
        }


def default_horizon(schedule: TapSchedule) -> float:
    periods = [t.period for t in schedule.taps if t.period]
    return 50 * max(periods) if periods else 1000.0


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _run_batch(args) -> list[TrialOutcome]:
    graph, schedule, kb, seed, indices, horizon, per_cycle, keep_trace = args
    timer = TapTimer(schedule, per_cycle)
    return [
        run_trial(graph, schedule, kb, trial_rng(seed, i), horizon, timer, keep_trace)
        for i in indices
    ]


def run_trials(
    graph: PlanGraph,
    schedule: TapSchedule,
    kb: KnowledgeBase,
    n_trials: int,
    horizon: Optional[float] = None,
    seed: int = 0,
    per_cycle: int = 1,
    workers: int = 1,
    keep_trace: bool = False,
) -> list[TrialOutcome]:
    """Outcomes in trial-index order; identical for any ``workers`` count."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    horizon = default_horizon(schedule) if horizon is None else horizon
    if workers <= 1:
        return _run_batch((graph, schedule, kb, seed, range(n_trials), horizon, per_cycle, keep_trace))
    chunks = np.array_split(np.arange(n_trials), workers)
    jobs = [(graph, schedule, kb, seed, [int(i) for i in c], horizon, per_cycle, keep_trace)
            for c in chunks if len(c)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [o for batch in pool.map(_run_batch, jobs) for o in batch]


def summarize(outcomes: Sequence[TrialOutcome], seed: int, horizon: float,
              planner_goal_prob: Optional[float]) -> SimReport:
    n = len(outcomes)
    counts = {r: 0 for r in RESULTS}
    for o in outcomes:
        counts[o.result] += 1
    goal_times = [o.elapsed for o in outcomes if o.result == "goal"]
    return SimReport(
        trials=n,
        seed=seed,
        horizon=horizon,
        counts=counts,
        frequencies={r: counts[r] / n for r in RESULTS},
        intervals={r: wilson_interval(counts[r], n) for r in RESULTS},
        planner_goal_prob=planner_goal_prob,
        mean_time_to_goal=math.fsum(goal_times) / len(goal_times) if goal_times else None,
        mean_ttf_visits=math.fsum(o.ttf_visits for o in outcomes) / n,
    )


def estimate(
    graph: PlanGraph,
    schedule: TapSchedule,
    kb: KnowledgeBase,
    n_trials: int,
    horizon: Optional[float] = None,
    seed: int = 0,
    per_cycle: int = 1,
    workers: int = 1,
    trace_path=None,
) -> SimReport:
    """Run ``n_trials`` seeded trials and aggregate outcome frequencies.

    When ``trace_path`` is given every trial is written there as one JSON line.
    """
    horizon = default_horizon(schedule) if horizon is None else horizon
    outcomes = run_trials(graph, schedule, kb, n_trials, horizon, seed, per_cycle, workers,
                          keep_trace=trace_path is not None)
    if trace_path is not None:
        with open(trace_path, "w") as fh:
            for i, o in enumerate(outcomes):
                fh.write(json.dumps({"trial": i, **o.to_dict()}) + "\n")
    return summarize(outcomes, seed, horizon, graph.goal_path_prob)


def without_taps(schedule: TapSchedule, names) -> TapSchedule:
    """Copy of ``schedule`` with the named taps (or taps for the named actions) dropped."""
    names = set(names)
    kept = [t for t in schedule.taps if t.name not in names and t.action.name not in names]
    return dataclasses.replace(schedule, taps=kept)
