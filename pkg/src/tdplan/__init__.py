"""Planning with temporally-dependent transition probabilities.

Builds the reachable state graph of a knowledge base with locally computed
state probabilities, picks a probable goal path, prunes improbable states
until the guaranteed test-action pairs are schedulable, and checks the
result by Monte Carlo simulation.
"""

from importlib import resources
from pathlib import Path

from .errors import (
    KBParseError,
    KBReferenceError,
    KBValidationError,
    KnowledgeBaseError,
    ModelIncomplete,
    PlanningFailure,
    SchedulingFailure,
    TdplanError,
    UnguardableState,
)
from .kb import (
    ActionTransition,
    Condition,
    Feature,
    KnowledgeBase,
    StateVector,
    TemporalTransition,
    TransitionSet,
    dump_knowledge_base,
    load_knowledge_base,
    load_knowledge_base_file,
    matching_transitions,
    parse_knowledge_base,
    validate_knowledge_base,
)
from .planner import (
    Order,
    PlanGraph,
    PlannedState,
    PlannerConfig,
    StateClass,
    Status,
    classify_states,
    expand_one,
    plan,
    select_action,
)
from .probability import (
    ActionKind,
    CriticalTimeContext,
    DelayedExponentialCurve,
    PiecewiseCurve,
    asymptotic_prob,
    critical_time,
    cum_prob,
    epsilon_time,
    merge_contribution,
    offspring_probabilities,
)
from .scheduler import Tap, TapSchedule, derive_taps, plan_and_schedule, schedulability
from .simulator import SimReport, estimate, run_trial, sample_temporal_outcome

__version__ = "0.1.0"


def fixture_path(name: str) -> Path:
    """Path of a bundled knowledge-base fixture such as ``micro_m1.json``."""
    return Path(str(resources.files(__package__) / "fixtures" / name))


def load_fixture(name: str) -> KnowledgeBase:
    return load_knowledge_base_file(fixture_path(name))
