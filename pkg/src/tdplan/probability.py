"""Temporal probability curves and the local offspring-probability computation.

A temporal transition carries a cumulative curve ``C(t)``: the probability
that the transition has fired ``t`` seconds after its preconditions became
true. Expanding a state evaluates every matching curve at one *critical time*
and turns the results into constant offspring probabilities.
"""

from __future__ import annotations

import enum
import logging
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence, Union

if TYPE_CHECKING:
    from .kb import ActionTransition, StateVector, TemporalTransition

logger = logging.getLogger(__name__)

INF = math.inf
TOL = 1e-9


class ActionKind(str, enum.Enum):
    PREEMPTIVE = "preemptive"
    NONPREEMPTIVE = "nonpreemptive"
    NONE = "none"


def _nudge_up(curve, t: float, v: float) -> float:
    # float rounding in the closed-form inverse can land one ulp short
    for _ in range(64):
        if curve.cum_prob(t) >= v:
            return t
        t = math.nextafter(t, INF)
    return t


@dataclass(frozen=True)
class PiecewiseCurve:
    """Piecewise-linear cumulative curve through ``knots``.

    ``C(t)`` is 0 before the first knot, interpolates linearly between knots
    and equals ``asymptote`` from the last knot on. The curve is
    right-continuous, so a knot whose value exceeds its predecessor's
    produces a jump. With no knots the curve is the constant ``asymptote``.
    """

    knots: tuple[tuple[float, float], ...]
    asymptote: float

    kind = "piecewise"

    def __post_init__(self):
        object.__setattr__(
            self, "knots", tuple((float(t), float(c)) for t, c in self.knots)
        )
        object.__setattr__(self, "asymptote", float(self.asymptote))
        object.__setattr__(self, "_ts", [t for t, _ in self.knots])
        object.__setattr__(self, "_cs", [c for _, c in self.knots])

    def problems(self) -> list[str]:
        out = []
        if not 0.0 <= self.asymptote <= 1.0:
            out.append(f"asymptote {self.asymptote} outside [0, 1]")
        prev_t, prev_c = -INF, 0.0
        for t, c in self.knots:
            if not (math.isfinite(t) and t >= 0):
                out.append(f"knot time {t} must be finite and >= 0")
            if not 0.0 <= c <= 1.0:
                out.append(f"knot value {c} outside [0, 1]")
            if t < prev_t:
                out.append("knot times must be sorted")
            if c < prev_c:
                out.append("knot values must be nondecreasing")
            if c > self.asymptote + TOL:
                out.append(f"knot value {c} exceeds asymptote {self.asymptote}")
            prev_t, prev_c = t, c
        return out

    def cum_prob(self, t: float) -> float:
        if not self.knots:
            return self.asymptote
        ts = self._ts
        if t < ts[0]:
            return 0.0
        if t >= ts[-1]:
            return self.asymptote
        i = bisect_right(ts, t) - 1
        (t0, c0), (t1, c1) = self.knots[i], self.knots[i + 1]
        return c0 + (c1 - c0) * (t - t0) / (t1 - t0)

    def left_limit(self, t: float) -> float:
        """``lim C(s)`` as ``s`` increases to ``t``."""
        if t <= 0:
            return 0.0
        if not self.knots:
            return self.asymptote
        ts = self._ts
        if t <= ts[0]:
            return 0.0
        if t > ts[-1]:
            return self.asymptote
        j = bisect_left(ts, t)
        (t0, c0), (t1, c1) = self.knots[j - 1], self.knots[j]
        return c0 + (c1 - c0) * (t - t0) / (t1 - t0)

    def inverse(self, v: float) -> float:
        """Smallest ``t >= 0`` with ``C(t) >= v``; ``inf`` if never reached."""
        if v <= 0.0:
            return 0.0
        if v > self.asymptote:
            return INF
        if not self.knots:
            return 0.0
        cs = self._cs
        if v <= cs[0]:
            return self.knots[0][0]
        j = bisect_left(cs, v)
        if j == len(cs):
            return self.knots[-1][0]
        (t0, c0), (t1, c1) = self.knots[j - 1], self.knots[j]
        t = t0 + (v - c0) / (c1 - c0) * (t1 - t0)
        return _nudge_up(self, min(t, t1), v)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "knots": [[t, c] for t, c in self.knots],
            "asymptote": self.asymptote,
        }


@dataclass(frozen=True)
class DelayedExponentialCurve:
    """``C(t) = p_max * (1 - exp(-rate * (t - t0)))`` for ``t >= t0``, else 0."""

    t0: float
    rate: float
    p_max: float

    kind = "delayed_exponential"

    @property
    def asymptote(self) -> float:
        return self.p_max

    def problems(self) -> list[str]:
        out = []
        if not (math.isfinite(self.t0) and self.t0 >= 0):
            out.append(f"onset t0={self.t0} must be finite and >= 0")
        if not (math.isfinite(self.rate) and self.rate > 0):
            out.append(f"rate lambda={self.rate} must be > 0")
        if not 0.0 <= self.p_max <= 1.0:
            out.append(f"p_max {self.p_max} outside [0, 1]")
        return out

    def cum_prob(self, t: float) -> float:
        if t < self.t0:
            return 0.0
        if t == INF:
            return self.p_max
        return -self.p_max * math.expm1(-self.rate * (t - self.t0))

    left_limit = cum_prob

    def inverse(self, v: float) -> float:
        if v <= 0.0:
            return 0.0
        if v >= self.p_max:
            return INF
        t = self.t0 - math.log1p(-v / self.p_max) / self.rate
        return _nudge_up(self, t, v)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "t0": self.t0, "lambda": self.rate, "p_max": self.p_max}


TemporalCurve = Union[PiecewiseCurve, DelayedExponentialCurve]

ZERO_CURVE = PiecewiseCurve((), 0.0)


def curve_from_dict(doc: dict) -> TemporalCurve:
    kind = doc.get("kind")
    if kind == "piecewise":
        return PiecewiseCurve(tuple(tuple(k) for k in doc.get("knots", [])), doc["asymptote"])
    if kind == "delayed_exponential":
        return DelayedExponentialCurve(float(doc["t0"]), float(doc["lambda"]), float(doc["p_max"]))
    raise ValueError(f"unknown curve kind {kind!r}")


def cum_prob(curve: TemporalCurve, t: float) -> float:
    if t < 0:
        raise ValueError(f"negative time {t}")
    return curve.cum_prob(t)


def asymptotic_prob(curve: TemporalCurve) -> float:
    return curve.asymptote


def epsilon_time(curve: TemporalCurve, epsilon: float) -> float:
    """Earliest in-state time at which the curve reaches ``epsilon``.

    Returns 0 when the curve starts at or above ``epsilon`` (nothing can
    preempt it) and ``inf`` when its asymptote stays below ``epsilon``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    return curve.inverse(epsilon)


@dataclass(frozen=True)
class CriticalTimeContext:
    test_time: float  # a: summed feature-test wcet of the planned actions
    n_actions: int
    action_time: float  # b: summed action wcet
    t_delay: float

    def __post_init__(self):
        if min(self.test_time, self.n_actions, self.action_time, self.t_delay) < 0:
            raise ValueError("critical-time context fields must be >= 0")


def critical_time(
    kind: ActionKind,
    ttf_deadline: Optional[float] = None,
    ctx: Optional[CriticalTimeContext] = None,
) -> float:
    """Single time at which a state's transition curves are evaluated.

    A preemptive action runs just before the earliest failure transition
    reaches epsilon. A non-preemptive one is assumed to wait for half the
    schedule: ``a*n/8 + b/4 + t_delay``. Without an action the curves are
    read at their asymptotes.
    """
    kind = ActionKind(kind)
    if kind is ActionKind.PREEMPTIVE:
        if ttf_deadline is None:
            raise ValueError("preemptive case needs the TTF epsilon deadline")
        return ttf_deadline
    if kind is ActionKind.NONPREEMPTIVE:
        if ctx is None:
            raise ValueError("non-preemptive case needs a CriticalTimeContext")
        return ctx.test_time * ctx.n_actions / 8 + ctx.action_time / 4 + ctx.t_delay
    return INF


@dataclass(frozen=True)
class OffspringContribution:
    via: str
    kind: str  # "action" | "temporal"
    fraction: float  # share of the parent's probability
    mass: float  # fraction * parent probability
    is_failure: bool = False
    target: Optional["StateVector"] = None


def offspring_probabilities(
    parent_prob: float,
    temporals: Sequence["TemporalTransition"],
    action: Optional["ActionTransition"],
    action_kind: ActionKind,
    t: float,
    parent: Optional["StateVector"] = None,
) -> list[OffspringContribution]:
    """Split ``parent_prob`` over the offspring of one expansion.

    Each temporal offspring gets ``C_i(t)``; the action offspring gets the
    remainder ``p = 1 - sum(C_i(t))``, halved when the action is not
    preemptive. With a preemptive action the curves are read just before
    ``t`` so a jump exactly at the deadline is attributed to the action.
    When ``parent`` is given, offspring targets are filled in.
    """
    action_kind = ActionKind(action_kind)
    if not 0.0 <= parent_prob <= 1.0 + TOL:
        raise ValueError(f"parent probability {parent_prob} outside [0, 1]")
    if (action is None) != (action_kind is ActionKind.NONE):
        raise ValueError("action and action_kind disagree")
    if action_kind is ActionKind.NONE and t != INF:
        raise ValueError("without an action the critical time must be infinite")

    fractions = []
    for tt in temporals:
        if action_kind is ActionKind.PREEMPTIVE:
            c = tt.curve.left_limit(t)
        else:
            c = tt.curve.cum_prob(t)
        fractions.append(c)
    total = math.fsum(fractions)
    if total > 1.0 + TOL:
        raise ValueError(f"temporal probabilities sum to {total} > 1 at t={t}")

    out = []
    for tt, c in zip(temporals, fractions):
        target = None
        if parent is not None:
            target = parent.apply(tt.post, failed=tt.is_failure)
        out.append(
            OffspringContribution(tt.name, "temporal", c, parent_prob * c, tt.is_failure, target)
        )
    if action is not None:
        p = max(0.0, 1.0 - total)
        if action_kind is ActionKind.NONPREEMPTIVE:
            p /= 2
        target = parent.apply(action.post) if parent is not None else None
        out.append(OffspringContribution(action.name, "action", p, parent_prob * p, False, target))
    return out


def merge_contribution(existing: Optional[float], already_expanded: bool, new_mass: float) -> float:
    """Fold a new contribution into an offspring's probability.

    A new state takes the contribution, an unexpanded one sums it, and an
    already-expanded one keeps its value (the caller accounts for the
    discarded mass).
    """
    if existing is None:
        merged = new_mass
    elif already_expanded:
        return existing
    else:
        merged = existing + new_mass
    if merged > 1.0:
        if merged > 1.0 + TOL:
            logger.warning("merged probability %.12g exceeds 1; clamping", merged)
        merged = 1.0
    return merged
