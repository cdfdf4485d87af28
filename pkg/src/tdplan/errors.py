"""Exception hierarchy shared by the planning pipeline."""

from __future__ import annotations


class TdplanError(Exception):
    """Base class for all errors raised by this package."""

    def details(self) -> dict:
        return {}


class KnowledgeBaseError(TdplanError):
    pass


class KBParseError(KnowledgeBaseError):
    """The knowledge-base document is malformed."""


class KBReferenceError(KnowledgeBaseError):
    """A condition names an undeclared feature or value."""


class KBValidationError(KnowledgeBaseError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(v.message for v in self.violations)
        super().__init__(f"{len(self.violations)} violation(s): {lines}")

    def details(self) -> dict:
        return {"violations": [v.to_dict() for v in self.violations]}


class AmbiguousTransitionSets(KnowledgeBaseError):
    """Two temporal transition sets match the same state."""


class UnguardableState(TdplanError):
    """A state with a temporal transition to failure cannot be preempted in time."""

    def __init__(self, vector, reason: str):
        self.vector = vector
        self.reason = reason
        super().__init__(f"unguardable state {vector}: {reason}")

    def details(self) -> dict:
        return {"state": self.vector.to_dict(), "reason": self.reason}


class PlanningFailure(TdplanError):
    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)

    def details(self) -> dict:
        return {"witness": self.witness.to_dict()} if self.witness is not None else {}


class SchedulingFailure(TdplanError):
    def __init__(self, message: str, utilization: float, escalations=()):
        self.utilization = utilization
        self.escalations = list(escalations)
        super().__init__(message)

    def details(self) -> dict:
        return {
            "utilization": self.utilization,
            "escalations": [e.to_dict() for e in self.escalations],
        }


class ModelIncomplete(TdplanError):
    """The simulated world reached a state the plan graph never generated."""

    def __init__(self, vector):
        self.vector = vector
        super().__init__(f"state {vector} is not in the plan graph")

    def details(self) -> dict:
        return {"state": self.vector.to_dict()}
