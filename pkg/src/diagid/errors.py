"""Exception types shared across the engine.

Every error raised on a domain-level contract violation derives from
EngineError so interface layers (CLI, HTTP) can map them uniformly:
domain errors become exit code 1 / HTTP 4xx, everything else is a bug.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all expected, domain-level failures."""


class KbSyntaxError(EngineError):
    """Raised by the knowledge-base parser with a 1-based line/column."""

    def __init__(self, message: str, line: int, col: int = 1):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col
        self.reason = message


class KbValidationError(EngineError):
    """A parsed knowledge base failed validation; carries the violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"knowledge base invalid: {lines}")


class UnknownElementError(EngineError):
    """A name (variable, state, treatment, node, time index) is not defined."""


class TimeRegressionError(EngineError):
    """An event arrived with a time index earlier than the current one."""


class ZeroEvidenceError(EngineError):
    """The evidence set has probability zero under the current model."""

    def __init__(self, evidence):
        self.evidence = dict(evidence)
        shown = ", ".join(f"{v}={s}" for v, s in sorted(self.evidence.items()))
        super().__init__(f"evidence has zero probability: {shown}")


class MissingCptError(EngineError):
    """No usable CPT bank entry exists for a variable at the requested time."""


class EditError(EngineError):
    """A diagram edit would break a structural invariant."""


class RefinementError(EngineError):
    """Node refinement rejected; carries the distribution-check violations."""

    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class CoarseningRejectedError(EngineError):
    """Lossy coarsening rejected because the chosen treatment's class changed.

    Carries the decision reports computed before and after the merge so the
    caller can inspect what would have changed.
    """

    def __init__(self, message: str, before, after):
        super().__init__(message)
        self.before = before
        self.after = after


class SessionError(EngineError):
    """A session verb was used out of order or with an invalid argument."""
