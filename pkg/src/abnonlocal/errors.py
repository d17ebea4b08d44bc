"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` (for example
``"dimension-too-small"``) so the CLI can report it as JSON.
"""

import math


class SimulationError(Exception):
    """Base class. ``code`` is a kebab-case identifier, ``details`` extra context."""

    exit_status = 1

    def __init__(self, code, message=None, **details):
        self.code = code
        self.details = details
        super().__init__(message or code)

    def to_dict(self):
        out = {"error": self.code, "message": str(self)}
        out.update({k: _jsonable(v) for k, v in self.details.items()})
        return out


class InputError(SimulationError, ValueError):
    """A precondition on the inputs was violated."""


class NumericalError(SimulationError, ArithmeticError):
    """The inputs were valid but the computation cannot proceed to working precision."""

    exit_status = 2


def _jsonable(v):
    if isinstance(v, (bool, int, str)) or v is None:
        return v
    try:
        f = float(v)
    except (TypeError, ValueError):
        return str(v)
    return f if math.isfinite(f) else str(f)
