"""Exception hierarchy shared by the library and the command line tool."""

from __future__ import annotations


class MtplanError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InputError(MtplanError, ValueError):
    """Malformed input: wrong shapes, bad schema, unparsable files."""

    exit_code = 2


class DegenerateInputError(InputError):
    """A statistic is undefined for the given data (e.g. zero variance)."""


class ConstraintError(MtplanError, ValueError):
    """An ordering violates, or a problem contains, inconsistent constraints."""

    exit_code = 3


class PrecedenceCycleError(ConstraintError):
    """The precedence relation contains a cycle."""

    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        path = " -> ".join(str(t) for t in self.cycle)
        super().__init__(f"precedence constraints contain a cycle: {path}")


class CapacityError(MtplanError, RuntimeError):
    """A request exceeds a configured resource cap."""

    exit_code = 4
