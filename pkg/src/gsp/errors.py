"""Exception types raised across the package."""


class GSPError(Exception):
    """Base class for all package errors."""


class PDDLError(GSPError):
    """Base class for PDDL input problems; carries an optional source position."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{line}:{column}: {message}"
        super().__init__(message)


class PDDLSyntaxError(PDDLError):
    pass


class UnsupportedFeature(PDDLError):
    """A PDDL construct outside the :strips + :typing subset."""

    def __init__(self, feature, line=None, column=None):
        self.feature = feature
        super().__init__(f"unsupported PDDL feature {feature}", line, column)


class SemanticError(PDDLError):
    pass


class CapacityExceeded(GSPError):
    pass


class NotApplicable(GSPError):
    pass


class MissingRelation(GSPError):
    pass


class NonFiniteTarget(GSPError):
    pass


class EmptyInput(GSPError):
    pass


class ShapeMismatch(GSPError):
    pass


class Underfull(GSPError):
    pass


class MissingSuccessor(GSPError):
    pass


class AllEmpty(GSPError):
    pass
