"""Exception hierarchy shared by every stage of the pipeline."""


class OmasganError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(OmasganError, ValueError):
    """A precondition of an operation was violated."""


class ShapeError(ContractError):
    def __init__(self, op, shapes, detail=""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{op}: incompatible shapes {list(self.shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NumericOverflowError(OmasganError, ArithmeticError):
    """A forward value became NaN or infinite."""

    def __init__(self, op, trace=None):
        self.op = op
        self.trace = trace
        super().__init__(f"{op}: non-finite value produced")


class DomainError(ContractError):
    """Argument outside the domain of a conjugate function."""


class CheckpointError(OmasganError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class SpecMismatchError(CheckpointError):
    pass


class ParseError(OmasganError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(OmasganError, ValueError):
    def __init__(self, key, constraint):
        self.key = key
        self.constraint = constraint
        super().__init__(f"invalid config key '{key}': {constraint}")


class StageDependencyError(OmasganError):
    def __init__(self, stage, missing):
        self.stage = stage
        self.missing = missing
        super().__init__(f"stage '{stage}' requires output of '{missing}', which was not found")


class TrainingDivergedError(NumericOverflowError):
    """Raised by a training loop when a loss turns non-finite; carries the trace so far."""

    def __init__(self, stage, trace):
        self.stage = stage
        OmasganError.__init__(self, f"{stage}: training diverged after {len(trace)} epochs")
        self.op = stage
        self.trace = trace
