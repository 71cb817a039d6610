"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class StepKitError(Exception):
    """Base class for all stepkit errors."""


class StepSyntaxError(StepKitError):
    """Lexical or grammatical error in a Part-21 document."""

    def __init__(self, message: str, line: int, column: int, expected: str | None = None):
        self.line = line
        self.column = column
        self.expected = expected
        detail = f"{message} (line {line}, column {column})"
        if expected:
            detail += f", expected {expected}"
        super().__init__(detail)


class DuplicateIdError(StepKitError):
    def __init__(self, entity_id: int):
        self.entity_id = entity_id
        super().__init__(f"duplicate entity identifier #{entity_id}")


class EntityLimitError(StepKitError):
    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(f"entity count exceeds the configured limit of {limit}")


class InvalidModelError(StepKitError):
    """A StepFile violates its own invariants and cannot be serialized."""


class DanglingReferenceError(StepKitError):
    def __init__(self, source: int, target: int):
        self.source = source
        self.target = target
        super().__init__(f"entity #{source} references #{target}, which does not exist")


class CyclicModelError(StepKitError):
    def __init__(self, cycles: list[list[int]]):
        self.cycles = cycles
        shown = ", ".join("->".join(f"#{n}" for n in c) for c in cycles[:3])
        super().__init__(f"reference graph contains cycles: {shown}")


class MalformedStlError(StepKitError):
    pass


class EmptyMeshError(StepKitError):
    pass


class DegenerateMeshError(StepKitError):
    pass


class EmptyCloudError(StepKitError):
    pass


class TooFewPointsError(StepKitError):
    pass


class RegistrationFailedError(StepKitError):
    pass


class InvalidThresholdsError(StepKitError):
    pass


class DegenerateScaleError(StepKitError):
    pass


class EmptyBatchError(StepKitError):
    pass


class CheckerUnavailableError(StepKitError):
    pass


class NoPairsFoundError(StepKitError):
    pass


class RemoteUnavailableError(StepKitError):
    pass


class EmptyTextError(StepKitError):
    pass


class DimensionMismatchError(StepKitError):
    pass


class EmptyIndexError(StepKitError):
    pass


class MissingStepFileError(StepKitError):
    pass


class ConfigError(StepKitError):
    pass
