"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for every error raised by the decision engine."""


# dataspace
class DataSpaceError(EngineError):
    pass


class InvalidName(DataSpaceError):
    pass


class DuplicateChannel(DataSpaceError):
    pass


class UnknownChannel(DataSpaceError):
    pass


class UnknownProduct(DataSpaceError):
    pass


class SpaceClosed(DataSpaceError):
    pass


class BlockLocked(DataSpaceError):
    pass


class AlreadyArchived(BlockLocked):
    pass


class DuplicateProducer(DataSpaceError):
    pass


class InvalidValue(DataSpaceError):
    """A product value falls outside the JSON value model."""


# logic engine
class ExpressionError(EngineError):
    def __init__(self, message: str, line: int = 0, column: int = 0) -> None:
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line else ""
        super().__init__(f"{message}{where}")
        self.message = message


class ExpressionSyntaxError(ExpressionError):
    pass


class UnknownFunction(ExpressionError):
    pass


class RuleValidationError(EngineError):
    pass


class CyclicDependency(RuleValidationError):
    def __init__(self, path: list[str]) -> None:
        self.path = list(path)
        super().__init__("cyclic dependency: " + " -> ".join(self.path))


class UndefinedFact(RuleValidationError):
    pass


class DuplicateName(RuleValidationError):
    pass


class InferenceError(EngineError):
    pass


class MissingProduct(InferenceError):
    def __init__(self, name: str, consumer: str | None = None) -> None:
        self.name = name
        self.consumer = consumer
        who = f" (needed by {consumer})" if consumer else ""
        super().__init__(f"missing product {name!r}{who}")


class EvaluationError(InferenceError):
    pass


# channel framework
class FrameworkError(EngineError):
    pass


class UnknownPlugin(FrameworkError):
    pass


class ParameterError(FrameworkError):
    pass


class InvalidTransition(FrameworkError):
    pass


class TransformError(FrameworkError):
    pass


class PublisherError(FrameworkError):
    pass


# adapters / simulation
class AdapterUnavailable(EngineError):
    pass


class ScenarioTimeout(EngineError):
    """Jobs remained when the scenario ran out of time; ``report`` has the details."""

    def __init__(self, message: str, report) -> None:
        super().__init__(message)
        self.report = report

    @property
    def residue(self) -> dict[str, int]:
        return self.report.residue


# configuration
class ConfigError(EngineError):
    pass


class ConfigParseError(ConfigError):
    pass


class ConfigInvalid(ConfigError):
    def __init__(self, problems: list) -> None:
        self.problems = list(problems)
        super().__init__("\n".join(str(p) for p in self.problems))
