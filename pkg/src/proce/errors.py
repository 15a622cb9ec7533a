"""Exception hierarchy shared across the package."""


class ProceError(Exception):
    """Base class for all errors raised by proce."""


class ConfigError(ProceError, ValueError):
    pass


class UsageError(ProceError, ValueError):
    pass


class ShapeError(ProceError, ValueError):
    pass


class DomainError(ProceError, ValueError):
    pass


class DataError(ProceError, ValueError):
    pass


class SchemaError(DataError):
    pass


class ParseError(ProceError, ValueError):
    pass


class VersionError(ParseError):
    pass


class CycleError(ProceError, ValueError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("causal graph contains a cycle: " + " -> ".join(self.cycle))


class TrainingError(ProceError, RuntimeError):
    pass
