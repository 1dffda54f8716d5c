"""Exception hierarchy. Each class carries a short ``category`` used as the CLI error tag."""


class SLRError(Exception):
    category = "error"


class DimensionError(SLRError, ValueError):
    category = "dimension"


class ParameterError(SLRError, ValueError):
    category = "parameter"


class FormatError(SLRError):
    category = "format"


class DataError(SLRError):
    category = "data"


class EvaluationError(SLRError):
    category = "evaluation"


class ProtocolError(SLRError):
    category = "protocol"


class ConfigError(SLRError):
    category = "config"


class RefusalError(SLRError):
    category = "refused"
