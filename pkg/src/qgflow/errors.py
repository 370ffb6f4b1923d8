"""Exception hierarchy shared across the package."""


class QGError(Exception):
    """Base class for all package errors."""


# core
class MissingReport(QGError):
    pass


class EmptyPassSet(QGError):
    pass


# gateway
class ProviderError(QGError):
    pass


class TransientProviderError(ProviderError):
    """Raised by providers for failures worth retrying (5xx, 429, dropped connections)."""


class ProviderUnreachable(ProviderError):
    pass


class ProviderRejected(ProviderError):
    pass


class ProviderTimeout(ProviderError):
    pass


class StructuredOutputError(QGError):
    def __init__(self, message: str, text: str = ""):
        super().__init__(message)
        self.text = text


class ParseFailure(StructuredOutputError):
    pass


class SchemaViolation(StructuredOutputError):
    def __init__(self, message: str, text: str = "", field: str | None = None):
        super().__init__(message, text)
        self.field = field


# knowledge store
class FileUnreadable(QGError):
    pass


class EmptyBank(QGError):
    pass


# agents
class AgentOutputInvalid(QGError):
    def __init__(self, message: str, text: str = ""):
        super().__init__(message)
        self.text = text


class PlannerOutputInvalid(AgentOutputInvalid):
    pass


class WriterOutputInvalid(AgentOutputInvalid):
    def __init__(self, message: str, text: str = "", direction_id: int | None = None):
        super().__init__(message, text)
        self.direction_id = direction_id


class EvaluatorOutputInvalid(AgentOutputInvalid):
    pass


class IterationExhausted(QGError):
    pass


class TemplateError(QGError):
    pass


# metrics
class EmptySequence(QGError):
    pass


class EmbedderUnavailable(QGError):
    pass


class TooFewQuestions(QGError):
    pass


class MisalignedOutputs(QGError):
    pass


class ConfigError(QGError):
    pass
