"""Exception taxonomy and the process exit codes the CLI maps them to."""

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRANSPORT = 4
EXIT_BUDGET = 5


class HalludetError(Exception):
    """Base class for every error raised by this package."""

    exit_code = EXIT_FAILURE


class ConfigError(HalludetError):
    exit_code = EXIT_CONFIG


# --- dataset ---------------------------------------------------------------

class DataError(HalludetError):
    exit_code = EXIT_DATA


class MalformedFile(DataError):
    """Input file is not a JSON array of objects."""


class UnknownTask(DataError):
    """A task string in the input file has no known mapping."""


class MissingField(DataError):
    """A mapped source key is absent from a record."""


class InvariantViolation(DataError):
    """A record or derived object violates a structural invariant."""


# --- prompting -------------------------------------------------------------

class PromptError(HalludetError):
    pass


class MissingDefinition(PromptError):
    """No (non-empty) task/role/concept definition for the requested task."""


class TaskMismatch(PromptError):
    """Few-shot examples do not share the query point's task."""


# --- llm clients -----------------------------------------------------------

class ClientError(HalludetError):
    pass


class TransportError(ClientError):
    """Network failure or server-side error after retries were exhausted."""

    exit_code = EXIT_TRANSPORT


class RateLimitedError(TransportError):
    """HTTP 429 persisted past the retry budget."""


class AuthError(ClientError):
    """HTTP 401/403 or missing API key; never retried."""


class BudgetExceeded(HalludetError):
    """The cost ledger crossed the configured spending limit."""

    exit_code = EXIT_BUDGET


# --- classification --------------------------------------------------------

class TooManyUnparseable(HalludetError):
    """Fewer than half of the requested samples parsed to a label."""


# --- selection -------------------------------------------------------------

class SelectionError(HalludetError):
    pass


class DomainError(SelectionError):
    """Probability outside [0, 1]."""


class DimensionMismatch(SelectionError):
    """Embeddings of different dimensions were compared."""


class EmptyPool(SelectionError):
    """Selection was asked to pick from an empty example pool."""


# --- evaluation ------------------------------------------------------------

class MetricError(HalludetError):
    pass


class MissingPrediction(MetricError):
    """A run does not cover every evaluated data point."""


class DegenerateInput(MetricError):
    """A statistic is undefined on this input (e.g. zero rank variance).

    Carries a machine-readable ``kind`` so reports can surface the reason
    instead of silently emitting 0 or 1.
    """

    def __init__(self, message: str, kind: str):
        super().__init__(message)
        self.kind = kind
