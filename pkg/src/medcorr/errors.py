"""Exception types shared across the package.

Every operational failure mode has a named class so callers can branch on
the condition instead of matching message strings.
"""


class MedcorrError(Exception):
    """Base class for all package errors."""


# --- corpus ---------------------------------------------------------------

class MalformedRow(MedcorrError):
    def __init__(self, row_no: int, reason: str):
        super().__init__(f"row {row_no}: {reason}")
        self.row_no = row_no
        self.reason = reason


class DuplicateNoteId(MedcorrError):
    pass


class MissingColumn(MedcorrError):
    pass


class NonContiguousIds(MedcorrError):
    pass


class UnnumberedLine(MedcorrError):
    pass


# --- retrieval ------------------------------------------------------------

class EmptyInput(MedcorrError):
    pass


class DimensionMismatch(MedcorrError):
    pass


class ZeroVector(MedcorrError):
    pass


class EmptyIndex(MedcorrError):
    pass


class ClassUnavailable(MedcorrError):
    """The index does not hold enough notes of the requested label."""


class IntegrityError(MedcorrError):
    """A persisted artifact failed its consistency checks on load."""


# --- prompt engine --------------------------------------------------------

class UnboundPlaceholder(MedcorrError):
    pass


class ReasonMissing(MedcorrError):
    pass


class UnparseableResponse(MedcorrError):
    """Model output did not follow the keyed-line answer grammar."""


# --- llm gateway ----------------------------------------------------------

class BackendUnavailable(MedcorrError):
    pass


class ContextTooLong(MedcorrError):
    pass


class AuthFailure(MedcorrError):
    pass


class ReplayMiss(MedcorrError):
    def __init__(self, request_hash: str):
        super().__init__(f"no recorded response for request {request_hash}")
        self.request_hash = request_hash


# --- evaluation -----------------------------------------------------------

class MisalignedIds(MedcorrError):
    pass


class EmptySet(MedcorrError):
    pass


class ScorerUnavailable(MedcorrError):
    def __init__(self, metric: str, detail: str = ""):
        msg = f"scorer for {metric!r} unavailable"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.metric = metric


# --- cli ------------------------------------------------------------------

class MissingPrerequisite(MedcorrError):
    pass
