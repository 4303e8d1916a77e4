"""Exception hierarchy.

Every error carries a stable ``code`` string so callers (and the CLI) can
branch on the failure class without matching message text.
"""

from __future__ import annotations


class IcsThreatError(Exception):
    code = "ERROR"

    def __init__(self, message: str, *, subject: str | None = None):
        super().__init__(message)
        self.subject = subject


class ParseError(IcsThreatError):
    code = "PARSE_ERROR"

    def __init__(self, message: str, *, line: int | None = None,
                 column: int | None = None, token: str | None = None):
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        super().__init__(message + where, subject=token)
        self.line = line
        self.column = column
        self.token = token


class DuplicateIdError(ParseError):
    code = "DUP_ID"


class InvalidModelError(IcsThreatError):
    code = "INVALID_MODEL"

    def __init__(self, message: str, issues=()):
        super().__init__(message)
        self.issues = list(issues)


class DuplicateRuleError(ParseError):
    code = "DUP_RULE"


class BadTacticError(ParseError):
    code = "BAD_TACTIC"


class UnknownTechniqueError(IcsThreatError, KeyError):
    code = "UNKNOWN_TECHNIQUE"

    def __str__(self):
        return str(self.args[0])


class UnmappedCategoryError(IcsThreatError, KeyError):
    code = "UNMAPPED_CATEGORY"

    def __str__(self):
        return str(self.args[0])


class BadBoundsError(IcsThreatError, ValueError):
    code = "BAD_BOUNDS"


class DuplicateCveError(ParseError):
    code = "DUP_CVE"


class UnknownBindingError(IcsThreatError):
    code = "UNKNOWN_BINDING"


class NetworkError(IcsThreatError):
    code = "NETWORK_ERROR"


class RateLimitedError(NetworkError):
    code = "RATE_LIMITED"

    def __init__(self, message: str, retry_after: str | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class BadResponseError(NetworkError):
    code = "BAD_RESPONSE"
