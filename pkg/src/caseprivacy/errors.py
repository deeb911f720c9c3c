"""Exception hierarchy.

The CLI maps these onto exit codes: ``SchemaError`` and ``DataError`` exit
with 2, ``VerificationError`` with 3.
"""
from __future__ import annotations


class CasePrivacyError(Exception):
    """Base class for all pipeline errors."""

    stage: str = "pipeline"

    def __init__(self, message: str = "", stage: str | None = None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage


class SchemaError(CasePrivacyError):
    stage = "schema"


class DataError(CasePrivacyError):
    stage = "data"


class InfeasibleError(DataError):
    """Too few records to reach k-anonymity by suppressing violating rows only."""

    stage = "suppress"


class VerificationError(CasePrivacyError):
    stage = "verify"
