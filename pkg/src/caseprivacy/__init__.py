"""Privacy review pipeline for case-level surveillance microdata."""
from .errors import CasePrivacyError, DataError, InfeasibleError, SchemaError, VerificationError
from .schema import NA, Schema, load_bundled, load_schema

__version__ = "0.1.0"

__all__ = [
    "NA",
    "CasePrivacyError",
    "DataError",
    "InfeasibleError",
    "Schema",
    "SchemaError",
    "VerificationError",
    "__version__",
    "load_bundled",
    "load_schema",
]
