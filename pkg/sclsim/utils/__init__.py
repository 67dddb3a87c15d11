"""
Utility functions for sclsim.
"""

from .schema_utils import (
    error_key_path,
    flatten_model,
    format_validation_errors,
    nest_dotted,
    validate_with_pydantic,
)

__all__ = [
    'error_key_path',
    'flatten_model',
    'format_validation_errors',
    'nest_dotted',
    'validate_with_pydantic',
]
