"""
Utilities for working with Pydantic schemas.

Validation with readable key paths, and conversion between nested models
and the flat ``section.key`` form used by config files and overrides.
"""

from typing import Any, Dict, List, Mapping, Optional, Tuple, Type

from pydantic import BaseModel, ValidationError


def error_key_path(error: Dict[str, Any]) -> str:
    """Dotted key path of one pydantic error entry (list indices dropped)."""
    return '.'.join(str(part) for part in error['loc'] if not isinstance(part, int))


def format_validation_errors(e: ValidationError) -> List[Tuple[str, str]]:
    """(key_path, message) for every error of a ValidationError."""
    return [(error_key_path(error), error['msg']) for error in e.errors()]


def validate_with_pydantic(
    data: Dict[str, Any],
    model: Type[BaseModel]
) -> Tuple[bool, Optional[List[str]]]:
    """
    Validate data using Pydantic model directly.

    Args:
        data: Dictionary to validate
        model: Pydantic model class to validate against

    Returns:
        Tuple of (passed, errors) where passed is bool and errors is list of error messages
    """
    try:
        model.model_validate(data)
        return True, None
    except ValidationError as e:
        return False, [f"{loc}: {msg}" for loc, msg in format_validation_errors(e)]
    except Exception as e:
        return False, [f"Validation error: {str(e)}"]


def nest_dotted(flat: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Turn {'controller.th_high': '4.5', 'seed': '3'} into nested dictionaries.

    Raises:
        ValueError: a key is used both as a value and as a section
    """
    nested: Dict[str, Any] = {}
    for dotted, value in flat.items():
        parts = [p.strip() for p in dotted.split('.')]
        if not all(parts):
            raise ValueError(f"malformed key '{dotted}'")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ValueError(f"'{part}' in '{dotted}' is a value, not a section")
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ValueError(f"'{dotted}' is a section, not a value")
        node[parts[-1]] = value
    return nested


def flatten_model(model: BaseModel, prefix: str = "") -> Dict[str, Any]:
    """Dotted key -> value for every leaf field of a (nested) model."""
    flat: Dict[str, Any] = {}
    for name in type(model).model_fields:
        value = getattr(model, name)
        key = f"{prefix}{name}"
        if isinstance(value, BaseModel):
            flat.update(flatten_model(value, f"{key}."))
        else:
            flat[key] = value
    return flat
