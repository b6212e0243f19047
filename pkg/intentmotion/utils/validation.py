import logging
from typing import Any, Dict, Optional, Type, TypeVar

import toml
from jsonschema import Draft202012Validator
from pydantic import BaseModel, ValidationError

from intentmotion.utils.exceptions import ArtifactIOError, SchemaViolationError
from intentmotion.utils.file_utils import read_json

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)

_validators: Dict[type, Draft202012Validator] = {}


def json_pointer(path) -> str:
    parts = [str(part).replace("~", "~0").replace("/", "~1") for part in path]
    return "/" + "/".join(parts) if parts else ""


def _validator_for(model: Type[BaseModel]) -> Draft202012Validator:
    if model not in _validators:
        _validators[model] = Draft202012Validator(model.model_json_schema())
    return _validators[model]


def validate_document(data: Any, model: Type[ModelT], source: Optional[str] = None) -> ModelT:
    """Structural check with jsonschema, then semantic check with the pydantic model.

    Either failure raises SchemaViolationError carrying the JSON pointer of the first bad location.
    """
    errors = sorted(_validator_for(model).iter_errors(data), key=lambda error: list(error.absolute_path))
    if errors:
        first = errors[0]
        pointer = json_pointer(first.absolute_path)
        logger.error(f"Schema violation in {source or model.__name__} at '{pointer}': {first.message}")
        raise SchemaViolationError(f"{source or model.__name__}: {pointer or '/'}: {first.message}", pointer=pointer, path=source)
    try:
        return model.model_validate(data)
    except ValidationError as e:
        detail = e.errors()[0]
        pointer = json_pointer(detail.get("loc", ()))
        logger.error(f"Invariant violation in {source or model.__name__} at '{pointer}': {detail['msg']}")
        raise SchemaViolationError(f"{source or model.__name__}: {pointer or '/'}: {detail['msg']}", pointer=pointer, path=source)


def load_document(path, model: Type[ModelT]) -> ModelT:
    return validate_document(read_json(path), model, source=str(path))


def load_config_file(path, model: Type[ModelT]) -> ModelT:
    """Experiment config from a JSON or TOML file; absent keys take the model defaults."""
    source = str(path)
    if source.endswith(".toml"):
        try:
            data = toml.load(source)
        except (OSError, toml.TomlDecodeError) as e:
            logger.error(f"Error reading config {source}: {e}")
            raise ArtifactIOError(f"Cannot read config {source}: {e}", path=source)
    else:
        data = read_json(source)
    return validate_document(data, model, source=source)
