import json
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Tuple, Union

from jsonschema import Draft202012Validator, ValidationError

from config.logger_config import get_run_logger
from constants import SCHEMA_DIR


logger = get_run_logger()


class SchemaManager:
    """Load the on-disk JSON Schemas and validate records against them"""

    def __init__(self, schema_dir: Union[str, Path] = SCHEMA_DIR):
        self.schema_dir = Path(schema_dir)

    def get_schema(self, name: str) -> dict:
        """Load and return a schema by file name"""
        schema_file = self.schema_dir / name
        if not schema_file.exists():
            raise FileNotFoundError(f"Schema {name} not found in {self.schema_dir}")

        with open(schema_file, encoding="utf-8") as f:
            return json.load(f)

    def get_validator(self, name: str) -> Draft202012Validator:
        """Compiled validator for a schema"""
        return _compiled_validator(str(self.schema_dir / name))

    def validate(self, name: str, instance) -> None:
        """Raise ValidationError with the most relevant message when instance does not match"""
        validator = self.get_validator(name)
        errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
        if errors:
            raise errors[0]

    def iter_jsonl(self, path: Union[str, Path], name: str) -> Iterator[Tuple[int, dict]]:
        """
        Yield (line number, record) for every non-blank line of a JSONL file.
        Raises ValueError (with the 1-based line number) on malformed JSON or schema mismatch.
        """
        with open(path, encoding="utf-8") as f:
            for line_no, raw in enumerate(f, start=1):
                if not raw.strip():
                    continue
                try:
                    record = json.loads(raw)
                except json.JSONDecodeError as e:
                    raise RecordError(line_no, f"malformed JSON: {e.msg}") from e
                try:
                    self.validate(name, record)
                except ValidationError as e:
                    raise RecordError(line_no, f"schema violation: {e.message}") from e
                yield line_no, record

    def load_json(self, path: Union[str, Path], name: str) -> dict:
        """Load a single JSON document and validate it"""
        with open(path, encoding="utf-8") as f:
            try:
                document = json.load(f)
            except json.JSONDecodeError as e:
                raise RecordError(e.lineno, f"malformed JSON: {e.msg}") from e
        try:
            self.validate(name, document)
        except ValidationError as e:
            raise RecordError(None, f"schema violation: {e.message}") from e
        logger.debug(f"Validated {path} against {name}")
        return document


class RecordError(ValueError):
    """A JSON record failed to parse or validate"""

    def __init__(self, line, message: str):
        super().__init__(message)
        self.line = line
        self.message = message


@lru_cache(maxsize=None)
def _compiled_validator(schema_path: str) -> Draft202012Validator:
    with open(schema_path, encoding="utf-8") as f:
        schema = json.load(f)
    Draft202012Validator.check_schema(schema)
    return Draft202012Validator(schema)


_default_manager = None


def get_schema_manager() -> SchemaManager:
    """Session-wide SchemaManager over constants.SCHEMA_DIR"""
    global _default_manager
    if _default_manager is None:
        _default_manager = SchemaManager()
    return _default_manager
