import glob
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Type, TypeVar, Union

from loguru import logger
from pydantic import BaseModel, ValidationError

from src.io_schemas.config_schemas import TrainPlan
from src.utils.constants import SEED_ENV_VAR
from src.utils.custom_exceptions import ConfigError, IoError


Options = TypeVar("Options", bound=BaseModel)
_DECODER = json.JSONDecoder()


def _skip_blank(text: str, position: int) -> int:
    while position < len(text) and text[position] in " \t\r\n":
        position += 1
    return position


def _locate(text: str, position: int, loc: Sequence[Union[str, int]]) -> int:
    """Offset of the JSON value at path `loc`, or of the deepest container found on it."""
    position = _skip_blank(text, position)
    if not loc or position >= len(text):
        return position
    key, rest = loc[0], loc[1:]

    if text[position] == "{" and isinstance(key, str):
        cursor = _skip_blank(text, position + 1)
        while cursor < len(text) and text[cursor] == '"':
            name, cursor = _DECODER.raw_decode(text, cursor)
            cursor = _skip_blank(text, _skip_blank(text, cursor) + 1)
            if name == key:
                return _locate(text, cursor, rest)
            _, cursor = _DECODER.raw_decode(text, cursor)
            cursor = _skip_blank(text, cursor)
            if cursor < len(text) and text[cursor] == ",":
                cursor = _skip_blank(text, cursor + 1)
    elif text[position] == "[" and isinstance(key, int):
        cursor = _skip_blank(text, position + 1)
        for _ in range(key):
            _, cursor = _DECODER.raw_decode(text, cursor)
            cursor = _skip_blank(text, cursor)
            if cursor >= len(text) or text[cursor] != ",":
                return position
            cursor = _skip_blank(text, cursor + 1)
        return _locate(text, cursor, rest)
    return position


def line_of(text: str, loc: Sequence[Union[str, int]]) -> int:
    """1-based line of the value at `loc` inside a JSON document."""
    try:
        offset = _locate(text, 0, loc)
    except json.JSONDecodeError:
        offset = 0
    return text.count("\n", 0, offset) + 1


def describe_validation_error(error: ValidationError, text: str, source: str) -> str:
    messages = []
    for detail in error.errors():
        loc = [part for part in detail["loc"] if isinstance(part, (str, int))]
        path = ".".join(str(part) for part in loc) or "<root>"
        messages.append(f"{source}:{line_of(text, loc)}: {path}: {detail['msg']}")
    return "\n".join(messages)


def read_json_document(path: Union[str, Path]) -> Tuple[Any, str]:
    """
    Parse a JSON file and return the document with its raw text. Syntax errors become a
    ConfigError anchored to a line.

    Raises
    ------
    IoError
        If the file cannot be read.
    ConfigError
        If the file is not valid JSON.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"Cannot read config: {e.strerror}", path=str(path))
    try:
        return json.loads(text), text
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: invalid JSON: {e.msg} (column {e.colno})")


def load_plan(path: Union[str, Path], overrides: Iterable[str] = ()) -> TrainPlan:
    """
    Load and validate a training plan file.

    Parameters
    ----------
    path : str or Path
        JSON plan file.
    overrides : iterable of str
        `key.path=value` overrides applied after parsing (see `parse_overrides`).

    Raises
    ------
    IoError
        If the plan cannot be read.
    ConfigError
        If the plan is malformed. Field errors name the plan line they come from.

    Returns
    -------
    TrainPlan
        The validated plan.
    """
    document, text = read_json_document(path)
    document = apply_overrides(document, parse_overrides(overrides))
    if isinstance(document, dict) and "seed" not in document and env_seed() is not None:
        document["seed"] = env_seed()
    try:
        plan = TrainPlan.model_validate(document)
    except ValidationError as e:
        raise ConfigError(describe_validation_error(e, text, str(path)))
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}")
    logger.info(f"Loaded plan '{plan.name}' with {len(plan.phases)} phases from {path}")
    return plan


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_overrides(pairs: Iterable[str]) -> Dict[str, Any]:
    """
    Parse `--set` arguments of the form `a.b.c=value`. Values are read as JSON when
    possible (numbers, booleans, lists) and kept as strings otherwise.
    """
    overrides = {}
    for pair in pairs:
        key, separator, raw = pair.partition("=")
        if not separator or not key.strip():
            raise ConfigError(f"Override '{pair}' must look like key=value.")
        overrides[key.strip()] = _parse_value(raw.strip())
    return overrides


def apply_overrides(document: Any, overrides: Dict[str, Any]) -> Any:
    """Set dotted keys inside a nested dict/list document; digits index lists."""
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        node = document
        for depth, part in enumerate(parts):
            last = depth == len(parts) - 1
            if isinstance(node, list):
                if not part.isdigit() or int(part) >= len(node):
                    raise ConfigError(f"Override '{dotted}': '{part}' is not a valid list index.")
                index = int(part)
                if last:
                    node[index] = value
                else:
                    node = node[index]
            elif isinstance(node, dict):
                if last:
                    node[part] = value
                else:
                    node = node.setdefault(part, {})
            else:
                raise ConfigError(f"Override '{dotted}': cannot descend into '{part}'.")
    return document


def env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got '{raw}'.")


def resolve_options(
    options_class: Type[Options],
    flags: Dict[str, Any],
    config_path: Optional[Union[str, Path]] = None,
    overrides: Iterable[str] = (),
) -> Options:
    """
    Merge option sources into one validated options object.

    Later sources win: the class defaults, then the `--config` JSON file, then explicit
    command-line flags (None means "not given"), then `--set` overrides. A `seed` field
    left unset by every source falls back to the GRIDCAST_SEED environment variable.

    Raises
    ------
    ConfigError
        If the merged options do not validate.
    """
    document: Dict[str, Any] = {}
    text, source = "", "<flags>"
    if config_path is not None:
        document, text = read_json_document(config_path)
        source = str(config_path)
        if not isinstance(document, dict):
            raise ConfigError(f"{config_path}: the config file must hold a JSON object.")
    document.update({key: value for key, value in flags.items() if value is not None})
    document = apply_overrides(document, parse_overrides(overrides))
    if "seed" in options_class.model_fields and document.get("seed") is None:
        seed = env_seed()
        if seed is not None:
            document["seed"] = seed

    try:
        options = options_class.model_validate(document)
    except ValidationError as e:
        raise ConfigError(describe_validation_error(e, text, source))
    logger.info(f"Resolved options: {options.model_dump_json()}")
    return options


def resolve_globs(patterns: Iterable[str], base_dir: Union[str, Path]) -> List[Path]:
    """
    Expand movie globs relative to `base_dir` (absolute patterns are kept as is).

    Raises
    ------
    ConfigError
        If a pattern matches no file.
    """
    paths: List[Path] = []
    for pattern in patterns:
        matches = sorted(
            Path(match).resolve()
            for match in glob.glob(str(Path(base_dir) / pattern))
            if Path(match).is_file()
        )
        if not matches:
            raise ConfigError(f"Dataset pattern '{pattern}' matches no file under {base_dir}.")
        paths.extend(match for match in matches if match not in paths)
    return paths
