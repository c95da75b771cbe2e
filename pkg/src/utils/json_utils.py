"""JSON utility functions."""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, TextIO, Tuple, Union

logger = logging.getLogger(__name__)

_TRUE_STRINGS = {"1", "true", "t", "yes", "y"}
_FALSE_STRINGS = {"0", "false", "f", "no", "n", ""}


def parse_bool(value: Any) -> bool:
    """
    Coerce a record field into a boolean.

    Accepts real booleans, 0/1 integers and the strings 0/1/true/false/yes/no
    (case-insensitive). An empty string or None reads as False.

    Raises:
        ValueError: for any other value
    """
    if value is None:
        return False
    if isinstance(value, bool):
        return value
    if isinstance(value, int) and value in (0, 1):
        return bool(value)
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in _TRUE_STRINGS:
            return True
        if lowered in _FALSE_STRINGS:
            return False
    raise ValueError(f"not a boolean: {value!r}")


def dumps_line(record: Dict[str, Any]) -> str:
    """Serialize one record as a compact JSON line with a stable layout."""
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def iter_json_lines(stream: TextIO) -> Iterator[Tuple[int, Union[Dict[str, Any], None]]]:
    """
    Iterate over a line-delimited JSON stream.

    Blank lines are skipped. Lines that are not JSON objects are yielded as
    ``(line_number, None)`` so the caller can apply its own malformed-record
    policy.

    Yields:
        ``(line_number, record)`` pairs, line numbers 1-based
    """
    for line_number, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            logger.debug(f"Line {line_number} is not valid JSON: {e}")
            yield line_number, None
            continue
        if not isinstance(record, dict):
            yield line_number, None
            continue
        yield line_number, record


def write_json(path: Path, payload: Any) -> None:
    """Write a JSON document with a trailing newline and a fixed indentation."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, indent=2, ensure_ascii=False, allow_nan=False))
        fh.write("\n")
